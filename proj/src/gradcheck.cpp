#include "hmdn/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "hmdn/errors.hpp"

namespace hmdn {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const auto& b : blocks) {
    os << (b.passed ? "  ok   " : "  FAIL ") << b.name << "  max_rel_err=" << b.max_rel_err
       << " (" << b.worst_row << "," << b.worst_col << ")"
       << " checked=" << b.checked;
    if (b.excluded > 0) os << " excluded=" << b.excluded;
    os << "\n";
  }
  return os.str();
}

GradCheckReport grad_check(const LossFn& loss, std::vector<ParamBlockRef> blocks,
                           double step, double tolerance, double denom_floor) {
  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;

  const FdEval base1 = loss();
  const FdEval base2 = loss();
  if (base1.value != base2.value) {
    throw UsageError("grad_check: loss closure is not deterministic");
  }

  for (auto& block : blocks) {
    BlockReport br;
    br.name = block.name;
    Matrix& p = *block.params;
    const Matrix& a = *block.analytic_grad;
    if (!p.same_shape(a)) {
      throw ShapeError("grad_check: analytic grad shape mismatch for block '" +
                       block.name + "'");
    }
    for (std::size_t r = 0; r < p.rows(); ++r) {
      if (block.frozen_rows.count(r)) continue;
      for (std::size_t c = 0; c < p.cols(); ++c) {
        const double saved = p(r, c);
        p(r, c) = saved + step;
        const FdEval up = loss();
        p(r, c) = saved - step;
        const FdEval down = loss();
        p(r, c) = saved;
        if (up.excluded || down.excluded) {
          ++br.excluded;
          continue;
        }
        const double fd = (up.value - down.value) / (2.0 * step);
        const double analytic = a(r, c);
        const double denom = std::max(std::fabs(fd) + std::fabs(analytic), denom_floor);
        const double rel = std::fabs(fd - analytic) / denom;
        ++br.checked;
        if (rel > br.max_rel_err) {
          br.max_rel_err = rel;
          br.worst_row = r;
          br.worst_col = c;
        }
      }
    }
    br.passed = br.max_rel_err <= tolerance;
    report.passed = report.passed && br.passed;
    report.max_rel_err = std::max(report.max_rel_err, br.max_rel_err);
    report.excluded += br.excluded;
    report.blocks.push_back(std::move(br));
  }
  return report;
}

}  // namespace hmdn
