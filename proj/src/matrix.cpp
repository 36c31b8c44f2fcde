#include "hmdn/matrix.hpp"

#include <cmath>
#include <string>

#include "hmdn/errors.hpp"

namespace hmdn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
  std::size_t r = 0;
  for (const auto& row : rows) {
    require(row.size() == m.cols(), "from_rows: ragged row " + std::to_string(r));
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::fabs(v));
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(),
          "matmul: " + shape_str(a) + " incompatible with " + shape_str(b));
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_atb(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(),
          "matmul_atb: " + shape_str(a) + " incompatible with " + shape_str(b));
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* br = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
    }
  }
  return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(),
          "matmul_abt: " + shape_str(a) + " incompatible with " + shape_str(b));
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.row(j).data();
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

void add_scaled(Matrix& out, const Matrix& m, double scale) {
  require(out.same_shape(m), "add_scaled: shape mismatch");
  double* o = out.data().data();
  const double* p = m.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] += scale * p[i];
}

void add_row_broadcast(Matrix& m, const Matrix& bias) {
  require(bias.rows() == 1 && bias.cols() == m.cols(),
          "add_row_broadcast: bias " + shape_str(bias) + " vs " + shape_str(m));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double* row = m.row(r).data();
    const double* b = bias.row(0).data();
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += b[c];
  }
}

Matrix column_sums(const Matrix& m) {
  Matrix s(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.row(r).data();
    for (std::size_t c = 0; c < m.cols(); ++c) s(0, c) += row[c];
  }
  return s;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "hadamard: shape mismatch");
  Matrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

void init_glorot(Matrix& weight, Rng& rng) {
  const double fan_in = static_cast<double>(weight.rows());
  const double fan_out = static_cast<double>(weight.cols());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : weight.data()) v = rng.uniform(-bound, bound);
}

void init_normal(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
}

}  // namespace hmdn
