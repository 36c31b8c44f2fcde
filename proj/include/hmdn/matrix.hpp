#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "hmdn/rng.hpp"

namespace hmdn {

/// Dense row-major matrix of doubles; the one numeric container used for
/// weights, biases, activations, embedding tables and codebooks.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v) { data_.assign(data_.size(), v); }
  bool all_finite() const;
  double max_abs() const;

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// a (m x k) times b (k x n).
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T b computed without materializing the transpose: (k x m)^T is a (m x k).
Matrix matmul_atb(const Matrix& a, const Matrix& b);
/// a b^T computed without materializing the transpose.
Matrix matmul_abt(const Matrix& a, const Matrix& b);

/// out += scale * m.
void add_scaled(Matrix& out, const Matrix& m, double scale);
/// Broadcast-add a 1 x n bias to every row.
void add_row_broadcast(Matrix& m, const Matrix& bias);
/// 1 x n matrix holding per-column sums.
Matrix column_sums(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

/// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(...)) weight init, zero elsewhere.
void init_glorot(Matrix& weight, Rng& rng);
void init_normal(Matrix& m, Rng& rng, double stddev);

}  // namespace hmdn
