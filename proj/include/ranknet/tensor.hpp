#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ranknet {

/// Dense row-major matrix of doubles. Every operand in the library is 2-D.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws ShapeError unless data.size() == rows*cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Kernels. All are pure, thread-safe, and charge their walltime to the
// matching OpClass when profiling is on. Shape violations throw ShapeError.

/// a[m×k] · b[k×n]
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b for a[m×k], b[m×n] -> [k×n]
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// out += aᵀ · b (gradient accumulation form of matmul_tn)
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
/// a · bᵀ for a[m×k], b[n×k] -> [m×n]
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
/// a[m×n] + bias[1×n] broadcast over rows.
Matrix add_bias_rows(const Matrix& a, const Matrix& bias);
/// Column sums as a 1×n row (bias gradient).
Matrix col_sums(const Matrix& a);

Matrix sigmoid(const Matrix& x);
Matrix tanh(const Matrix& x);
/// ln(1+e^x) in the overflow-safe form max(x,0) + ln(1+e^{-|x|}).
Matrix softplus(const Matrix& x);

/// Activation over the column block [c0, c0+n) of x.
Matrix sigmoid_cols(const Matrix& x, std::size_t c0, std::size_t n);
Matrix tanh_cols(const Matrix& x, std::size_t c0, std::size_t n);
/// dy ⊙ y ⊙ (1 − y), the sigmoid adjoint expressed through its output y.
Matrix sigmoid_backward(const Matrix& dy, const Matrix& y);
/// dy ⊙ (1 − y²), the tanh adjoint expressed through its output y.
Matrix tanh_backward(const Matrix& dy, const Matrix& y);

/// Horizontal concatenation of equally tall blocks.
Matrix concat_cols(std::initializer_list<const Matrix*> blocks);
Matrix slice_cols(const Matrix& x, std::size_t c0, std::size_t n);
/// Rows of `table` selected by `index`.
Matrix gather_rows(const Matrix& table, std::span<const std::size_t> index);
/// table.row(index[r]) += src.row(r)
void scatter_add_rows(Matrix& table, std::span<const std::size_t> index, const Matrix& src);

double sum(const Matrix& a);
double max_abs(const Matrix& a);
bool all_finite(const Matrix& a);

// Scalar forms shared with the matrix kernels.
double sigmoid_scalar(double x);
double softplus_scalar(double x);

}  // namespace ranknet
