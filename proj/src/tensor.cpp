#include "ranknet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ranknet/errors.hpp"
#include "ranknet/profile.hpp"

namespace ranknet {
namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

// c[m×n] += a[m×k] · b[k×n]. Four output rows share each pass over a row of b;
// every element still accumulates over p in ascending order, so a row's result
// does not depend on how many rows the call carries.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = c + i * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const double* __restrict br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = br[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = ai[p];
      const double* __restrict br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += v * br[j];
    }
  }
}

template <class F>
Matrix map(const Matrix& x, F f) {
  Matrix out(x.rows(), x.cols());
  const auto in = x.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

template <class F>
Matrix map_cols(const Matrix& x, std::size_t c0, std::size_t n, F f) {
  if (c0 + n > x.cols()) throw ShapeError("column block out of range for " + shape_str(x));
  Matrix out(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* src = x.row(r).data() + c0;
    double* dst = out.row(r).data();
    for (std::size_t j = 0; j < n; ++j) dst[j] = f(src[j]);
  }
  return out;
}

template <class F>
Matrix zip(const Matrix& a, const Matrix& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Matrix out(a.rows(), a.cols());
  const auto av = a.values();
  const auto bv = b.values();
  auto o = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) o[i] = f(av[i], bv[i]);
  return out;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::MatMul);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
  }
  Matrix c(a.rows(), b.cols());
  gemm_acc(a.values().data(), b.values().data(), c.values().data(), a.rows(), a.cols(), b.cols());
  return c;
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  ProfileScope scope(OpClass::MatMul);
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b) + " -> " +
                     shape_str(out));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  std::size_t p = 0;
  for (; p + 4 <= m; p += 4) {
    const double* __restrict b0 = bv + p * n;
    const double* __restrict b1 = b0 + n;
    const double* __restrict b2 = b1 + n;
    const double* __restrict b3 = b2 + n;
    for (std::size_t i = 0; i < k; ++i) {
      const double v0 = av[p * k + i], v1 = av[(p + 1) * k + i];
      const double v2 = av[(p + 2) * k + i], v3 = av[(p + 3) * k + i];
      double* __restrict oi = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; p < m; ++p) {
    const double* __restrict br = bv + p * n;
    for (std::size_t i = 0; i < k; ++i) {
      const double v = av[p * k + i];
      double* __restrict oi = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += v * br[j];
    }
  }
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::MatMul);
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  }
  const std::size_t n = b.rows(), k = b.cols();
  std::vector<double> bt(k * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < k; ++c) bt[c * n + r] = b(r, c);
  Matrix out(a.rows(), n);
  gemm_acc(a.values().data(), bt.data(), out.values().data(), a.rows(), k, n);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::Mul);
  return zip(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix scale(const Matrix& a, double s) {
  ProfileScope scope(OpClass::Mul);
  return map(a, [s](double x) { return x * s; });
}

Matrix add(const Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::Add);
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix sub(const Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::Add);
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

void add_inplace(Matrix& a, const Matrix& b) {
  ProfileScope scope(OpClass::Add);
  require_same_shape(a, b, "add_inplace");
  auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

Matrix add_bias_rows(const Matrix& a, const Matrix& bias) {
  ProfileScope scope(OpClass::Add);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias_rows: " + shape_str(a) + " + " + shape_str(bias));
  }
  Matrix out(a.rows(), a.cols());
  const double* bv = bias.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* src = a.row(r).data();
    double* dst = out.row(r).data();
    for (std::size_t j = 0; j < a.cols(); ++j) dst[j] = src[j] + bv[j];
  }
  return out;
}

Matrix col_sums(const Matrix& a) {
  ProfileScope scope(OpClass::Add);
  Matrix out(1, a.cols());
  double* o = out.values().data();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* src = a.row(r).data();
    for (std::size_t j = 0; j < a.cols(); ++j) o[j] += src[j];
  }
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Matrix sigmoid(const Matrix& x) {
  ProfileScope scope(OpClass::Sigmoid);
  return map(x, sigmoid_scalar);
}

Matrix tanh(const Matrix& x) {
  ProfileScope scope(OpClass::Tanh);
  return map(x, [](double v) { return std::tanh(v); });
}

Matrix softplus(const Matrix& x) {
  ProfileScope scope(OpClass::Other);
  return map(x, softplus_scalar);
}

Matrix sigmoid_cols(const Matrix& x, std::size_t c0, std::size_t n) {
  ProfileScope scope(OpClass::Sigmoid);
  return map_cols(x, c0, n, sigmoid_scalar);
}

Matrix tanh_cols(const Matrix& x, std::size_t c0, std::size_t n) {
  ProfileScope scope(OpClass::Tanh);
  return map_cols(x, c0, n, [](double v) { return std::tanh(v); });
}

Matrix sigmoid_backward(const Matrix& dy, const Matrix& y) {
  ProfileScope scope(OpClass::Sigmoid);
  return zip(dy, y, "sigmoid_backward", [](double d, double s) { return d * s * (1.0 - s); });
}

Matrix tanh_backward(const Matrix& dy, const Matrix& y) {
  ProfileScope scope(OpClass::Tanh);
  return zip(dy, y, "tanh_backward", [](double d, double t) { return d * (1.0 - t * t); });
}

Matrix concat_cols(std::initializer_list<const Matrix*> blocks) {
  ProfileScope scope(OpClass::Other);
  if (blocks.size() == 0) return {};
  const std::size_t rows = (*blocks.begin())->rows();
  std::size_t cols = 0;
  for (const auto* b : blocks) {
    if (b->rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += b->cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.row(r).data();
    for (const auto* b : blocks) {
      const auto src = b->row(r);
      std::copy(src.begin(), src.end(), dst);
      dst += src.size();
    }
  }
  return out;
}

Matrix slice_cols(const Matrix& x, std::size_t c0, std::size_t n) {
  ProfileScope scope(OpClass::Other);
  return map_cols(x, c0, n, [](double v) { return v; });
}

Matrix gather_rows(const Matrix& table, std::span<const std::size_t> index) {
  ProfileScope scope(OpClass::Other);
  Matrix out(index.size(), table.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= table.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " >= " +
                       std::to_string(table.rows()));
    }
    const auto src = table.row(index[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void scatter_add_rows(Matrix& table, std::span<const std::size_t> index, const Matrix& src) {
  ProfileScope scope(OpClass::Add);
  if (src.rows() != index.size() || src.cols() != table.cols()) {
    throw ShapeError("scatter_add_rows: " + shape_str(src) + " into " + shape_str(table));
  }
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= table.rows()) throw ShapeError("scatter_add_rows: index out of range");
    auto dst = table.row(index[r]);
    const auto s = src.row(r);
    for (std::size_t j = 0; j < s.size(); ++j) dst[j] += s[j];
  }
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace ranknet
