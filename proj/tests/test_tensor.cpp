#include <doctest.h>

#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "ranknet/errors.hpp"
#include "ranknet/profile.hpp"
#include "ranknet/random.hpp"
#include "ranknet/tensor.hpp"

using namespace ranknet;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  return c;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.values()) v = 2.0 * uniform01(rng) - 1.0;
  return m;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double max_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("matmul against the triple loop") {
  Rng rng(7);
  const Matrix a = random_matrix(7, 5, rng);
  const Matrix b = random_matrix(5, 4, rng);
  CHECK(max_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);

  for (std::size_t m : {1u, 3u, 4u, 5u, 9u, 17u}) {
    const Matrix x = random_matrix(m, 13, rng);
    const Matrix y = random_matrix(13, 11, rng);
    CHECK(max_diff(matmul(x, y), naive_matmul(x, y)) < 1e-12);
  }
}

TEST_CASE("matmul trivial cases") {
  Rng rng(3);
  const Matrix m = random_matrix(3, 3, rng);
  CHECK(matmul(Matrix::identity(3), m) == m);
  CHECK(matmul(Matrix::from_rows({{2}}), Matrix::from_rows({{3}})) == Matrix::from_rows({{6}}));
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("transposed products match explicit transposes") {
  Rng rng(11);
  const Matrix a = random_matrix(6, 4, rng);
  const Matrix b = random_matrix(6, 3, rng);
  CHECK(max_diff(matmul_tn(a, b), naive_matmul(transpose(a), b)) < 1e-12);
  const Matrix c = random_matrix(5, 4, rng);
  CHECK(max_diff(matmul_nt(a, c), naive_matmul(a, transpose(c))) < 1e-12);
  Matrix acc(4, 3, 1.0);
  matmul_tn_acc(a, b, acc);
  Matrix expect = naive_matmul(transpose(a), b);
  for (double& v : expect.values()) v += 1.0;
  CHECK(max_diff(acc, expect) < 1e-12);
}

TEST_CASE("matmul rows do not depend on the batch they sit in") {
  Rng rng(5);
  const Matrix w = random_matrix(13, 160, rng);
  const Matrix big = random_matrix(37, 13, rng);
  const Matrix full = matmul(big, w);
  for (std::size_t r : {0u, 4u, 35u, 36u}) {
    Matrix one(1, 13);
    for (std::size_t c = 0; c < 13; ++c) one(0, c) = big(r, c);
    const Matrix single = matmul(one, w);
    for (std::size_t c = 0; c < 160; ++c) CHECK(single(0, c) == full(r, c));
  }
}

TEST_CASE("matmul associativity property") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 8, k = 1 + rng() % 8, n = 1 + rng() % 8, p = 1 + rng() % 8;
    const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng),
                 c = random_matrix(n, p, rng);
    CHECK(max_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("elementwise kernels") {
  Rng rng(2);
  const Matrix m = random_matrix(3, 4, rng);
  CHECK(hadamard(m, Matrix(3, 4, 1.0)) == m);
  CHECK(add(m, Matrix(3, 4)) == m);
  CHECK(add_bias_rows(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{10, 20}})) ==
        Matrix::from_rows({{11, 22}, {13, 24}}));
  CHECK_THROWS_AS(hadamard(m, Matrix(4, 3)), ShapeError);
  CHECK_THROWS_AS(add(m, Matrix(3, 3)), ShapeError);
  CHECK_THROWS_AS(add_bias_rows(m, Matrix(1, 3)), ShapeError);
  CHECK(col_sums(Matrix::from_rows({{1, 2}, {3, 4}})) == Matrix::from_rows({{4, 6}}));
}

TEST_CASE("activations") {
  CHECK(sigmoid(Matrix(1, 1, 0.0))(0, 0) == 0.5);
  CHECK(softplus(Matrix(1, 1, 0.0))(0, 0) == doctest::Approx(0.6931472).epsilon(1e-7));
  const long double oracle = 50.0L + std::log1p(std::exp(-50.0L));
  const double sp50 = softplus(Matrix(1, 1, 50.0))(0, 0);
  CHECK(std::isfinite(sp50));
  CHECK(std::abs(static_cast<long double>(sp50) - oracle) < 1e-13L);
  CHECK(std::isfinite(softplus(Matrix(1, 1, 1000.0))(0, 0)));
  CHECK(softplus(Matrix(1, 1, -40.0))(0, 0) > 0.0);

  for (double x = -30.0; x <= 30.0; x += 0.37) {
    CHECK(std::abs(sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0) < 1e-12);
    const double eps = 1e-5;
    const double fd = (sigmoid_scalar(x + eps) - sigmoid_scalar(x - eps)) / (2 * eps);
    const double s = sigmoid_scalar(x);
    CHECK(std::abs(fd - s * (1 - s)) < 1e-6);
  }
  const Matrix t = tanh(Matrix::from_rows({{-0.5, 0.0, 2.0}}));
  CHECK(t(0, 0) == std::tanh(-0.5));
  CHECK(t(0, 2) == std::tanh(2.0));
  CHECK(all_finite(sigmoid(Matrix::from_rows({{-800, 800}}))));
}

TEST_CASE("column blocks, gather and scatter") {
  const Matrix x = Matrix::from_rows({{1, 2, 3, 4}, {5, 6, 7, 8}});
  CHECK(slice_cols(x, 1, 2) == Matrix::from_rows({{2, 3}, {6, 7}}));
  const Matrix a = slice_cols(x, 0, 1), b = slice_cols(x, 1, 3);
  CHECK(concat_cols({&a, &b}) == x);
  CHECK(tanh_cols(x, 2, 2)(1, 0) == std::tanh(7.0));
  const std::vector<std::size_t> idx{1, 0, 1};
  const Matrix g = gather_rows(x, idx);
  CHECK(g.rows() == 3);
  CHECK(g(0, 3) == 8.0);
  Matrix table(2, 4);
  scatter_add_rows(table, idx, g);
  CHECK(table(1, 0) == 10.0);
  CHECK(table(0, 0) == 1.0);
  CHECK_THROWS_AS(gather_rows(x, std::vector<std::size_t>{2}), ShapeError);
}

TEST_CASE("profiler accounting") {
  reset_profile();
  set_profiling_enabled(false);
  matmul(Matrix(4, 4, 1.0), Matrix(4, 4, 1.0));
  tanh(Matrix(4, 4, 1.0));
  {
    const OpProfile p = collect_profile();
    for (auto c : kAllOpClasses) {
      CHECK(p[c].calls == 0);
      CHECK(p[c].walltime_ns == 0);
    }
  }

  set_profiling_enabled(true);
  {
    auto outer = profile_scope(OpClass::Other);
    auto inner = profile_scope(OpClass::Tanh);
    volatile double sink = 0;
    for (int i = 0; i < 20000; ++i) sink = sink + std::tanh(i * 1e-4);
  }
  matmul(Matrix(8, 8, 1.0), Matrix(8, 8, 1.0));
  std::thread worker([] { hadamard(Matrix(8, 8, 1.0), Matrix(8, 8, 2.0)); });
  worker.join();
  set_profiling_enabled(false);

  const OpProfile p = collect_profile();
  CHECK(p[OpClass::Other].calls == 1);
  CHECK(p[OpClass::Tanh].calls == 1);
  CHECK(p[OpClass::Tanh].walltime_ns > 0);
  CHECK(p[OpClass::MatMul].calls == 1);
  CHECK(p[OpClass::Mul].calls == 1);
  double total = 0.0;
  for (auto c : kAllOpClasses) total += p.percent(c);
  CHECK(std::abs(total - 100.0) < 0.1);

  const auto j = p.to_json();
  CHECK(j.contains("MatMul"));
  CHECK(j["Tanh"]["calls"].get<std::uint64_t>() == 1);
  const OpProfile back = OpProfile::from_json(j);
  for (auto c : kAllOpClasses) {
    CHECK(back[c].calls == p[c].calls);
    CHECK(back[c].walltime_ns == p[c].walltime_ns);
  }
  reset_profile();
  CHECK(collect_profile().total_ns() == 0);
}
