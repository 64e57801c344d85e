#include <doctest.h>
#include <omp.h>

#include "lamar/kernels.hpp"
#include "test_util.hpp"

using namespace lamar;
using kernels::Trans;
using test::max_abs_diff;
using test::random_tensor;

namespace {

Tensor shaped(std::size_t r, std::size_t c, Trans t, std::uint64_t seed) {
  return t == Trans::kNo ? random_tensor(r, c, seed) : random_tensor(c, r, seed);
}

}  // namespace

TEST_CASE("gemm matches reference for every transpose combination") {
  // Large enough to take the parallel path.
  const std::size_t m = 70, k = 65, n = 80;
  for (Trans ta : {Trans::kNo, Trans::kYes}) {
    for (Trans tb : {Trans::kNo, Trans::kYes}) {
      const Tensor a = shaped(m, k, ta, 1);
      const Tensor b = shaped(k, n, tb, 2);
      for (bool acc : {false, true}) {
        Tensor c1 = random_tensor(m, n, 3), c2 = c1;
        kernels::gemm(a, ta, b, tb, c1, acc);
        kernels::reference::gemm(a, ta, b, tb, c2, acc);
        CHECK(max_abs_diff(c1, c2) < 1e-10);
      }
    }
  }
}

TEST_CASE("gemm rejects mismatched shapes") {
  Tensor a(2, 3), b(4, 2), c(2, 2);
  CHECK_THROWS(kernels::gemm(a, Trans::kNo, b, Trans::kNo, c, false));
}

TEST_CASE("parallel kernels are bitwise independent of thread count") {
  const Tensor a = random_tensor(96, 128, 4);
  const Tensor b = random_tensor(128, 96, 5);
  const int saved = omp_get_max_threads();
  Tensor c1(96, 96), c4(96, 96);
  omp_set_num_threads(1);
  kernels::gemm(a, Trans::kNo, b, Trans::kNo, c1, false);
  omp_set_num_threads(4);
  kernels::gemm(a, Trans::kNo, b, Trans::kNo, c4, false);
  omp_set_num_threads(saved);
  CHECK(c1 == c4);
}

TEST_CASE("softmax forward and backward match reference") {
  const Tensor x = random_tensor(300, 7, 6, 3.0);
  Tensor y1(300, 7), y2(300, 7);
  kernels::softmax_rows(x, y1);
  kernels::reference::softmax_rows(x, y2);
  CHECK(max_abs_diff(y1, y2) < 1e-14);
  for (std::size_t r = 0; r < y1.rows(); ++r) {
    Real s = 0.0;
    for (Real v : y1.row_span(r)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  const Tensor dy = random_tensor(300, 7, 7);
  Tensor dx1(300, 7), dx2(300, 7);
  kernels::softmax_rows_backward(y1, dy, dx1);
  kernels::reference::softmax_rows_backward(y1, dy, dx2);
  CHECK(max_abs_diff(dx1, dx2) < 1e-12);
}

TEST_CASE("softmax is stable for large logits") {
  Tensor x = Tensor::from_rows({{1000.0, 1000.0, -1000.0}});
  Tensor y(1, 3);
  kernels::softmax_rows(x, y);
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(0, 2) == 0.0);
}

TEST_CASE("layer norm forward and backward match reference") {
  const std::size_t rows = 200, cols = 33;
  const Tensor x = random_tensor(rows, cols, 8, 2.0);
  const Tensor gamma = random_tensor(1, cols, 9);
  const Tensor beta = random_tensor(1, cols, 10);
  Tensor y1(rows, cols), y2(rows, cols), m1(rows, 1), m2(rows, 1), r1(rows, 1), r2(rows, 1);
  kernels::layer_norm_rows(x, gamma, beta, y1, m1, r1);
  kernels::reference::layer_norm_rows(x, gamma, beta, y2, m2, r2);
  CHECK(max_abs_diff(y1, y2) < 1e-12);
  const Tensor dy = random_tensor(rows, cols, 11);
  Tensor dx1(rows, cols), dx2(rows, cols), dg1(1, cols), dg2(1, cols), db1(1, cols), db2(1, cols);
  kernels::layer_norm_rows_backward(x, gamma, m1, r1, dy, dx1, dg1, db1);
  kernels::reference::layer_norm_rows_backward(x, gamma, m2, r2, dy, dx2, dg2, db2);
  CHECK(max_abs_diff(dx1, dx2) < 1e-10);
  CHECK(max_abs_diff(dg1, dg2) < 1e-10);
  CHECK(max_abs_diff(db1, db2) < 1e-10);
}

TEST_CASE("gelu matches reference and the erf closed form") {
  const Tensor x = random_tensor(100, 500, 12, 3.0);
  Tensor y1(100, 500), y2(100, 500);
  kernels::gelu(x, y1);
  kernels::reference::gelu(x, y2);
  CHECK(max_abs_diff(y1, y2) < 1e-15);
  CHECK(kernels::gelu_scalar(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(kernels::gelu_scalar(0.0) == 0.0);
  const Tensor dy = random_tensor(100, 500, 13);
  Tensor dx1(100, 500), dx2(100, 500);
  kernels::gelu_backward(x, dy, dx1);
  kernels::reference::gelu_backward(x, dy, dx2);
  CHECK(max_abs_diff(dx1, dx2) < 1e-14);
  const Real h = 1e-6;
  for (Real v : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
    const Real num = (kernels::gelu_scalar(v + h) - kernels::gelu_scalar(v - h)) / (2 * h);
    CHECK(kernels::gelu_grad_scalar(v) == doctest::Approx(num).epsilon(1e-8));
  }
}
