#include "lamar/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lamar/error.hpp"

namespace lamar::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::int64_t kParallelWork = 1 << 15;

std::size_t op_rows(const Tensor& t, Trans tr) { return tr == Trans::kNo ? t.rows() : t.cols(); }
std::size_t op_cols(const Tensor& t, Trans tr) { return tr == Trans::kNo ? t.cols() : t.rows(); }

void check_gemm_shapes(const Tensor& a, Trans ta, const Tensor& b, Trans tb, const Tensor& c) {
  if (op_cols(a, ta) != op_rows(b, tb) || c.rows() != op_rows(a, ta) ||
      c.cols() != op_cols(b, tb)) {
    throw Error(ErrorCode::kShapeMismatch, "gemm: incompatible shapes " + a.shape_string() +
                                               " x " + b.shape_string() + " -> " +
                                               c.shape_string());
  }
}

constexpr Real kInvSqrt2 = 0.70710678118654752440;
constexpr Real kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Real gelu_scalar(Real x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

Real gelu_grad_scalar(Real x) {
  const Real cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const Real pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate) {
  check_gemm_shapes(a, ta, b, tb, c);
  const std::int64_t m = static_cast<std::int64_t>(c.rows());
  const std::size_t n = c.cols();
  const std::size_t k = op_cols(a, ta);
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  Real* pc = c.data().data();
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  const bool parallel = m * static_cast<std::int64_t>(n * k) > kParallelWork;

  if (tb == Trans::kNo) {
    // Row-of-c update: c[i,:] += a(i,kk) * b[kk,:]; contiguous inner loop.
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t i = 0; i < m; ++i) {
      Real* crow = pc + i * n;
      if (!accumulate) std::fill(crow, crow + n, 0.0);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const Real aik = ta == Trans::kNo ? pa[i * lda + kk] : pa[kk * lda + i];
        if (aik == 0.0) continue;
        const Real* brow = pb + kk * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  } else {
    // c[i,j] = dot(op(a) row i, b row j).
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t i = 0; i < m; ++i) {
      Real* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const Real* brow = pb + j * ldb;
        Real sum = 0.0;
        if (ta == Trans::kNo) {
          const Real* arow = pa + i * lda;
          for (std::size_t kk = 0; kk < k; ++kk) sum += arow[kk] * brow[kk];
        } else {
          for (std::size_t kk = 0; kk < k; ++kk) sum += pa[kk * lda + i] * brow[kk];
        }
        crow[j] = accumulate ? crow[j] + sum : sum;
      }
    }
  }
}

void softmax_rows(const Tensor& x, Tensor& y) {
  const std::int64_t rows = static_cast<std::int64_t>(x.rows());
  const std::size_t cols = x.cols();
#pragma omp parallel for schedule(static) if (rows * static_cast<std::int64_t>(cols) > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    auto in = x.row_span(r);
    auto out = y.row_span(r);
    const Real mx = *std::max_element(in.begin(), in.end());
    Real sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const Real inv = 1.0 / sum;
    for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
  }
}

void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  const std::int64_t rows = static_cast<std::int64_t>(y.rows());
  const std::size_t cols = y.cols();
#pragma omp parallel for schedule(static) if (rows * static_cast<std::int64_t>(cols) > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    auto yr = y.row_span(r);
    auto gr = dy.row_span(r);
    auto dr = dx.row_span(r);
    Real dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
    for (std::size_t c = 0; c < cols; ++c) dr[c] += yr[c] * (gr[c] - dot);
  }
}

void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& y,
                     Tensor& mean, Tensor& rstd) {
  const std::int64_t rows = static_cast<std::int64_t>(x.rows());
  const std::size_t cols = x.cols();
  const Real inv_n = 1.0 / static_cast<Real>(cols);
#pragma omp parallel for schedule(static) if (rows * static_cast<std::int64_t>(cols) > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    auto in = x.row_span(r);
    auto out = y.row_span(r);
    Real mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu *= inv_n;
    Real var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var *= inv_n;
    const Real rs = 1.0 / std::sqrt(var + kLayerNormEps);
    mean[r] = mu;
    rstd[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) out[c] = (in[c] - mu) * rs * gamma[c] + beta[c];
  }
}

void layer_norm_rows_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                              const Tensor& rstd, const Tensor& dy, Tensor& dx,
                              Tensor& dgamma, Tensor& dbeta) {
  const std::int64_t rows = static_cast<std::int64_t>(x.rows());
  const std::int64_t cols = static_cast<std::int64_t>(x.cols());
  const bool parallel = rows * cols > kParallelWork;
  if (!dx.empty()) {
    const Real inv_n = 1.0 / static_cast<Real>(cols);
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t r = 0; r < rows; ++r) {
      auto in = x.row_span(r);
      auto g = dy.row_span(r);
      auto out = dx.row_span(r);
      const Real mu = mean[r];
      const Real rs = rstd[r];
      Real sum_g = 0.0;
      Real sum_gx = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) {
        const Real gh = g[c] * gamma[c];
        sum_g += gh;
        sum_gx += gh * (in[c] - mu) * rs;
      }
      for (std::int64_t c = 0; c < cols; ++c) {
        const Real xhat = (in[c] - mu) * rs;
        out[c] += rs * (g[c] * gamma[c] - inv_n * sum_g - xhat * inv_n * sum_gx);
      }
    }
  }
  if (!dgamma.empty() || !dbeta.empty()) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::int64_t c = 0; c < cols; ++c) {
      Real sg = 0.0;
      Real sb = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const Real g = dy(r, c);
        sg += g * (x(r, c) - mean[r]) * rstd[r];
        sb += g;
      }
      if (!dgamma.empty()) dgamma[c] += sg;
      if (!dbeta.empty()) dbeta[c] += sb;
    }
  }
}

void gelu(const Tensor& x, Tensor& y) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  const Real* in = x.data().data();
  Real* out = y.data().data();
#pragma omp parallel for schedule(static) if (n > kParallelWork / 8)
  for (std::int64_t i = 0; i < n; ++i) out[i] = gelu_scalar(in[i]);
}

void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  const Real* in = x.data().data();
  const Real* g = dy.data().data();
  Real* out = dx.data().data();
#pragma omp parallel for schedule(static) if (n > kParallelWork / 8)
  for (std::int64_t i = 0; i < n; ++i) out[i] += g[i] * gelu_grad_scalar(in[i]);
}

}  // namespace lamar::kernels
