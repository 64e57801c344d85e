#pragma once

#include "lamar/tensor.hpp"

// Dense row-wise compute kernels. The top-level functions are OpenMP-parallel
// over output rows (or columns for column reductions); every output element is
// produced by exactly one thread with a fixed accumulation order, so results do
// not depend on the thread count. `reference::` holds plain serial loops that
// the tests and the benchmark compare against.
namespace lamar::kernels {

enum class Trans { kNo, kYes };

inline constexpr Real kLayerNormEps = 1e-5;

// c = op(a) * op(b), or c += op(a) * op(b) when accumulate is set.
// c must already have the result shape.
void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate);

void softmax_rows(const Tensor& x, Tensor& y);
// dx += softmax Jacobian^T * dy, given the forward output y.
void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

// y = (x - mean) * rstd * gamma + beta per row; mean/rstd are rows x 1 caches.
void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& y,
                     Tensor& mean, Tensor& rstd);
// Accumulates into dx, dgamma and dbeta (any of which may be empty to skip).
void layer_norm_rows_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                              const Tensor& rstd, const Tensor& dy, Tensor& dx,
                              Tensor& dgamma, Tensor& dbeta);

// Exact (erf) GELU.
void gelu(const Tensor& x, Tensor& y);
void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx);

Real gelu_scalar(Real x);
Real gelu_grad_scalar(Real x);

namespace reference {

void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate);
void softmax_rows(const Tensor& x, Tensor& y);
void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx);
void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& y,
                     Tensor& mean, Tensor& rstd);
void layer_norm_rows_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                              const Tensor& rstd, const Tensor& dy, Tensor& dx,
                              Tensor& dgamma, Tensor& dbeta);
void gelu(const Tensor& x, Tensor& y);
void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx);

}  // namespace reference

// Number of threads the parallel kernels will use.
int max_threads();

}  // namespace lamar::kernels
