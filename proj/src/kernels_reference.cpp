#include <cmath>

#include "lamar/error.hpp"
#include "lamar/kernels.hpp"

namespace lamar::kernels::reference {

void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate) {
  auto at = [&](std::size_t i, std::size_t k) { return ta == Trans::kNo ? a(i, k) : a(k, i); };
  auto bt = [&](std::size_t k, std::size_t j) { return tb == Trans::kNo ? b(k, j) : b(j, k); };
  const std::size_t inner = ta == Trans::kNo ? a.cols() : a.rows();
  const std::size_t b_inner = tb == Trans::kNo ? b.rows() : b.cols();
  if (inner != b_inner) {
    throw Error(ErrorCode::kShapeMismatch, "reference::gemm: incompatible shapes " +
                                               a.shape_string() + " x " + b.shape_string());
  }
  for (std::size_t i = 0; i < c.rows(); ++i) {
    for (std::size_t j = 0; j < c.cols(); ++j) {
      Real sum = 0.0;
      for (std::size_t k = 0; k < inner; ++k) sum += at(i, k) * bt(k, j);
      c(i, j) = accumulate ? c(i, j) + sum : sum;
    }
  }
}

void softmax_rows(const Tensor& x, Tensor& y) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    Real sum = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) sum += std::exp(x(r, c) - mx);
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = std::exp(x(r, c) - mx) / sum;
  }
}

void softmax_rows_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  // Full Jacobian: dy_i/dx_j = y_i (delta_ij - y_j).
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t j = 0; j < y.cols(); ++j) {
      Real acc = 0.0;
      for (std::size_t i = 0; i < y.cols(); ++i) {
        const Real jac = y(r, i) * ((i == j ? 1.0 : 0.0) - y(r, j));
        acc += jac * dy(r, i);
      }
      dx(r, j) += acc;
    }
  }
}

void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& y,
                     Tensor& mean, Tensor& rstd) {
  const Real n = static_cast<Real>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real mu = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mu += x(r, c);
    mu /= n;
    Real var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= n;
    mean[r] = mu;
    rstd[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      y(r, c) = (x(r, c) - mu) * rstd[r] * gamma[c] + beta[c];
    }
  }
}

void layer_norm_rows_backward(const Tensor& x, const Tensor& gamma, const Tensor& mean,
                              const Tensor& rstd, const Tensor& dy, Tensor& dx,
                              Tensor& dgamma, Tensor& dbeta) {
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Real rs = rstd[r];
    // Explicit Jacobian of xhat_i w.r.t. x_j: rs * (delta_ij - 1/n - xhat_i xhat_j / n).
    for (std::size_t j = 0; j < n && !dx.empty(); ++j) {
      const Real xhat_j = (x(r, j) - mean[r]) * rs;
      Real acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Real xhat_i = (x(r, i) - mean[r]) * rs;
        const Real jac = rs * ((i == j ? 1.0 : 0.0) - 1.0 / static_cast<Real>(n) -
                               xhat_i * xhat_j / static_cast<Real>(n));
        acc += dy(r, i) * gamma[i] * jac;
      }
      dx(r, j) += acc;
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (!dgamma.empty()) dgamma[c] += dy(r, c) * (x(r, c) - mean[r]) * rs;
      if (!dbeta.empty()) dbeta[c] += dy(r, c);
    }
  }
}

void gelu(const Tensor& x, Tensor& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
}

void gelu_backward(const Tensor& x, const Tensor& dy, Tensor& dx) {
  const Real pi = std::acos(-1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real cdf = 0.5 * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
    const Real pdf = std::exp(-0.5 * x[i] * x[i]) / std::sqrt(2.0 * pi);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

}  // namespace lamar::kernels::reference
