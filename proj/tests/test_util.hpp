#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lamar/graph.hpp"
#include "lamar/param_store.hpp"
#include "lamar/rng.hpp"
#include "lamar/tensor.hpp"

namespace lamar::test {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            Real stddev = 1.0) {
  Rng rng(seed);
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

inline std::vector<Real> unit_vector(std::size_t d, Rng& rng) {
  std::vector<Real> v(d);
  Real sq = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  for (auto& x : v) x /= std::sqrt(sq);
  return v;
}

inline Tensor unit_rows(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto v = unit_vector(cols, rng);
    std::copy(v.begin(), v.end(), t.row_span(r).begin());
  }
  return t;
}

inline Real max_abs_diff(const Tensor& a, const Tensor& b) {
  Real m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Gradient check of a graph expression over named leaf tensors. `build`
// receives a graph and the store and returns a scalar loss node.
using Builder = std::function<Var(Graph&, ParamStore&)>;

inline GradCheckReport check_expression(ParamStore& params, const Builder& build,
                                        GradCheckOptions opts = {}) {
  LossFn fn = [&](ParamStore& p, bool with_grad) {
    Graph g(with_grad);
    Var loss = build(g, p);
    if (with_grad) g.backward(loss);
    return loss.value()[0];
  };
  return grad_check(fn, params, opts);
}

}  // namespace lamar::test
