#pragma once

#include <span>

#include "lamar/graph.hpp"
#include "lamar/tensor.hpp"

namespace lamar::fusion {

// Rows per sample in the fused sequence: [I, I+C, I-C, I*C, C].
inline constexpr std::size_t kFusedRows = 5;

// Single-sample fused matrix (5 x d).
class FusedRepresentation {
 public:
  explicit FusedRepresentation(Tensor rows);

  const Tensor& matrix() const noexcept { return rows_; }
  std::span<const Real> row(std::size_t i) const { return rows_.row_span(i); }
  std::size_t dim() const noexcept { return rows_.cols(); }

 private:
  Tensor rows_;
};

FusedRepresentation fuse(std::span<const Real> image, std::span<const Real> caption);

// Batched, differentiable form: image and caption are B x d, the result is the
// (5B) x d stack of per-sample fused matrices.
Var fuse(Var image, Var caption);

}  // namespace lamar::fusion
