#pragma once

#include <span>
#include <string>

#include "lamar/forward.hpp"
#include "lamar/graph.hpp"
#include "lamar/param_store.hpp"

namespace lamar {

class Rng;

struct ReconstructorConfig {
  std::size_t blocks = 4;
  std::size_t heads = 4;
  std::size_t d_model = 768;
  std::size_t ff_dim = 1024;
  Real dropout = 0.1;

  void validate() const;
};

namespace reconstructor {

// CLS token followed by the five fused rows.
inline constexpr std::size_t kSequenceRows = 6;
inline constexpr const char* kPrefix = "rec.";

std::string block_param(std::size_t block, const char* name);

// Registers rec.* parameters: CLS, positional table and every encoder block.
void init_params(ParamStore& store, const ReconstructorConfig& cfg, Rng& rng);

struct Output {
  Var c_hat;   // B x d, unit rows
  Var tokens;  // (6B) x d encoder outputs, CLS first in each block
};

// Post-norm Transformer encoder over [CLS; F] with learned positions. `fused`
// is the (5B) x d batch from fusion::fuse.
Output reconstruct(ParamStore& store, Var fused, const ReconstructorConfig& cfg,
                   const ForwardContext& ctx);

}  // namespace reconstructor

// Mean squared error over every element (and every sample of a batch).
Real mse_loss(std::span<const Real> c_hat, std::span<const Real> c_true);

}  // namespace lamar
