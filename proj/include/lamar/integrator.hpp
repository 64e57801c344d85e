#pragma once

#include <optional>
#include <string>

#include "lamar/forward.hpp"
#include "lamar/graph.hpp"
#include "lamar/param_store.hpp"

namespace lamar {

class Rng;

enum class IntegrationMode { kDirect, kGate, kMask, kAttention };

std::string to_string(IntegrationMode mode);
IntegrationMode parse_integration_mode(const std::string& text);

namespace integrator {

// Rows of the attention integrator's token stack: image, caption, reconstruction.
inline constexpr std::size_t kAttentionTokens = 3;

// Registers only the parameters of the active mode (int.gate.*, int.mask.* or
// int.attn.*). Direct integration has none.
void init_params(ParamStore& store, IntegrationMode mode, std::size_t dim, Rng& rng);

// [F; v] per sample: (5B) x d fused plus B x d vector -> (6B) x d.
Var append_to_fused(Var fused, Var vector);

Var integrate_direct(Var fused, Var c_hat);

struct GateOutput {
  Var gate;    // B x d probabilities in (0,1)
  Var output;  // gate * c_hat
};
GateOutput integrate_gate(ParamStore& store, Var fused, Var c_hat);

struct MaskOutput {
  Var probability;  // B x d
  Tensor mask;      // sampled (train), thresholded (eval) or == probability (surrogate)
  Var output;
};
MaskOutput integrate_mask(ParamStore& store, Var fused, Var c_hat, const ForwardContext& ctx);

struct AttentionOutput {
  Var weights;   // (3B) x 3 row-stochastic attention matrices
  Var attended;  // B x d pooled result
};
AttentionOutput integrate_attention(ParamStore& store, Var image, Var caption, Var c_hat);

// Whole-mode dispatch returning the detector input sequence plus diagnostics.
struct Result {
  Var sequence;                 // (6B) x d
  std::optional<Var> gate;      // gate probabilities (gate) or mask probabilities (mask)
  std::optional<Var> attention; // attention matrices (attention)
};
Result integrate(ParamStore& store, IntegrationMode mode, Var fused, Var image, Var caption,
                 Var c_hat, const ForwardContext& ctx);

}  // namespace integrator
}  // namespace lamar
