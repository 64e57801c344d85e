#include "lamar/integrator.hpp"

#include <cmath>

#include "lamar/error.hpp"
#include "lamar/fusion.hpp"
#include "lamar/rng.hpp"

namespace lamar {

std::string to_string(IntegrationMode mode) {
  switch (mode) {
    case IntegrationMode::kDirect: return "direct";
    case IntegrationMode::kGate: return "gate";
    case IntegrationMode::kMask: return "mask";
    case IntegrationMode::kAttention: return "attention";
  }
  return "unknown";
}

IntegrationMode parse_integration_mode(const std::string& text) {
  if (text == "direct") return IntegrationMode::kDirect;
  if (text == "gate") return IntegrationMode::kGate;
  if (text == "mask") return IntegrationMode::kMask;
  if (text == "attention") return IntegrationMode::kAttention;
  throw Error(ErrorCode::kInvalidArgument, "integration: unknown mode '" + text + "'");
}

namespace integrator {

namespace {

void require_dims(const char* op, Var a, Var b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimMismatch, std::string(op) + ": dims " + a.value().shape_string() +
                                             " and " + b.value().shape_string());
  }
}

Var pooled_fused(Var fused) { return ops::group_mean(fused, fusion::kFusedRows); }

}  // namespace

void init_params(ParamStore& store, IntegrationMode mode, std::size_t dim, Rng& rng) {
  switch (mode) {
    case IntegrationMode::kDirect:
      break;
    case IntegrationMode::kGate:
      store.add("int.gate.w", xavier_uniform(dim, dim, rng));
      store.add("int.gate.b", Tensor(1, dim));
      break;
    case IntegrationMode::kMask:
      store.add("int.mask.w", xavier_uniform(dim, dim, rng));
      store.add("int.mask.b", Tensor(1, dim));
      break;
    case IntegrationMode::kAttention:
      store.add("int.attn.wq", xavier_uniform(dim, dim, rng));
      store.add("int.attn.wk", xavier_uniform(dim, dim, rng));
      store.add("int.attn.wv", xavier_uniform(dim, dim, rng));
      break;
  }
}

Var append_to_fused(Var fused, Var vector) {
  require_dims("integrate", fused, vector);
  if (fused.rows() != vector.rows() * fusion::kFusedRows) {
    throw Error(ErrorCode::kDimMismatch, "integrate: fused " + fused.value().shape_string() +
                                             " does not hold 5 rows per vector row of " +
                                             vector.value().shape_string());
  }
  const Var parts[] = {fused, vector};
  const std::size_t groups[] = {fusion::kFusedRows, 1};
  return ops::interleave(parts, groups);
}

Var integrate_direct(Var fused, Var c_hat) { return append_to_fused(fused, c_hat); }

GateOutput integrate_gate(ParamStore& store, Var fused, Var c_hat) {
  require_dims("integrate_gate", fused, c_hat);
  Graph& g = fused.graph();
  Var gate = ops::sigmoid(ops::linear(pooled_fused(fused), g.parameter(store, "int.gate.w"),
                                      g.parameter(store, "int.gate.b")));
  return GateOutput{gate, ops::mul(gate, c_hat)};
}

MaskOutput integrate_mask(ParamStore& store, Var fused, Var c_hat, const ForwardContext& ctx) {
  require_dims("integrate_mask", fused, c_hat);
  Graph& g = fused.graph();
  Var prob = ops::sigmoid(ops::linear(pooled_fused(fused), g.parameter(store, "int.mask.w"),
                                      g.parameter(store, "int.mask.b")));
  Tensor mask = prob.value();
  if (ctx.mask_surrogate) {
    // keep probabilities
  } else if (ctx.train) {
    if (ctx.mask_rng == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "integrate_mask: training needs a mask rng");
    }
    for (auto& m : mask.data()) m = ctx.mask_rng->bernoulli(m) ? 1.0 : 0.0;
  } else {
    for (auto& m : mask.data()) m = m >= 0.5 ? 1.0 : 0.0;
  }
  Var out = ops::straight_through_mask(prob, c_hat, mask);
  return MaskOutput{prob, std::move(mask), out};
}

AttentionOutput integrate_attention(ParamStore& store, Var image, Var caption, Var c_hat) {
  require_dims("integrate_attention", image, caption);
  require_dims("integrate_attention", image, c_hat);
  Graph& g = image.graph();
  const Var parts[] = {image, caption, c_hat};
  const std::size_t groups[] = {1, 1, 1};
  Var tokens = ops::interleave(parts, groups);
  Var q = ops::linear(tokens, g.parameter(store, "int.attn.wq"));
  Var k = ops::linear(tokens, g.parameter(store, "int.attn.wk"));
  Var v = ops::linear(tokens, g.parameter(store, "int.attn.wv"));
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(image.cols()));
  Var weights =
      ops::softmax_rows(ops::scale(ops::batched_matmul_nt(q, k, kAttentionTokens), inv_sqrt));
  Var mixed = ops::batched_matmul(weights, v, kAttentionTokens);
  return AttentionOutput{weights, ops::group_mean(mixed, kAttentionTokens)};
}

Result integrate(ParamStore& store, IntegrationMode mode, Var fused, Var image, Var caption,
                 Var c_hat, const ForwardContext& ctx) {
  switch (mode) {
    case IntegrationMode::kDirect:
      return Result{integrate_direct(fused, c_hat), std::nullopt, std::nullopt};
    case IntegrationMode::kGate: {
      auto gate = integrate_gate(store, fused, c_hat);
      return Result{append_to_fused(fused, gate.output), gate.gate, std::nullopt};
    }
    case IntegrationMode::kMask: {
      auto mask = integrate_mask(store, fused, c_hat, ctx);
      return Result{append_to_fused(fused, mask.output), mask.probability, std::nullopt};
    }
    case IntegrationMode::kAttention: {
      auto attn = integrate_attention(store, image, caption, c_hat);
      return Result{append_to_fused(fused, attn.attended), std::nullopt, attn.weights};
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "integrate: unknown mode");
}

}  // namespace integrator
}  // namespace lamar
