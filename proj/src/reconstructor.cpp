#include "lamar/reconstructor.hpp"

#include <cmath>

#include "lamar/error.hpp"
#include "lamar/fusion.hpp"
#include "lamar/rng.hpp"

namespace lamar {

void ReconstructorConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "reconstructor: d_model " + std::to_string(d_model) +
                    " must be a positive multiple of heads " + std::to_string(heads));
  }
  if (blocks == 0 || ff_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "reconstructor: blocks and ff_dim must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "reconstructor: dropout must lie in [0,1)");
  }
}

namespace reconstructor {

std::string block_param(std::size_t block, const char* name) {
  return std::string(kPrefix) + "block" + std::to_string(block) + "." + name;
}

void init_params(ParamStore& store, const ReconstructorConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  store.add("rec.cls", normal_tensor(1, d, 0.02, rng));
  store.add("rec.pos", normal_tensor(kSequenceRows, d, 0.02, rng));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (const char* proj : {"wq", "wk", "wv", "wo"}) {
      store.add(block_param(b, proj), xavier_uniform(d, d, rng));
    }
    for (const char* bias : {"bq", "bk", "bv", "bo"}) store.add(block_param(b, bias), Tensor(1, d));
    store.add(block_param(b, "ff1_w"), xavier_uniform(d, cfg.ff_dim, rng));
    store.add(block_param(b, "ff1_b"), Tensor(1, cfg.ff_dim));
    store.add(block_param(b, "ff2_w"), xavier_uniform(cfg.ff_dim, d, rng));
    store.add(block_param(b, "ff2_b"), Tensor(1, d));
    store.add(block_param(b, "ln1_g"), Tensor(1, d, 1.0));
    store.add(block_param(b, "ln1_b"), Tensor(1, d));
    store.add(block_param(b, "ln2_g"), Tensor(1, d, 1.0));
    store.add(block_param(b, "ln2_b"), Tensor(1, d));
  }
}

namespace {

Var self_attention(ParamStore& store, Var x, std::size_t block, const ReconstructorConfig& cfg,
                   const ForwardContext& ctx) {
  Graph& g = x.graph();
  auto p = [&](const char* name) { return g.parameter(store, block_param(block, name)); };
  Var q = ops::linear(x, p("wq"), p("bq"));
  Var k = ops::linear(x, p("wk"), p("bk"));
  Var v = ops::linear(x, p("wv"), p("bv"));
  const std::size_t head_dim = cfg.d_model / cfg.heads;
  const Real inv_sqrt = 1.0 / std::sqrt(static_cast<Real>(head_dim));
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    Var qh = q, kh = k, vh = v;
    if (cfg.heads > 1) {
      qh = ops::slice_cols(q, h * head_dim, (h + 1) * head_dim);
      kh = ops::slice_cols(k, h * head_dim, (h + 1) * head_dim);
      vh = ops::slice_cols(v, h * head_dim, (h + 1) * head_dim);
    }
    Var scores = ops::scale(ops::batched_matmul_nt(qh, kh, kSequenceRows), inv_sqrt);
    Var weights = ops::dropout(ops::softmax_rows(scores), cfg.dropout, ctx.dropout_rng, ctx.train);
    heads.push_back(ops::batched_matmul(weights, vh, kSequenceRows));
  }
  Var merged = cfg.heads > 1 ? ops::concat_cols(heads) : heads.front();
  return ops::linear(merged, p("wo"), p("bo"));
}

Var encoder_block(ParamStore& store, Var x, std::size_t block, const ReconstructorConfig& cfg,
                  const ForwardContext& ctx) {
  Graph& g = x.graph();
  auto p = [&](const char* name) { return g.parameter(store, block_param(block, name)); };
  Var normed = ops::layer_norm(x, p("ln1_g"), p("ln1_b"));
  Var attn = ops::dropout(self_attention(store, normed, block, cfg, ctx), cfg.dropout,
                          ctx.dropout_rng, ctx.train);
  x = ops::add(x, attn);
  normed = ops::layer_norm(x, p("ln2_g"), p("ln2_b"));
  Var hidden = ops::gelu(ops::linear(normed, p("ff1_w"), p("ff1_b")));
  hidden = ops::dropout(hidden, cfg.dropout, ctx.dropout_rng, ctx.train);
  Var ff = ops::dropout(ops::linear(hidden, p("ff2_w"), p("ff2_b")), cfg.dropout,
                        ctx.dropout_rng, ctx.train);
  return ops::add(x, ff);
}

}  // namespace

Output reconstruct(ParamStore& store, Var fused, const ReconstructorConfig& cfg,
                   const ForwardContext& ctx) {
  cfg.validate();
  if (fused.cols() != cfg.d_model || fused.rows() % fusion::kFusedRows != 0) {
    throw Error(ErrorCode::kDimMismatch, "reconstruct: fused input " +
                                             fused.value().shape_string() +
                                             " does not match d_model " +
                                             std::to_string(cfg.d_model));
  }
  Graph& g = fused.graph();
  const std::size_t samples = fused.rows() / fusion::kFusedRows;
  Var cls = ops::repeat_row(g.parameter(store, "rec.cls"), samples);
  const Var parts[] = {cls, fused};
  const std::size_t groups[] = {1, fusion::kFusedRows};
  Var x = ops::interleave(parts, groups);
  x = ops::add_periodic(x, g.parameter(store, "rec.pos"));
  for (std::size_t b = 0; b < cfg.blocks; ++b) x = encoder_block(store, x, b, cfg, ctx);
  Var cls_out = ops::take_rows(x, kSequenceRows, 0);
  return Output{ops::l2_normalize_rows(cls_out), x};
}

}  // namespace reconstructor

Real mse_loss(std::span<const Real> c_hat, std::span<const Real> c_true) {
  if (c_hat.size() != c_true.size() || c_hat.empty()) {
    throw Error(ErrorCode::kDimMismatch, "mse_loss: dims " + std::to_string(c_hat.size()) +
                                             " and " + std::to_string(c_true.size()));
  }
  Real sum = 0.0;
  for (std::size_t i = 0; i < c_hat.size(); ++i) sum += (c_hat[i] - c_true[i]) * (c_hat[i] - c_true[i]);
  return sum / static_cast<Real>(c_hat.size());
}

}  // namespace lamar
