#include "lamar/model.hpp"

#include "lamar/detector.hpp"
#include "lamar/error.hpp"
#include "lamar/fusion.hpp"
#include "lamar/rng.hpp"

namespace lamar {

void ModelConfig::validate() const {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "model: dim must be positive");
  reconstructor.validate();
  if (reconstructor.d_model != dim) {
    throw Error(ErrorCode::kDimMismatch, "model: reconstructor d_model " +
                                             std::to_string(reconstructor.d_model) +
                                             " != embedding dim " + std::to_string(dim));
  }
}

LamarModel LamarModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  LamarModel model{config, {}};
  Rng rng(seed, RngDomain::kInit);
  reconstructor::init_params(model.params, config.reconstructor, rng);
  integrator::init_params(model.params, config.integration, config.dim, rng);
  detector::init_params(model.params, config.dim, config.task, rng);
  return model;
}

std::size_t param_count(const LamarModel& model) { return model.params.scalar_count(); }

namespace {

void check_batch(const LamarModel& model, const Batch& batch) {
  const std::size_t d = model.config.dim;
  const std::size_t n = batch.size();
  for (const Tensor* t : {&batch.image, &batch.caption, &batch.truth}) {
    if (t->rows() != n || t->cols() != d) {
      throw Error(ErrorCode::kDimMismatch, "forward: batch tensor " + t->shape_string() +
                                               " does not match " + std::to_string(n) +
                                               " samples of dim " + std::to_string(d));
    }
  }
  if (n == 0) throw Error(ErrorCode::kEmpty, "forward: empty batch");
}

}  // namespace

ForwardResult forward(Graph& graph, LamarModel& model, const Batch& batch,
                      const ForwardContext& ctx, const ForwardOptions& options) {
  check_batch(model, batch);
  Var image = graph.constant(batch.image);
  Var caption = graph.constant(batch.caption);
  Var truth = graph.constant(batch.truth);
  Var fused = fusion::fuse(image, caption);

  ForwardContext rec_ctx = ctx;
  if (options.reconstructor_eval) rec_ctx.train = false;
  auto rec = reconstructor::reconstruct(model.params, fused, model.config.reconstructor, rec_ctx);

  auto integ = integrator::integrate(model.params, model.config.integration, fused, image,
                                     caption, rec.c_hat, ctx);
  Var logits = detector::classify_logits(model.params, integ.sequence, model.config.task);
  Var l_d = detector::detection_loss(logits, batch.labels, model.config.task);
  Var l_r = ops::mse(rec.c_hat, truth);

  Var total;
  const LossWeights& w = options.weights;
  if (w.detection == 1.0 && w.reconstruction == 1.0) {
    total = ops::add(l_d, l_r);
  } else {
    total = ops::add(ops::scale(l_d, w.detection), ops::scale(l_r, w.reconstruction));
  }
  return ForwardResult{rec.c_hat, logits, l_d, l_r, total, integ};
}

ReconstructionResult forward_reconstruction(Graph& graph, LamarModel& model, const Batch& batch,
                                            const ForwardContext& ctx) {
  check_batch(model, batch);
  Var image = graph.constant(batch.image);
  Var caption = graph.constant(batch.caption);
  Var truth = graph.constant(batch.truth);
  Var fused = fusion::fuse(image, caption);
  auto rec = reconstructor::reconstruct(model.params, fused, model.config.reconstructor, ctx);
  return ReconstructionResult{rec.c_hat, ops::mse(rec.c_hat, truth)};
}

}  // namespace lamar
