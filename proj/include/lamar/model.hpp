#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lamar/forward.hpp"
#include "lamar/graph.hpp"
#include "lamar/integrator.hpp"
#include "lamar/labels.hpp"
#include "lamar/param_store.hpp"
#include "lamar/reconstructor.hpp"

namespace lamar {

struct ModelConfig {
  std::size_t dim = 768;
  Task task = Task::kMiscaptioned;
  IntegrationMode integration = IntegrationMode::kGate;
  ReconstructorConfig reconstructor;  // d_model must equal dim

  void validate() const;
};

// Reconstructor, integrator, detection head and CLS token in one store.
struct LamarModel {
  ModelConfig config;
  ParamStore params;

  static LamarModel create(const ModelConfig& config, std::uint64_t seed);
};

// Exact number of trainable scalars.
std::size_t param_count(const LamarModel& model);

// B samples of L2-normalized embeddings.
struct Batch {
  Tensor image;
  Tensor caption;
  Tensor truth;
  std::vector<Label> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct LossWeights {
  Real detection = 1.0;
  Real reconstruction = 1.0;
};

struct ForwardResult {
  Var c_hat;
  Var logits;
  Var detection_loss;
  Var reconstruction_loss;
  Var total_loss;
  integrator::Result integration;
};

struct ForwardOptions {
  LossWeights weights;
  // Runs the reconstructor with dropout off regardless of ctx.train
  // (frozen, pre-trained reconstructor).
  bool reconstructor_eval = false;
};

ForwardResult forward(Graph& graph, LamarModel& model, const Batch& batch,
                      const ForwardContext& ctx, const ForwardOptions& options = {});

struct ReconstructionResult {
  Var c_hat;
  Var loss;
};

// Reconstructor alone: fuse -> encode -> MSE against batch.truth.
ReconstructionResult forward_reconstruction(Graph& graph, LamarModel& model, const Batch& batch,
                                            const ForwardContext& ctx);

}  // namespace lamar
