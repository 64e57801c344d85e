#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamar/dataset.hpp"
#include "lamar/model.hpp"
#include "lamar/rng.hpp"

namespace lamar {

enum class TrainingMode { kEndToEnd, kPretrainGaussian, kPretrainDropout };

std::string to_string(TrainingMode mode);
// "e2e", "pt-gauss", "pt-drop".
TrainingMode parse_training_mode(const std::string& text);

struct EvalSnapshot {
  std::optional<Real> val_accuracy;  // absent for reconstructor pre-training
  Real val_reconstruction_loss = 0.0;
  std::optional<Real> train_accuracy;
  std::optional<Real> train_reconstruction_loss;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  Real loss = 0.0;        // sample-weighted means over the epoch's batches
  Real detection_loss = 0.0;
  Real reconstruction_loss = 0.0;
  EvalSnapshot eval;
};

struct TrainConfig {
  Task task = Task::kMiscaptioned;
  IntegrationMode integration = IntegrationMode::kGate;
  TrainingMode mode = TrainingMode::kEndToEnd;
  Real lr = 1e-4;
  std::size_t batch = 512;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;  // 0 disables early stopping
  Real sigma = 0.1;
  Real mu = 0.0;
  Real dp = 0.2;
  std::uint64_t seed = 0;
  std::size_t dim = 768;
  ReconstructorConfig reconstructor;
  LossWeights weights;
  // Re-evaluates the training split after every epoch (accuracy and L_r).
  bool track_train_metrics = false;
  // Called after every epoch; not part of the serialized configuration.
  std::function<void(const EpochStats&)> on_epoch;

  void validate() const;
  ModelConfig model_config() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Overrides the fields present in j; unknown keys are rejected.
void apply_json(TrainConfig& cfg, const nlohmann::json& j);

struct TrainReport {
  TrainingMode mode = TrainingMode::kEndToEnd;
  EvalSnapshot initial;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  Real best_metric = 0.0;  // val accuracy, or val L_r when pre-training
  std::string stop_reason;
  double wall_seconds = 0.0;  // not serialized
};

nlohmann::json to_json(const TrainReport& report);

// l2_normalize(c + N(mu, sigma^2)); returns c unchanged when sigma == 0 and mu == 0.
std::vector<Real> perturb_gaussian(std::span<const Real> c, Real sigma, Real mu, Rng& rng);
// Inverted dropout then l2_normalize. Throws kZeroNorm "degenerate zero
// vector" when every dimension is dropped.
std::vector<Real> perturb_dropout(std::span<const Real> c, Real dp, Rng& rng);
// perturb_dropout that redraws degenerate samples.
std::vector<Real> perturb_dropout_resampled(std::span<const Real> c, Real dp, Rng& rng,
                                            std::size_t max_attempts = 1000);

struct TrainResult {
  LamarModel model;
  TrainReport report;
};

// Joint detection + reconstruction training; returns the best-validation parameters.
TrainResult train_e2e(const Dataset& dataset, const TrainConfig& cfg);

// Reconstructor-only training on perturbed truthful captions. The returned
// model carries freshly initialized integrator and detector parameters.
TrainResult pretrain_reconstructor(const Dataset& truthful, const TrainConfig& cfg);

// Detector training on top of a frozen pre-trained reconstructor (L_d only).
TrainResult train_detector_pt(const Dataset& dataset, const LamarModel& pretrained,
                              const TrainConfig& cfg);

}  // namespace lamar
