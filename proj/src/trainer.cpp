#include "lamar/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

#include "lamar/checkpoint.hpp"
#include "lamar/error.hpp"
#include "lamar/evaluator.hpp"

namespace lamar {

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::kEndToEnd: return "e2e";
    case TrainingMode::kPretrainGaussian: return "pt-gauss";
    case TrainingMode::kPretrainDropout: return "pt-drop";
  }
  return "?";
}

TrainingMode parse_training_mode(const std::string& text) {
  if (text == "e2e") return TrainingMode::kEndToEnd;
  if (text == "pt-gauss") return TrainingMode::kPretrainGaussian;
  if (text == "pt-drop") return TrainingMode::kPretrainDropout;
  throw Error(ErrorCode::kInvalidArgument,
              "training mode: unknown mode '" + text + "' (expected e2e, pt-gauss or pt-drop)");
}

void TrainConfig::validate() const {
  const auto bad = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "train config: " + what);
  };
  if (!(lr >= 0.0)) bad("lr must be non-negative");
  if (batch == 0) bad("batch must be positive");
  if (max_epochs == 0) bad("max_epochs must be positive");
  if (!(sigma >= 0.0)) bad("sigma must be non-negative");
  if (!std::isfinite(mu)) bad("mu must be finite");
  if (!(dp >= 0.0 && dp < 1.0)) bad("dp must lie in [0,1)");
  if (!(weights.detection >= 0.0 && weights.reconstruction >= 0.0)) {
    bad("loss weights must be non-negative");
  }
  model_config().validate();
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc;
  mc.dim = dim;
  mc.task = task;
  mc.integration = integration;
  mc.reconstructor = reconstructor;
  mc.reconstructor.d_model = dim;
  return mc;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json rec = to_json(c.reconstructor);
  rec.erase("d_model");
  return {{"task", to_string(c.task)},
          {"integration", to_string(c.integration)},
          {"mode", to_string(c.mode)},
          {"lr", c.lr},
          {"batch", c.batch},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"sigma", c.sigma},
          {"mu", c.mu},
          {"dp", c.dp},
          {"seed", c.seed},
          {"dim", c.dim},
          {"reconstructor", rec},
          {"detection_weight", c.weights.detection},
          {"reconstruction_weight", c.weights.reconstruction},
          {"track_train_metrics", c.track_train_metrics}};
}

void apply_json(TrainConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "train config: expected a JSON object");
  }
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "task") c.task = parse_task(v.get<std::string>());
      else if (key == "integration") c.integration = parse_integration_mode(v.get<std::string>());
      else if (key == "mode") c.mode = parse_training_mode(v.get<std::string>());
      else if (key == "lr") c.lr = v.get<Real>();
      else if (key == "batch") c.batch = v.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = v.get<std::size_t>();
      else if (key == "patience") c.patience = v.get<std::size_t>();
      else if (key == "sigma") c.sigma = v.get<Real>();
      else if (key == "mu") c.mu = v.get<Real>();
      else if (key == "dp") c.dp = v.get<Real>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "dim") c.dim = v.get<std::size_t>();
      else if (key == "detection_weight") c.weights.detection = v.get<Real>();
      else if (key == "reconstruction_weight") c.weights.reconstruction = v.get<Real>();
      else if (key == "track_train_metrics") c.track_train_metrics = v.get<bool>();
      else if (key == "reconstructor") {
        nlohmann::json rec = to_json(c.reconstructor);
        for (const auto& [rk, rv] : v.items()) {
          if (!rec.contains(rk)) {
            throw Error(ErrorCode::kInvalidArgument,
                        "train config: unknown reconstructor key '" + rk + "'");
          }
          rec[rk] = rv;
        }
        c.reconstructor = reconstructor_config_from_json(rec);
      } else {
        throw Error(ErrorCode::kInvalidArgument, "train config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("train config: ") + e.what());
  }
}

namespace {

nlohmann::json snapshot_json(const EvalSnapshot& s) {
  nlohmann::json j = {{"val_reconstruction_loss", s.val_reconstruction_loss}};
  if (s.val_accuracy) j["val_accuracy"] = *s.val_accuracy;
  if (s.train_accuracy) j["train_accuracy"] = *s.train_accuracy;
  if (s.train_reconstruction_loss) j["train_reconstruction_loss"] = *s.train_reconstruction_loss;
  return j;
}

}  // namespace

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json j = snapshot_json(e.eval);
    j["epoch"] = e.epoch;
    j["loss"] = e.loss;
    j["detection_loss"] = e.detection_loss;
    j["reconstruction_loss"] = e.reconstruction_loss;
    epochs.push_back(std::move(j));
  }
  return {{"mode", to_string(r.mode)},
          {"initial", snapshot_json(r.initial)},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_metric", r.best_metric},
          {"stop_reason", r.stop_reason}};
}

namespace {

std::vector<Real> normalized(std::vector<Real> v, const char* where) {
  Real sq = 0.0;
  for (Real x : v) sq += x * x;
  const Real n = std::sqrt(sq);
  if (!(n > 0.0)) throw Error(ErrorCode::kZeroNorm, std::string(where) + ": degenerate zero vector");
  for (Real& x : v) x /= n;
  return v;
}

}  // namespace

std::vector<Real> perturb_gaussian(std::span<const Real> c, Real sigma, Real mu, Rng& rng) {
  if (!(sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "perturb_gaussian: sigma must be non-negative");
  }
  std::vector<Real> out(c.begin(), c.end());
  if (sigma == 0.0 && mu == 0.0) return out;
  for (Real& x : out) x += sigma == 0.0 ? mu : rng.normal(mu, sigma);
  return normalized(std::move(out), "perturb_gaussian");
}

std::vector<Real> perturb_dropout(std::span<const Real> c, Real dp, Rng& rng) {
  if (!(dp >= 0.0 && dp < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "perturb_dropout: dp must lie in [0,1)");
  }
  std::vector<Real> out(c.begin(), c.end());
  if (dp == 0.0) return out;
  const Real keep_scale = 1.0 / (1.0 - dp);
  for (Real& x : out) x = rng.bernoulli(dp) ? 0.0 : x * keep_scale;
  return normalized(std::move(out), "perturb_dropout");
}

std::vector<Real> perturb_dropout_resampled(std::span<const Real> c, Real dp, Rng& rng,
                                            std::size_t max_attempts) {
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      return perturb_dropout(c, dp, rng);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kZeroNorm || attempt + 1 >= max_attempts) throw;
    }
  }
}

namespace {

using Clock = std::chrono::steady_clock;
using Records = std::vector<const EmbeddingRecord*>;

std::map<std::string, Tensor> snapshot_values(const ParamStore& params) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, e] : params) out.emplace(name, e.value);
  return out;
}

void restore_values(ParamStore& params, const std::map<std::string, Tensor>& values) {
  for (auto& [name, e] : params) e.value = values.at(name);
}

void require_dim(const Dataset& dataset, const TrainConfig& cfg, const char* where) {
  if (dataset.manifest.dim != cfg.dim) {
    throw Error(ErrorCode::kDimMismatch, std::string(where) + ": dataset dim " +
                                             std::to_string(dataset.manifest.dim) +
                                             " != configured dim " + std::to_string(cfg.dim));
  }
}

void require_nonempty(const Records& records, Split split, const char* where) {
  if (records.empty()) {
    throw Error(ErrorCode::kEmpty,
                std::string(where) + ": empty split '" + to_string(split) + "'");
  }
}

// Early-stopping bookkeeping shared by every training loop.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool higher_is_better)
      : patience_(patience), higher_(higher_is_better) {}

  // Returns true when the epoch is a new best.
  bool update(std::size_t epoch, Real metric) {
    const bool better = best_epoch_ == 0 || (higher_ ? metric > best_ : metric < best_);
    if (better) {
      best_ = metric;
      best_epoch_ = epoch;
    }
    return better;
  }
  bool exhausted(std::size_t epoch) const {
    return patience_ > 0 && epoch - best_epoch_ >= patience_;
  }
  std::size_t best_epoch() const { return best_epoch_; }
  Real best() const { return best_; }

 private:
  std::size_t patience_;
  bool higher_;
  std::size_t best_epoch_ = 0;
  Real best_ = 0.0;
};

Real mean_reconstruction(const std::vector<SamplePrediction>& preds) {
  Real s = 0.0;
  for (const auto& p : preds) s += p.reconstruction_loss;
  return preds.empty() ? 0.0 : s / static_cast<Real>(preds.size());
}

EvalSnapshot detector_snapshot(LamarModel& model, const Records& train, const Records& val,
                               bool track_train) {
  EvalSnapshot s;
  const auto val_preds = predict(model, val);
  s.val_accuracy = summarize(val_preds, model.config.task).accuracy;
  s.val_reconstruction_loss = mean_reconstruction(val_preds);
  if (track_train) {
    const auto train_preds = predict(model, train);
    s.train_accuracy = summarize(train_preds, model.config.task).accuracy;
    s.train_reconstruction_loss = mean_reconstruction(train_preds);
  }
  return s;
}

// Shared loop for E2E and PT detector training.
TrainReport run_detector_training(LamarModel& model, const Dataset& dataset,
                                  const TrainConfig& cfg, const ForwardOptions& options) {
  const auto start = Clock::now();
  const Records train = task_records(dataset, Split::kTrain, cfg.task);
  const Records val = task_records(dataset, Split::kVal, cfg.task);
  require_nonempty(train, Split::kTrain, "train");
  require_nonempty(val, Split::kVal, "train");

  TrainReport report;
  report.mode = cfg.mode;
  report.initial = detector_snapshot(model, train, val, cfg.track_train_metrics);

  Rng shuffle_rng(cfg.seed, RngDomain::kShuffle);
  Rng dropout_rng(cfg.seed, RngDomain::kDropout);
  Rng mask_rng(cfg.seed, RngDomain::kMask);
  AdamState adam;
  adam.config.lr = cfg.lr;
  EarlyStopping stopper(cfg.patience, true);
  auto best_values = snapshot_values(model.params);

  std::vector<std::size_t> order(train.size());
  report.stop_reason = "max_epochs";
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      Records chunk;
      for (std::size_t i = begin; i < end; ++i) chunk.push_back(train[order[i]]);
      const Batch batch = make_batch(chunk, cfg.dim);

      model.params.zero_grad();
      Graph g;
      ForwardContext ctx{true, &dropout_rng, &mask_rng, false};
      const ForwardResult fr = forward(g, model, batch, ctx, options);
      g.backward(fr.total_loss);
      adam_step(model.params, adam);

      const Real n = static_cast<Real>(chunk.size());
      stats.loss += fr.total_loss.value()[0] * n;
      stats.detection_loss += fr.detection_loss.value()[0] * n;
      stats.reconstruction_loss += fr.reconstruction_loss.value()[0] * n;
    }
    const Real total = static_cast<Real>(train.size());
    stats.loss /= total;
    stats.detection_loss /= total;
    stats.reconstruction_loss /= total;
    stats.eval = detector_snapshot(model, train, val, cfg.track_train_metrics);
    report.epochs.push_back(stats);
    if (cfg.on_epoch) cfg.on_epoch(stats);

    if (stopper.update(epoch, *stats.eval.val_accuracy)) best_values = snapshot_values(model.params);
    if (stopper.exhausted(epoch)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  restore_values(model.params, best_values);
  report.best_epoch = stopper.best_epoch();
  report.best_metric = stopper.best();
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

void perturb_captions(Batch& batch, const TrainConfig& cfg, Rng& rng) {
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto truth = batch.truth.row_span(i);
    const std::vector<Real> p = cfg.mode == TrainingMode::kPretrainDropout
                                    ? perturb_dropout_resampled(truth, cfg.dp, rng)
                                    : perturb_gaussian(truth, cfg.sigma, cfg.mu, rng);
    std::copy(p.begin(), p.end(), batch.caption.row_span(i).begin());
  }
}

Real eval_reconstruction(LamarModel& model, const Batch& batch) {
  Graph g(false);
  ForwardContext ctx;
  return forward_reconstruction(g, model, batch, ctx).loss.value()[0];
}

}  // namespace

TrainResult train_e2e(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode != TrainingMode::kEndToEnd) {
    throw Error(ErrorCode::kInvalidArgument, "train_e2e: config mode is '" +
                                                 to_string(cfg.mode) + "', expected e2e");
  }
  require_dim(dataset, cfg, "train_e2e");
  LamarModel model = LamarModel::create(cfg.model_config(), cfg.seed);
  ForwardOptions options;
  options.weights = cfg.weights;
  TrainReport report = run_detector_training(model, dataset, cfg, options);
  return {std::move(model), std::move(report)};
}

TrainResult pretrain_reconstructor(const Dataset& truthful, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode == TrainingMode::kEndToEnd) {
    throw Error(ErrorCode::kInvalidArgument,
                "pretrain_reconstructor: config mode must be pt-gauss or pt-drop");
  }
  require_dim(truthful, cfg, "pretrain_reconstructor");
  for (const auto& r : truthful.records) {
    if (r.label != Label::kTrue) {
      throw Error(ErrorCode::kInvalidArgument, "pretrain_reconstructor: record '" + r.id +
                                                   "' is not truthful (label " +
                                                   to_string(r.label) + ")");
    }
  }
  const auto start = Clock::now();
  const Records train = truthful.split(Split::kTrain);
  const Records val = truthful.split(Split::kVal);
  require_nonempty(train, Split::kTrain, "pretrain_reconstructor");
  require_nonempty(val, Split::kVal, "pretrain_reconstructor");

  LamarModel model = LamarModel::create(cfg.model_config(), cfg.seed);
  Batch val_batch = make_batch(val, cfg.dim);
  {
    Rng val_rng(cfg.seed, RngDomain::kValidationPerturb);
    perturb_captions(val_batch, cfg, val_rng);
  }
  const Batch train_clean = make_batch(train, cfg.dim);

  TrainReport report;
  report.mode = cfg.mode;
  report.initial.val_reconstruction_loss = eval_reconstruction(model, val_batch);

  Rng shuffle_rng(cfg.seed, RngDomain::kShuffle);
  Rng dropout_rng(cfg.seed, RngDomain::kDropout);
  Rng perturb_rng(cfg.seed, RngDomain::kPerturb);
  AdamState adam;
  adam.config.lr = cfg.lr;
  EarlyStopping stopper(cfg.patience, false);
  auto best_values = snapshot_values(model.params);

  std::vector<std::size_t> order(train.size());
  report.stop_reason = "max_epochs";
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      Records chunk;
      for (std::size_t i = begin; i < end; ++i) chunk.push_back(train[order[i]]);
      Batch batch = make_batch(chunk, cfg.dim);
      perturb_captions(batch, cfg, perturb_rng);

      model.params.zero_grad();
      Graph g;
      ForwardContext ctx{true, &dropout_rng, nullptr, false};
      const ReconstructionResult rr = forward_reconstruction(g, model, batch, ctx);
      g.backward(rr.loss);
      adam_step(model.params, adam);
      stats.reconstruction_loss += rr.loss.value()[0] * static_cast<Real>(chunk.size());
    }
    stats.reconstruction_loss /= static_cast<Real>(train.size());
    stats.loss = stats.reconstruction_loss;
    stats.eval.val_reconstruction_loss = eval_reconstruction(model, val_batch);
    if (cfg.track_train_metrics) stats.eval.train_reconstruction_loss = eval_reconstruction(model, train_clean);
    report.epochs.push_back(stats);
    if (cfg.on_epoch) cfg.on_epoch(stats);

    if (stopper.update(epoch, stats.eval.val_reconstruction_loss)) {
      best_values = snapshot_values(model.params);
    }
    if (stopper.exhausted(epoch)) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  restore_values(model.params, best_values);
  report.best_epoch = stopper.best_epoch();
  report.best_metric = stopper.best();
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

TrainResult train_detector_pt(const Dataset& dataset, const LamarModel& pretrained,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.integration == IntegrationMode::kMask) {
    throw Error(ErrorCode::kUnsupported,
                "train_detector_pt: mask integration unsupported in PT per configuration");
  }
  require_dim(dataset, cfg, "train_detector_pt");
  LamarModel model = LamarModel::create(cfg.model_config(), cfg.seed);
  for (auto& [name, e] : model.params) {
    if (name.rfind(reconstructor::kPrefix, 0) != 0) continue;
    if (!pretrained.params.contains(name)) {
      throw Error(ErrorCode::kDimMismatch,
                  "train_detector_pt: pre-trained model lacks parameter '" + name + "'");
    }
    const Tensor& src = pretrained.params.value(name);
    if (!src.same_shape(e.value)) {
      throw Error(ErrorCode::kDimMismatch, "train_detector_pt: parameter '" + name +
                                               "' has shape " + src.shape_string() +
                                               ", expected " + e.value.shape_string());
    }
    e.value = src;
  }
  model.params.set_frozen_prefix(reconstructor::kPrefix, true);

  ForwardOptions options;
  options.weights = {cfg.weights.detection, 0.0};
  options.reconstructor_eval = true;
  TrainReport report = run_detector_training(model, dataset, cfg, options);
  model.params.set_frozen_prefix(reconstructor::kPrefix, false);
  return {std::move(model), std::move(report)};
}

}  // namespace lamar
