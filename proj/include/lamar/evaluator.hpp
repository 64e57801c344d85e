#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamar/dataset.hpp"
#include "lamar/detector.hpp"
#include "lamar/model.hpp"

namespace lamar {

struct SamplePrediction {
  std::string id;
  Label gold = Label::kTrue;
  Verdict verdict;
  Real reconstruction_loss = 0.0;            // per-sample MSE(c_hat, truth)
  std::optional<Real> gate_mean;             // gate integration only
  std::optional<std::array<Real, 3>> attention;  // row-mean attention on (image, caption, recon)
};

// Eval-mode forward over the records in fixed batches. Side-effect free.
std::vector<SamplePrediction> predict(LamarModel& model,
                                      const std::vector<const EmbeddingRecord*>& records,
                                      std::size_t batch_size = 256);

struct EvalReport {
  Task task = Task::kMiscaptioned;
  std::size_t n = 0;
  Real accuracy = 0.0;
  std::vector<Real> per_class_accuracy;               // NaN-free: 0 for empty classes
  std::vector<std::vector<std::size_t>> confusion;    // [gold class][predicted class]
};

// Records of one split whose label belongs to the task, in file order.
std::vector<const EmbeddingRecord*> task_records(const Dataset& dataset, Split split, Task task);

// Counting core: accuracy and confusion over task class indices.
EvalReport summarize(const std::vector<SamplePrediction>& predictions, Task task);

// Evaluates the split's records that belong to the task.
EvalReport evaluate(LamarModel& model, const Dataset& dataset, Split split, Task task);

struct PearsonResult {
  Real r = 0.0;
  bool zero_variance = false;  // r is defined as 0 when either input is constant
};
PearsonResult pearson(const std::vector<Real>& x, const std::vector<Real>& y);

struct DiagnosticsRequest {
  bool attention = false;
  bool gate = false;
};

struct DiagnosticsReport {
  std::size_t n = 0;
  // [gold label][token] mean attention weight, with per-label sample counts.
  std::optional<std::array<std::array<Real, 3>, kNumLabels>> attention_means;
  std::array<std::size_t, kNumLabels> label_counts{};
  std::optional<PearsonResult> gate_vs_reconstruction;
  PearsonResult reconstruction_vs_predicted;  // r(L_r, predicted-falsified)
};

DiagnosticsReport diagnostics(LamarModel& model, const Dataset& dataset, Split split,
                              DiagnosticsRequest request);
DiagnosticsReport diagnostics_from(const std::vector<SamplePrediction>& predictions,
                                   DiagnosticsRequest request);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const DiagnosticsReport& report);
// Verdict export line: {id, task, logits, probabilities, predicted, gold}.
nlohmann::json verdict_json(const SamplePrediction& p, Task task);

}  // namespace lamar
