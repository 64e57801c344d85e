#include "lamar/detector.hpp"

#include <algorithm>
#include <cmath>

#include "lamar/error.hpp"
#include "lamar/rng.hpp"

namespace lamar {
namespace detector {

void init_params(ParamStore& store, std::size_t dim, Task task, Rng& rng) {
  const std::size_t n = output_width(task);
  store.add("det.w0", xavier_uniform(kInputRows * dim, dim, rng));
  store.add("det.b0", Tensor(1, dim));
  store.add("det.w1", xavier_uniform(dim, n, rng));
  store.add("det.b1", Tensor(1, n));
}

Var classify_logits(ParamStore& store, Var sequence, Task task) {
  Graph& g = sequence.graph();
  const Tensor& w1 = store.value("det.w1");
  if (w1.cols() != output_width(task)) {
    throw Error(ErrorCode::kInvalidArgument,
                "classify: detector has " + std::to_string(w1.cols()) +
                    " outputs but task '" + to_string(task) + "' needs " +
                    std::to_string(output_width(task)));
  }
  const std::size_t d = sequence.cols();
  if (sequence.rows() % kInputRows != 0 || store.value("det.w0").rows() != kInputRows * d) {
    throw Error(ErrorCode::kDimMismatch,
                "classify: sequence " + sequence.value().shape_string() +
                    " incompatible with detector input " + store.value("det.w0").shape_string());
  }
  Var flat = ops::reshape(sequence, sequence.rows() / kInputRows, kInputRows * d);
  Var hidden = ops::gelu(ops::linear(flat, g.parameter(store, "det.w0"), g.parameter(store, "det.b0")));
  return ops::linear(hidden, g.parameter(store, "det.w1"), g.parameter(store, "det.b1"));
}

Var detection_loss(Var logits, std::span<const Label> labels, Task task) {
  if (logits.cols() != output_width(task)) {
    throw Error(ErrorCode::kInvalidArgument, "detection_loss: logits width " +
                                                 std::to_string(logits.cols()) +
                                                 " inconsistent with task '" + to_string(task) + "'");
  }
  std::vector<int> targets;
  targets.reserve(labels.size());
  for (Label l : labels) targets.push_back(task_target(l, task));
  if (task == Task::kMulticlass) return ops::cross_entropy(logits, targets);
  return ops::bce_with_logits(logits, targets);
}

}  // namespace detector

Verdict make_verdict(std::span<const Real> logits, Task task) {
  if (logits.size() != output_width(task)) {
    throw Error(ErrorCode::kInvalidArgument, "verdict: " + std::to_string(logits.size()) +
                                                 " logits inconsistent with task '" +
                                                 to_string(task) + "'");
  }
  Verdict v;
  v.logits.assign(logits.begin(), logits.end());
  if (task == Task::kMulticlass) {
    const Real mx = *std::max_element(logits.begin(), logits.end());
    Real sum = 0.0;
    for (Real z : logits) sum += std::exp(z - mx);
    for (Real z : logits) v.probabilities.push_back(std::exp(z - mx) / sum);
    // max_element returns the first maximum: ties go to the lower index.
    v.predicted_class = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  } else {
    const Real z = logits[0];
    const Real p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    v.probabilities = {1.0 - p, p};
    v.predicted_class = p > 0.5 ? 1 : 0;
  }
  v.predicted = task_label(v.predicted_class, task);
  return v;
}

}  // namespace lamar
