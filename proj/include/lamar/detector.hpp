#pragma once

#include <span>
#include <vector>

#include "lamar/graph.hpp"
#include "lamar/labels.hpp"
#include "lamar/param_store.hpp"

namespace lamar {

class Rng;

namespace detector {

// Rows of the detector input per sample: five fused rows plus the integrated
// reconstruction.
inline constexpr std::size_t kInputRows = 6;

// det.w0: (6d x d), det.b0, det.w1: (d x n), det.b1.
void init_params(ParamStore& store, std::size_t dim, Task task, Rng& rng);

// logits = W1 * GELU(W0 * flatten(sequence) + b0) + b1; sequence is (6B) x d.
Var classify_logits(ParamStore& store, Var sequence, Task task);

// Task loss in logits form: BCE for the binary tasks, cross-entropy otherwise.
// Labels are data labels; binary tasks remap the falsified label to 1.
Var detection_loss(Var logits, std::span<const Label> labels, Task task);

}  // namespace detector

struct Verdict {
  std::vector<Real> logits;
  std::vector<Real> probabilities;  // binary: {P(true), P(falsified)}
  int predicted_class = 0;          // task class index
  Label predicted = Label::kTrue;
};

// Binary: falsified iff sigmoid(logit) > 0.5; ties resolve to the lower class.
Verdict make_verdict(std::span<const Real> logits, Task task);

}  // namespace lamar
