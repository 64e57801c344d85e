#pragma once

namespace lamar {

class Rng;

// Per-pass switches shared by every module of the network.
struct ForwardContext {
  bool train = false;
  Rng* dropout_rng = nullptr;
  Rng* mask_rng = nullptr;
  // Replaces the sampled Bernoulli mask by its probabilities, which makes the
  // mask integrator deterministic and exactly differentiable (gradient checks).
  bool mask_surrogate = false;
};

}  // namespace lamar
