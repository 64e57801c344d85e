#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lamar/tensor.hpp"

namespace lamar {

class Rng;

// Named trainable tensors and their gradient buffers. Iteration order is the
// lexicographic name order, which every serializer and optimizer relies on.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;  // empty until zero_grad() allocates it
    bool frozen = false;
  };

  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  void set_frozen(const std::string& name, bool frozen);
  // Freezes every parameter whose name starts with prefix.
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  bool frozen(const std::string& name) const { return entry(name).frozen; }

  // Allocates (or resets) every gradient buffer to zeros of the parameter shape.
  void zero_grad();

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return entries_.size(); }
  // Total number of trainable scalars, frozen or not.
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Value equality over names, shapes and bits.
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Entry> entries_;
};

// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor normal_tensor(std::size_t rows, std::size_t cols, Real stddev, Rng& rng);

struct AdamConfig {
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected Adam update over every non-frozen parameter.
// Throws kMissingGradient when a gradient buffer is absent or misshapen.
void adam_step(ParamStore& params, AdamState& state);

// Finite-difference gradient verification.
//
// The loss callback evaluates the scalar loss at the current parameter values.
// When `with_grad` is set it must also leave the analytic gradient in
// `params` (gradients are zeroed by grad_check before that call).
using LossFn = std::function<Real(ParamStore& params, bool with_grad)>;

struct GradCheckOptions {
  Real step = 1e-5;
  Real tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  Real abs_floor = 1e-6;
  bool include_frozen = false;
};

struct ParamGradError {
  std::string name;
  Real max_rel_error = 0.0;
  std::size_t worst_index = 0;
  Real analytic = 0.0;
  Real numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradError> params;
  Real tolerance = 0.0;
  bool passed = false;

  std::vector<std::string> failing() const;
};

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace lamar
