#include "lamar/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "lamar/error.hpp"
#include "lamar/rng.hpp"

namespace lamar {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  auto [it, inserted] = entries_.try_emplace(name);
  if (!inserted) {
    throw Error(ErrorCode::kInvalidArgument, "param_store: duplicate parameter '" + name + "'");
  }
  it->second.value = std::move(value);
  return it->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "param_store: unknown parameter '" + name + "'");
  }
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  return const_cast<ParamStore*>(this)->entry(name);
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
Tensor& ParamStore::grad(const std::string& name) { return entry(name).grad; }
const Tensor& ParamStore::grad(const std::string& name) const { return entry(name).grad; }

void ParamStore::set_frozen(const std::string& name, bool frozen) { entry(name).frozen = frozen; }

void ParamStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& [name, e] : entries_) {
    if (name.rfind(prefix, 0) == 0) e.frozen = frozen;
  }
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) {
    if (e.grad.same_shape(e.value)) {
      e.grad.fill(0.0);
    } else {
      e.grad = Tensor(e.value.rows(), e.value.cols());
    }
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = other.entries_.begin();
  for (const auto& [name, e] : entries_) {
    if (name != it->first || !(e.value == it->second.value)) return false;
    ++it;
  }
  return true;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const Real bound = std::sqrt(6.0 / static_cast<Real>(fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, Real stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

void adam_step(ParamStore& params, AdamState& state) {
  const AdamConfig& cfg = state.config;
  if (!(cfg.lr >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "adam_step: learning rate must be non-negative");
  }
  for (auto& [name, e] : params) {
    if (e.frozen) continue;
    if (!e.grad.same_shape(e.value)) {
      throw Error(ErrorCode::kMissingGradient,
                  "adam_step: missing gradient for parameter '" + name + "'");
    }
  }
  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real bias1 = 1.0 - std::pow(cfg.beta1, t);
  const Real bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : params) {
    if (e.frozen) continue;
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (!m.same_shape(e.value)) m = Tensor(e.value.rows(), e.value.cols());
    if (!v.same_shape(e.value)) v = Tensor(e.value.rows(), e.value.cols());
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const Real g = e.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const Real m_hat = m[i] / bias1;
      const Real v_hat = v[i] / bias2;
      e.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& p : params) {
    if (!(p.max_rel_error <= tolerance)) out.push_back(p.name);
  }
  return out;
}

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  const Real base = loss_fn(params, true);
  const Real again = loss_fn(params, false);
  if (base != again) {
    throw Error(ErrorCode::kNonDeterministic,
                "grad_check: loss differs across two evaluations at identical parameters");
  }

  std::map<std::string, Tensor> analytic;
  for (const auto& [name, e] : params) analytic[name] = e.grad;

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& [name, e] : params) {
    if (e.frozen && !options.include_frozen) continue;
    ParamGradError err;
    err.name = name;
    const Tensor& a = analytic[name];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const Real saved = e.value[i];
      e.value[i] = saved + options.step;
      const Real plus = loss_fn(params, false);
      e.value[i] = saved - options.step;
      const Real minus = loss_fn(params, false);
      e.value[i] = saved;
      const Real numeric = (plus - minus) / (2.0 * options.step);
      const Real denom = std::max({std::abs(a[i]), std::abs(numeric), options.abs_floor});
      const Real rel = std::abs(a[i] - numeric) / denom;
      if (rel > err.max_rel_error || !std::isfinite(rel)) {
        err.max_rel_error = rel;
        err.worst_index = i;
        err.analytic = a[i];
        err.numeric = numeric;
      }
    }
    report.params.push_back(err);
  }
  report.passed = report.failing().empty();
  return report;
}

}  // namespace lamar
