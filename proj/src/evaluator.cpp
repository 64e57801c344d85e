#include "lamar/evaluator.hpp"

#include <cmath>

#include "lamar/error.hpp"

namespace lamar {

std::vector<SamplePrediction> predict(LamarModel& model,
                                      const std::vector<const EmbeddingRecord*>& records,
                                      std::size_t batch_size) {
  const std::size_t d = model.config.dim;
  const Task task = model.config.task;
  std::vector<SamplePrediction> out;
  out.reserve(records.size());
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t end = std::min(records.size(), begin + batch_size);
    std::vector<const EmbeddingRecord*> chunk(records.begin() + begin, records.begin() + end);
    for (const auto* r : chunk) {
      if (!label_in_task(r->label, task)) {
        throw Error(ErrorCode::kInvalidArgument, "evaluate: record '" + r->id + "' label '" +
                                                     to_string(r->label) +
                                                     "' outside task '" + to_string(task) + "'");
      }
    }
    Batch batch = make_batch(chunk, d);
    Graph g(false);
    ForwardContext ctx;
    auto fr = forward(g, model, batch, ctx);
    const Tensor& logits = fr.logits.value();
    const Tensor& c_hat = fr.c_hat.value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      SamplePrediction p;
      p.id = chunk[i]->id;
      p.gold = chunk[i]->label;
      p.verdict = make_verdict(logits.row_span(i), task);
      Real sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const Real diff = c_hat(i, k) - batch.truth(i, k);
        sq += diff * diff;
      }
      p.reconstruction_loss = sq / static_cast<Real>(d);
      if (model.config.integration == IntegrationMode::kGate && fr.integration.gate) {
        const Tensor& gate = fr.integration.gate->value();
        Real s = 0.0;
        for (Real v : gate.row_span(i)) s += v;
        p.gate_mean = s / static_cast<Real>(d);
      }
      if (fr.integration.attention) {
        const Tensor& w = fr.integration.attention->value();
        std::array<Real, 3> mean{};
        for (std::size_t row = 0; row < 3; ++row) {
          for (std::size_t tok = 0; tok < 3; ++tok) mean[tok] += w(3 * i + row, tok) / 3.0;
        }
        p.attention = mean;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<const EmbeddingRecord*> task_records(const Dataset& dataset, Split split,
                                                Task task) {
  std::vector<const EmbeddingRecord*> out;
  for (const auto& r : dataset.records) {
    if (r.split == split && label_in_task(r.label, task)) out.push_back(&r);
  }
  return out;
}

EvalReport summarize(const std::vector<SamplePrediction>& predictions, Task task) {
  const std::size_t k = class_count(task);
  EvalReport rep;
  rep.task = task;
  rep.n = predictions.size();
  rep.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (const auto& p : predictions) {
    const int gold = task_target(p.gold, task);
    const int pred = task_target(p.verdict.predicted, task);
    ++rep.confusion[gold][pred];
    if (gold == pred) ++correct;
  }
  rep.accuracy = rep.n == 0 ? 0.0 : static_cast<Real>(correct) / static_cast<Real>(rep.n);
  rep.per_class_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0;
    for (std::size_t v : rep.confusion[c]) row += v;
    rep.per_class_accuracy[c] =
        row == 0 ? 0.0 : static_cast<Real>(rep.confusion[c][c]) / static_cast<Real>(row);
  }
  return rep;
}

EvalReport evaluate(LamarModel& model, const Dataset& dataset, Split split, Task task) {
  if (task != model.config.task) {
    throw Error(ErrorCode::kInvalidArgument, "evaluate: model trained for task '" +
                                                 to_string(model.config.task) +
                                                 "', asked for '" + to_string(task) + "'");
  }
  return summarize(predict(model, task_records(dataset, split, task)), task);
}

PearsonResult pearson(const std::vector<Real>& x, const std::vector<Real>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kDimMismatch, "pearson: inputs differ in length");
  }
  PearsonResult res;
  const std::size_t n = x.size();
  if (n < 2) {
    res.zero_variance = true;
    return res;
  }
  Real mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<Real>(n);
  my /= static_cast<Real>(n);
  Real sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    res.zero_variance = true;
    return res;
  }
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return res;
}

DiagnosticsReport diagnostics_from(const std::vector<SamplePrediction>& predictions,
                                   DiagnosticsRequest request) {
  DiagnosticsReport rep;
  rep.n = predictions.size();
  std::vector<Real> recon, falsified, gate;
  std::array<std::array<Real, 3>, kNumLabels> sums{};
  for (const auto& p : predictions) {
    recon.push_back(p.reconstruction_loss);
    falsified.push_back(p.verdict.predicted == Label::kTrue ? 0.0 : 1.0);
    const int l = static_cast<int>(p.gold);
    ++rep.label_counts[l];
    if (request.attention) {
      if (!p.attention) {
        throw Error(ErrorCode::kUnsupported,
                    "diagnostics: attention statistics need an attention-integration model");
      }
      for (std::size_t t = 0; t < 3; ++t) sums[l][t] += (*p.attention)[t];
    }
    if (request.gate) {
      if (!p.gate_mean) {
        throw Error(ErrorCode::kUnsupported,
                    "diagnostics: gate statistics need a gate-integration model");
      }
      gate.push_back(*p.gate_mean);
    }
  }
  if (request.attention) {
    std::array<std::array<Real, 3>, kNumLabels> means{};
    for (int l = 0; l < kNumLabels; ++l) {
      if (rep.label_counts[l] == 0) continue;
      for (std::size_t t = 0; t < 3; ++t) means[l][t] = sums[l][t] / rep.label_counts[l];
    }
    rep.attention_means = means;
  }
  if (request.gate) rep.gate_vs_reconstruction = pearson(gate, recon);
  rep.reconstruction_vs_predicted = pearson(recon, falsified);
  return rep;
}

DiagnosticsReport diagnostics(LamarModel& model, const Dataset& dataset, Split split,
                              DiagnosticsRequest request) {
  if (request.attention && model.config.integration != IntegrationMode::kAttention) {
    throw Error(ErrorCode::kUnsupported,
                "diagnostics: attention statistics requested from a '" +
                    to_string(model.config.integration) + "' model");
  }
  if (request.gate && model.config.integration != IntegrationMode::kGate) {
    throw Error(ErrorCode::kUnsupported, "diagnostics: gate statistics requested from a '" +
                                             to_string(model.config.integration) + "' model");
  }
  return diagnostics_from(
      predict(model, task_records(dataset, split, model.config.task)), request);
}

namespace {

nlohmann::json pearson_json(const PearsonResult& p) {
  return {{"r", p.r}, {"zero_variance", p.zero_variance}};
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  return {{"task", to_string(r.task)},
          {"n", r.n},
          {"accuracy", r.accuracy},
          {"per_class_accuracy", r.per_class_accuracy},
          {"confusion", r.confusion}};
}

nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j = {{"n", r.n},
                      {"reconstruction_vs_predicted_falsified",
                       pearson_json(r.reconstruction_vs_predicted)}};
  nlohmann::json counts = nlohmann::json::object();
  for (int l = 0; l < kNumLabels; ++l) counts[to_string(static_cast<Label>(l))] = r.label_counts[l];
  j["label_counts"] = counts;
  if (r.gate_vs_reconstruction) {
    j["gate_vs_reconstruction"] = pearson_json(*r.gate_vs_reconstruction);
  }
  if (r.attention_means) {
    nlohmann::json att = nlohmann::json::object();
    for (int l = 0; l < kNumLabels; ++l) {
      if (r.label_counts[l] == 0) continue;
      const auto& m = (*r.attention_means)[l];
      att[to_string(static_cast<Label>(l))] = {
          {"image", m[0]}, {"caption", m[1]}, {"reconstruction", m[2]}};
    }
    j["attention_means"] = att;
  }
  return j;
}

nlohmann::json verdict_json(const SamplePrediction& p, Task task) {
  return {{"id", p.id},
          {"task", to_string(task)},
          {"logits", p.verdict.logits},
          {"probabilities", p.verdict.probabilities},
          {"predicted", to_string(p.verdict.predicted)},
          {"gold", to_string(p.gold)}};
}

}  // namespace lamar
