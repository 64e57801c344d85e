// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "lamar/checkpoint.hpp"
#include "lamar/curation.hpp"
#include "lamar/error.hpp"
#include "lamar/evaluator.hpp"
#include "lamar/fixture.hpp"
#include "lamar/trainer.hpp"

using namespace lamar;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs a criterion, turning an escaping exception into a FAIL line.
void criterion(const char* name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dataset planted(std::size_t n_train, std::size_t n_eval, std::size_t dim) {
  FixtureSpec s;
  s.n_train = n_train;
  s.n_val = n_eval;
  s.n_test = n_eval;
  s.dim = dim;
  s.delta = 0.8;
  s.labels = {Label::kTrue, Label::kMiscaptioned};
  return generate_fixture(s);
}

void gradient_correctness() {
  const auto t0 = Clock::now();
  const Dataset ds = planted(3, 2, 8);
  const Batch batch = make_batch(task_records(ds, Split::kTrain, Task::kMiscaptioned), 8);
  std::string detail;
  bool ok = true;
  for (auto mode : {IntegrationMode::kDirect, IntegrationMode::kGate, IntegrationMode::kMask,
                    IntegrationMode::kAttention}) {
    ModelConfig mc;
    mc.dim = 8;
    mc.integration = mode;
    mc.reconstructor = {.blocks = 1, .heads = 1, .d_model = 8, .ff_dim = 16, .dropout = 0.1};
    auto model = LamarModel::create(mc, 0);
    LossFn fn = [&](ParamStore&, bool with_grad) {
      Graph g(with_grad);
      Rng drop(1), mask(2);
      ForwardContext ctx{.train = true, .dropout_rng = &drop, .mask_rng = &mask,
                         .mask_surrogate = true};
      auto res = forward(g, model, batch, ctx);
      if (with_grad) g.backward(res.total_loss);
      return res.total_loss.value()[0];
    };
    GradCheckOptions opts;
    opts.tolerance = 1e-4;
    const auto rep = grad_check(fn, model.params, opts);
    Real worst = 0.0;
    for (const auto& p : rep.params) worst = std::max(worst, p.max_rel_error);
    ok &= rep.passed;
    detail += fmt("%s max_rel=%.2e (%zu tensors) ", to_string(mode).c_str(), worst,
                  rep.params.size());
  }
  const double secs = seconds_since(t0);
  report("gradient_correctness", ok && secs < 60.0, detail + fmt("time=%.1fs", secs));
}

void architecture_conformance() {
  std::string detail;
  bool ok = true;
  for (auto [mode, target] : {std::pair{IntegrationMode::kGate, 19e6},
                              std::pair{IntegrationMode::kAttention, 21e6}}) {
    ModelConfig mc;
    mc.integration = mode;
    const double n = static_cast<double>(param_count(LamarModel::create(mc, 0)));
    const double dev = (n - target) / target;
    ok &= std::abs(dev) <= 0.05;
    detail += fmt("%s=%.0f (%+.2f%% vs %.0fM) ", to_string(mode).c_str(), n, 100 * dev,
                  target / 1e6);
  }
  report("architecture_conformance", ok, detail);
}

void overfit() {
  const auto t0 = Clock::now();
  FixtureSpec s;
  s.n_train = 32;  // 32 truthful + 32 miscaptioned = 64 samples
  s.n_val = 8;
  s.n_test = 8;
  s.dim = 32;
  s.delta = 0.8;
  s.labels = {Label::kTrue, Label::kMiscaptioned};
  const Dataset ds = generate_fixture(s);

  TrainConfig cfg;
  cfg.dim = 32;
  cfg.integration = IntegrationMode::kGate;
  cfg.reconstructor = {.blocks = 2, .heads = 4, .d_model = 32, .ff_dim = 128, .dropout = 0.0};
  cfg.lr = 5e-3;
  cfg.batch = 16;
  cfg.max_epochs = 200;
  cfg.patience = 0;
  cfg.track_train_metrics = true;
  const auto r = train_e2e(ds, cfg);

  const Real initial = *r.report.initial.train_reconstruction_loss;
  std::size_t first_full = 0, first_both = 0;
  Real best_ratio = 1e9;
  for (const auto& e : r.report.epochs) {
    const bool full = *e.eval.train_accuracy == 1.0;
    const Real ratio = *e.eval.train_reconstruction_loss / initial;
    best_ratio = std::min(best_ratio, ratio);
    if (full && !first_full) first_full = e.epoch;
    if (full && ratio < 0.1 && !first_both) first_both = e.epoch;
  }
  const double secs = seconds_since(t0);
  report("overfit", first_both != 0 && secs < 120.0,
         fmt("first 100%% train acc at epoch %zu, acc=1 with L_r<10%% of initial at epoch %zu, "
             "min L_r ratio %.3f, time=%.1fs",
             first_full, first_both, best_ratio, secs));
}

struct GeneralizationRun {
  std::string name;
  TrainResult result;
  Real test_accuracy = 0.0;
};

TrainConfig generalization_config(IntegrationMode mode) {
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.integration = mode;
  cfg.reconstructor = {.blocks = 2, .heads = 4, .d_model = 16, .ff_dim = 64, .dropout = 0.1};
  cfg.lr = 3e-3;
  cfg.batch = 32;
  cfg.max_epochs = 200;
  cfg.patience = 25;
  return cfg;
}

std::vector<GeneralizationRun> generalization(const Dataset& ds) {
  const auto t0 = Clock::now();
  std::vector<GeneralizationRun> runs;
  auto run = [&](const std::string& name, TrainConfig cfg) {
    GeneralizationRun g{name, train_e2e(ds, cfg)};
    g.test_accuracy = evaluate(g.result.model, ds, Split::kTest, cfg.task).accuracy;
    runs.push_back(std::move(g));
  };
  run("gate", generalization_config(IntegrationMode::kGate));
  run("attention", generalization_config(IntegrationMode::kAttention));
  TrainConfig ablation = generalization_config(IntegrationMode::kGate);
  ablation.weights.reconstruction = 0.0;
  run("gate-no-reconstruction", ablation);
  const double secs = seconds_since(t0);

  std::string detail;
  for (const auto& g : runs) {
    detail += fmt("%s test=%.4f (best epoch %zu) ", g.name.c_str(), g.test_accuracy,
                  g.result.report.best_epoch);
  }
  const bool ok = runs[0].test_accuracy >= 0.9 && runs[1].test_accuracy >= 0.9 && secs < 600.0;
  report("generalization", ok, detail + fmt("time=%.1fs", secs));
  return runs;
}

void diagnostics_sign(LamarModel& gate_model, const Dataset& ds) {
  const auto rep = diagnostics(gate_model, ds, Split::kTest, {.gate = true});
  const Real r_pred = rep.reconstruction_vs_predicted.r;
  const Real r_gate = rep.gate_vs_reconstruction->r;
  report("diagnostics_sign", r_pred > 0 && r_gate > 0,
         fmt("n=%zu r(L_r, predicted falsified)=%.3f r(gate mean, L_r)=%.3f", rep.n, r_pred,
             r_gate));
}

void filtering_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 eng(7);
  std::uniform_int_distribution<std::uint32_t> orig_len(40, 200);
  std::lognormal_distribution<double> ratio(0.35, 0.3);
  Dataset corpus;
  corpus.manifest.dim = 2;
  const std::vector<float> a = {1.0f, 0.0f}, b = {0.0f, 1.0f};
  std::vector<std::pair<std::uint32_t, std::uint32_t>> lengths;
  for (int i = 0; i < 10000; ++i) {
    const std::uint32_t o = orig_len(eng);
    const auto c = static_cast<std::uint32_t>(std::lround(o * ratio(eng)));
    lengths.emplace_back(o, c);
    const std::string key = "pair-" + std::to_string(i);
    corpus.records.push_back({key + ":t", Split::kTrain, Label::kTrue, a, a, a, o, o});
    corpus.records.push_back({key + ":m", Split::kTrain, Label::kMiscaptioned, a, b, a, o, c});
  }
  corpus.recount();

  bool ok = true;
  double previous = 0.0;
  std::string detail;
  for (int l : {0, 5, 10, 15, 25, 50, -1}) {
    std::size_t kept = 0;
    for (const auto& [o, c] : lengths) {
      kept += l < 0 || std::uint64_t{c} * 100 <= std::uint64_t{o} * (100 + l);
    }
    const auto res = filter_by_length(corpus, l < 0 ? LengthThreshold::none()
                                                    : LengthThreshold::of(l));
    const auto& counts = res.dataset.manifest.counts[static_cast<int>(Split::kTrain)];
    const bool exact = res.report.kept_pairs == kept &&
                       res.report.retention == static_cast<double>(kept) / lengths.size();
    const bool balanced = res.report.removed_truthful == res.report.removed_generated &&
                          counts[0] == counts[1] && counts[0] == kept;
    const bool monotone = res.report.retention >= previous;
    ok &= exact && balanced && monotone;
    previous = res.report.retention;
    detail += fmt("l=%s:%.3f ", res.report.threshold.label().c_str(), res.report.retention);
  }
  ok &= previous == 1.0;
  const double secs = seconds_since(t0);
  report("filtering_oracle", ok && secs < 5.0, detail + fmt("time=%.2fs", secs));
}

void prompt_selection() {
  // 100 calibration samples; the detector flags 30 truthful captions, so a
  // prompt whose k generated captions are caught scores (70 + k) / 200.
  const std::vector<std::pair<std::string, int>> prompts = {
      {"p1", 15}, {"p2", 44}, {"p3", 54}, {"p4", 72}, {"p5", 80}, {"p6", 97}};
  std::vector<CalibrationSample> calibration;
  std::set<std::string> flagged_truthful;
  for (int i = 0; i < 100; ++i) {
    const std::string img = fmt("cal-%03d", i);
    calibration.push_back({img, "caption " + std::to_string(i)});
    if (i < 30) flagged_truthful.insert(img);
  }
  auto make_client = [&] {
    ScriptedVlmClient client(0);
    client.set_truthful_script({flagged_truthful, 0.0});
    for (const auto& [id, k] : prompts) {
      std::set<std::string> caught;
      for (int i = 0; i < k; ++i) caught.insert(calibration[i].image);
      client.set_prompt_script(id, {caught, 0.0});
    }
    return client;
  };
  auto score_all = [&] {
    auto client = make_client();
    std::vector<PromptCandidate> c;
    for (const auto& [id, k] : prompts) {
      c.push_back({id, score_prompt({id}, calibration, client, "p_dt")});
    }
    return c;
  };
  auto candidates = score_all();
  auto again = score_all();
  const auto sel = select_prompts(candidates, {0.55, 0.80});
  std::vector<std::string> ids;
  std::string detail = "accuracies";
  bool repeatable = true;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    detail += fmt(" %.3f", *candidates[i].accuracy);
    repeatable &= *candidates[i].accuracy == *again[i].accuracy;
  }
  for (const auto& c : sel.selected) ids.push_back(c.id);
  const bool ok = repeatable && ids == std::vector<std::string>{"p2", "p3", "p4", "p5"};
  detail += "; selected";
  for (const auto& id : ids) detail += " " + id;
  report("prompt_selection", ok, detail);
}

void determinism_and_persistence() {
  const Dataset ds = planted(200, 50, 16);
  TrainConfig cfg = generalization_config(IntegrationMode::kGate);
  cfg.max_epochs = 8;
  cfg.seed = 0;
  auto a = train_e2e(ds, cfg);
  auto b = train_e2e(ds, cfg);
  bool same = a.report.epochs.size() == b.report.epochs.size();
  for (std::size_t i = 0; same && i < a.report.epochs.size(); ++i) {
    const auto& x = a.report.epochs[i];
    const auto& y = b.report.epochs[i];
    same = x.loss == y.loss && x.detection_loss == y.detection_loss &&
           x.reconstruction_loss == y.reconstruction_loss &&
           x.eval.val_accuracy == y.eval.val_accuracy;
  }
  same &= a.model.params.same_values(b.model.params);

  const auto path = std::filesystem::temp_directory_path() / "lamar_acceptance.lmrc";
  save_checkpoint(a.model, path);
  auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  const Real before = evaluate(a.model, ds, Split::kVal, cfg.task).accuracy;
  const Real after = evaluate(loaded, ds, Split::kVal, cfg.task).accuracy;
  report("determinism_and_persistence",
         same && before == after && after == a.report.best_metric,
         fmt("%zu epochs bitwise identical: %s; val accuracy %.4f before / %.4f after reload",
             a.report.epochs.size(), same ? "yes" : "no", before, after));
}

}  // namespace

int main() {
  criterion("gradient_correctness", gradient_correctness);
  criterion("architecture_conformance", architecture_conformance);
  criterion("overfit", overfit);
  criterion("generalization", [] {
    const Dataset ds = planted(1000, 200, 16);
    auto runs = generalization(ds);
    criterion("diagnostics_sign", [&] { diagnostics_sign(runs[0].result.model, ds); });
  });
  criterion("filtering_oracle", filtering_oracle);
  criterion("prompt_selection", prompt_selection);
  criterion("determinism_and_persistence", determinism_and_persistence);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
