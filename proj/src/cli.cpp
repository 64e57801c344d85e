#include "lamar/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "lamar/checkpoint.hpp"
#include "lamar/curation.hpp"
#include "lamar/error.hpp"
#include "lamar/evaluator.hpp"
#include "lamar/fixture.hpp"
#include "lamar/trainer.hpp"
#include "lamar/vlm_client.hpp"

namespace lamar::cli {

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    auto l = spdlog::stderr_logger_st("lamar");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("LAMAR_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return log;
}

// Errors raised while reading and checking inputs map to exit code 1, the
// rest to exit code 2.
enum class Phase { kValidate, kWork };

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

nlohmann::json read_json(const std::string& path) {
  const std::string text = io::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "'" + path + "': invalid JSON: " + e.what());
  }
}

// JSON array file, or one JSON value per line.
std::vector<nlohmann::json> read_json_items(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<nlohmann::json> out;
  try {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
      for (auto& v : nlohmann::json::parse(text)) out.push_back(v);
      return out;
    }
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      out.push_back(nlohmann::json::parse(line));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, "'" + path + "': invalid JSON: " + e.what());
  }
  return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  io::write_file_atomic(path, j.dump(2) + "\n");
}

std::string jsonl(const std::vector<nlohmann::json>& lines) {
  std::string s;
  for (const auto& l : lines) s += l.dump() + "\n";
  return s;
}

Split split_arg(const std::string& s) { return parse_split(s); }

struct FixtureArgs {
  std::size_t n = 100;
  std::optional<std::size_t> n_val;
  std::optional<std::size_t> n_test;
  std::size_t d = 32;
  double delta = 0.8;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string labels = "true,mc,ooc";
  std::string out;
};

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out = "model.lmrc";
  std::string report;
  std::string pretrained;
  std::optional<std::string> mode, task, integration;
  std::optional<double> lr, sigma, mu, dp, dropout, recon_weight;
  std::optional<std::size_t> batch, epochs, patience, blocks, heads, ff;
  std::optional<std::uint64_t> seed;
  bool track_train = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
  std::string verdicts;
  std::string csv;
  bool attention = false;
  bool gate = false;
};

struct FilterArgs {
  std::string data;
  std::string l = "none";
  std::string out;
  std::string report;
};

struct PromptArgs {
  std::string candidates;
  std::string calibration;
  std::string mock_script;
  std::string server;
  std::string detect_prompt = "p_dt";
  double lo = 0.55;
  double hi = 0.80;
  int retries = 3;
  int timeout_ms = 30000;
  std::string out;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, bool pretrain) {
  cmd->add_option("--data", a.data, "LMR1 dataset")->required();
  cmd->add_option("--config", a.config, "JSON training config; flags override it");
  cmd->add_option("--out", a.out, "checkpoint path");
  cmd->add_option("--report", a.report, "report path (default <out>.report.json)");
  cmd->add_option("--mode", a.mode, pretrain ? "pt-gauss | pt-drop" : "e2e | pt-gauss | pt-drop");
  if (!pretrain) {
    cmd->add_option("--task", a.task, "mc | ooc | multi");
    cmd->add_option("--integration", a.integration, "direct | gate | mask | attention");
    cmd->add_option("--pretrained", a.pretrained, "pre-trained reconstructor checkpoint (PT modes)");
    cmd->add_option("--recon-weight", a.recon_weight, "reconstruction loss weight");
  }
  cmd->add_option("--lr", a.lr);
  cmd->add_option("--batch", a.batch);
  cmd->add_option("--epochs", a.epochs, "maximum epochs");
  cmd->add_option("--patience", a.patience, "0 disables early stopping");
  cmd->add_option("--sigma", a.sigma);
  cmd->add_option("--mu", a.mu);
  cmd->add_option("--dp", a.dp);
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--blocks", a.blocks);
  cmd->add_option("--heads", a.heads);
  cmd->add_option("--ff", a.ff, "feed-forward width");
  cmd->add_option("--dropout", a.dropout, "encoder dropout");
  cmd->add_flag("--track-train", a.track_train, "record train accuracy and L_r per epoch");
}

TrainConfig build_config(const TrainArgs& a, std::size_t data_dim) {
  TrainConfig cfg;
  bool dim_given = false;
  if (!a.config.empty()) {
    const nlohmann::json j = read_json(a.config);
    apply_json(cfg, j);
    dim_given = j.contains("dim");
  }
  if (a.mode) cfg.mode = parse_training_mode(*a.mode);
  if (a.task) cfg.task = parse_task(*a.task);
  if (a.integration) cfg.integration = parse_integration_mode(*a.integration);
  if (a.lr) cfg.lr = *a.lr;
  if (a.sigma) cfg.sigma = *a.sigma;
  if (a.mu) cfg.mu = *a.mu;
  if (a.dp) cfg.dp = *a.dp;
  if (a.recon_weight) cfg.weights.reconstruction = *a.recon_weight;
  if (a.batch) cfg.batch = *a.batch;
  if (a.epochs) cfg.max_epochs = *a.epochs;
  if (a.patience) cfg.patience = *a.patience;
  if (a.seed) cfg.seed = *a.seed;
  if (a.blocks) cfg.reconstructor.blocks = *a.blocks;
  if (a.heads) cfg.reconstructor.heads = *a.heads;
  if (a.ff) cfg.reconstructor.ff_dim = *a.ff;
  if (a.dropout) cfg.reconstructor.dropout = *a.dropout;
  if (a.track_train) cfg.track_train_metrics = true;
  if (!dim_given) cfg.dim = data_dim;
  cfg.validate();
  return cfg;
}

void log_epochs(TrainConfig& cfg) {
  cfg.on_epoch = [](const EpochStats& e) {
    if (e.eval.val_accuracy) {
      logger()->info("epoch {} loss {:.6f} L_d {:.6f} L_r {:.6f} val_acc {:.4f}", e.epoch, e.loss,
                     e.detection_loss, e.reconstruction_loss, *e.eval.val_accuracy);
    } else {
      logger()->info("epoch {} L_r {:.6f} val_L_r {:.6f}", e.epoch, e.reconstruction_loss,
                     e.eval.val_reconstruction_loss);
    }
  };
}

Dataset truthful_subset(const Dataset& data) {
  Dataset out;
  out.manifest = data.manifest;
  for (const auto& r : data.records) {
    if (r.label == Label::kTrue) out.records.push_back(r);
  }
  out.recount();
  return out;
}

nlohmann::json train_report_json(const TrainConfig& cfg, const LamarModel& model,
                                  const TrainReport& report) {
  return {{"config", to_json(cfg)}, {"param_count", param_count(model)}, {"train", to_json(report)}};
}

std::string report_path(const TrainArgs& a) {
  return a.report.empty() ? a.out + ".report.json" : a.report;
}

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string csv_number(const std::optional<Real>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(17) << *v;
  return os.str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reconstruction-guided multimodal misinformation detection"};
  app.name("lamar");
  app.require_subcommand(1);

  FixtureArgs fx;
  auto* fixture = app.add_subcommand("fixture", "write a synthetic planted-signal dataset");
  fixture->add_option("--n", fx.n, "train samples per class");
  fixture->add_option("--n-val", fx.n_val, "validation samples per class (default max(2, n/5))");
  fixture->add_option("--n-test", fx.n_test, "test samples per class (default max(2, n/5))");
  fixture->add_option("--d", fx.d, "embedding dimension");
  fixture->add_option("--delta", fx.delta, "miscaption perturbation magnitude");
  fixture->add_option("--noise", fx.noise, "image noise magnitude (L2 norm)");
  fixture->add_option("--seed", fx.seed);
  fixture->add_option("--labels", fx.labels, "comma-separated subset of true,mc,ooc");
  fixture->add_option("--out", fx.out, "output LMR1 path")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "train a detector (E2E, or PT on a frozen reconstructor)");
  add_train_options(train, tr, false);
  TrainArgs pt;
  auto* pretrain = app.add_subcommand("pretrain", "pre-train the reconstructor on truthful records");
  add_train_options(pretrain, pt, true);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "accuracy and confusion matrix of a checkpoint");
  eval->add_option("--checkpoint", ev.checkpoint)->required();
  eval->add_option("--data", ev.data)->required();
  eval->add_option("--split", ev.split, "train | val | test");
  eval->add_option("--out", ev.out, "report path");
  eval->add_option("--verdicts", ev.verdicts, "per-sample verdict JSONL path");

  EvalArgs dg;
  auto* diagnose = app.add_subcommand("diagnose", "attention and gate diagnostics");
  diagnose->add_option("--checkpoint", dg.checkpoint)->required();
  diagnose->add_option("--data", dg.data)->required();
  diagnose->add_option("--split", dg.split, "train | val | test");
  diagnose->add_flag("--attention", dg.attention, "attention means per class");
  diagnose->add_flag("--gate", dg.gate, "gate/reconstruction correlation");
  diagnose->add_option("--out", dg.out, "report path");
  diagnose->add_option("--csv", dg.csv, "per-sample CSV path");

  FilterArgs fl;
  auto* filter = app.add_subcommand("filter", "relative-length filtering of (truthful, generated) pairs");
  filter->add_option("--data", fl.data)->required();
  filter->add_option("--l", fl.l, "threshold in percent, or none");
  filter->add_option("--out", fl.out, "filtered LMR1 path");
  filter->add_option("--report", fl.report, "retention report path");

  PromptArgs pr;
  auto* prompt = app.add_subcommand("prompt-score", "score and select generation prompts");
  prompt->add_option("--candidates", pr.candidates, "JSON list of prompt ids")->required();
  prompt->add_option("--calibration", pr.calibration, "JSON/JSONL of {image, caption}")->required();
  auto* mock_opt = prompt->add_option("--mock-script", pr.mock_script, "in-process scripted client");
  auto* server_opt = prompt->add_option("--server", pr.server, "server command speaking JSON lines");
  mock_opt->excludes(server_opt);
  prompt->add_option("--detect-prompt", pr.detect_prompt, "detection prompt id");
  prompt->add_option("--lo", pr.lo, "band lower bound");
  prompt->add_option("--hi", pr.hi, "band upper bound");
  prompt->add_option("--retries", pr.retries, "attempts per client call");
  prompt->add_option("--timeout-ms", pr.timeout_ms, "per-call timeout for --server");
  prompt->add_option("--out", pr.out, "result path");

  EvalArgs ex;
  auto* exp = app.add_subcommand("export", "write per-sample verdicts as JSON lines");
  exp->add_option("--checkpoint", ex.checkpoint)->required();
  exp->add_option("--data", ex.data)->required();
  exp->add_option("--split", ex.split, "train | val | test");
  exp->add_option("--out", ex.out, "verdict JSONL path")->required();

  std::string mock_script;
  auto* mock = app.add_subcommand("mock-vlm", "serve the scripted VLM client on stdin/stdout");
  mock->add_option("--script", mock_script, "mock script JSON")->required();

  std::vector<std::string> argv_store{"lamar"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "lamar: error[usage]: " << one_line(e.what()) << "\n";
    return kExitValidation;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Phase phase = Phase::kValidate;
  try {
    if (command == "fixture") {
      FixtureSpec spec;
      spec.n_train = fx.n;
      spec.n_val = fx.n_val.value_or(std::max<std::size_t>(2, (fx.n + 4) / 5));
      spec.n_test = fx.n_test.value_or(std::max<std::size_t>(2, (fx.n + 4) / 5));
      spec.dim = fx.d;
      spec.delta = fx.delta;
      spec.image_noise = fx.noise;
      spec.seed = fx.seed;
      spec.labels.clear();
      std::istringstream ls(fx.labels);
      for (std::string l; std::getline(ls, l, ',');) spec.labels.push_back(parse_label(l));
      spec.validate();
      phase = Phase::kWork;
      const Dataset ds = generate_fixture(spec);
      save_dataset(ds, fx.out);
      out << manifest_to_json(ds.manifest).dump() << "\n";

    } else if (command == "train" || command == "pretrain") {
      TrainArgs& a = command == "train" ? tr : pt;
      const Dataset data = load_dataset(a.data);
      TrainConfig cfg = build_config(a, data.manifest.dim);
      if (command == "pretrain" && cfg.mode == TrainingMode::kEndToEnd) {
        if (a.mode) {
          throw Error(ErrorCode::kInvalidArgument, "pretrain: mode must be pt-gauss or pt-drop");
        }
        cfg.mode = TrainingMode::kPretrainGaussian;
      }
      if (cfg.mode != TrainingMode::kEndToEnd && cfg.integration == IntegrationMode::kMask &&
          command == "train") {
        throw Error(ErrorCode::kUnsupported,
                    "train: mask integration unsupported in PT per configuration");
      }
      std::optional<LamarModel> pretrained;
      if (!a.pretrained.empty()) pretrained = load_checkpoint(a.pretrained);
      log_epochs(cfg);
      phase = Phase::kWork;

      nlohmann::json report;
      if (command == "pretrain") {
        auto res = pretrain_reconstructor(truthful_subset(data), cfg);
        save_checkpoint(res.model, a.out);
        report = train_report_json(cfg, res.model, res.report);
      } else if (cfg.mode == TrainingMode::kEndToEnd) {
        auto res = train_e2e(data, cfg);
        save_checkpoint(res.model, a.out);
        report = train_report_json(cfg, res.model, res.report);
      } else {
        nlohmann::json pre_report;
        if (!pretrained) {
          auto pre = pretrain_reconstructor(truthful_subset(data), cfg);
          pre_report = to_json(pre.report);
          pretrained = std::move(pre.model);
        }
        auto res = train_detector_pt(data, *pretrained, cfg);
        save_checkpoint(res.model, a.out);
        report = train_report_json(cfg, res.model, res.report);
        if (!pre_report.is_null()) report["pretrain"] = pre_report;
      }
      write_json(report_path(a), report);
      out << nlohmann::json{{"checkpoint", a.out},
                            {"report", report_path(a)},
                            {"best_epoch", report["train"]["best_epoch"]},
                            {"best_metric", report["train"]["best_metric"]}}
                 .dump()
          << "\n";

    } else if (command == "eval" || command == "export") {
      EvalArgs& a = command == "eval" ? ev : ex;
      LamarModel model = load_checkpoint(a.checkpoint);
      const Dataset data = load_dataset(a.data);
      const Split split = split_arg(a.split);
      if (data.manifest.dim != model.config.dim) {
        throw Error(ErrorCode::kDimMismatch, command + ": dataset dim " +
                                                 std::to_string(data.manifest.dim) +
                                                 " != model dim " +
                                                 std::to_string(model.config.dim));
      }
      const auto records = task_records(data, split, model.config.task);
      if (records.empty()) {
        throw Error(ErrorCode::kEmpty, command + ": no '" + a.split + "' records for task '" +
                                           to_string(model.config.task) + "'");
      }
      phase = Phase::kWork;
      const auto preds = predict(model, records);
      std::vector<nlohmann::json> lines;
      for (const auto& p : preds) lines.push_back(verdict_json(p, model.config.task));
      if (command == "export") {
        io::write_file_atomic(a.out, jsonl(lines));
        out << nlohmann::json{{"verdicts", a.out}, {"n", preds.size()}}.dump() << "\n";
      } else {
        nlohmann::json rep = to_json(summarize(preds, model.config.task));
        rep["split"] = a.split;
        if (!a.out.empty()) write_json(a.out, rep);
        if (!a.verdicts.empty()) io::write_file_atomic(a.verdicts, jsonl(lines));
        out << rep.dump() << "\n";
      }

    } else if (command == "diagnose") {
      LamarModel model = load_checkpoint(dg.checkpoint);
      const Dataset data = load_dataset(dg.data);
      const Split split = split_arg(dg.split);
      DiagnosticsRequest req{dg.attention, dg.gate};
      if (!dg.attention && !dg.gate) {
        req.attention = model.config.integration == IntegrationMode::kAttention;
        req.gate = model.config.integration == IntegrationMode::kGate;
      }
      if (req.attention && model.config.integration != IntegrationMode::kAttention) {
        throw Error(ErrorCode::kUnsupported, "diagnose: attention statistics requested from a '" +
                                                 to_string(model.config.integration) + "' model");
      }
      if (req.gate && model.config.integration != IntegrationMode::kGate) {
        throw Error(ErrorCode::kUnsupported, "diagnose: gate statistics requested from a '" +
                                                 to_string(model.config.integration) + "' model");
      }
      const auto records = task_records(data, split, model.config.task);
      if (records.empty()) {
        throw Error(ErrorCode::kEmpty, "diagnose: no '" + dg.split + "' records for the task");
      }
      phase = Phase::kWork;
      const auto preds = predict(model, records);
      nlohmann::json rep = to_json(diagnostics_from(preds, req));
      rep["split"] = dg.split;
      if (!dg.out.empty()) write_json(dg.out, rep);
      if (!dg.csv.empty()) {
        std::ostringstream csv;
        csv << "id,gold,predicted,reconstruction_loss,gate_mean,att_image,att_caption,att_reconstruction\n";
        for (const auto& p : preds) {
          csv << p.id << ',' << to_string(p.gold) << ',' << to_string(p.verdict.predicted) << ','
              << csv_number(p.reconstruction_loss) << ',' << csv_number(p.gate_mean);
          for (int t = 0; t < 3; ++t) {
            csv << ',' << (p.attention ? csv_number((*p.attention)[t]) : std::string());
          }
          csv << '\n';
        }
        io::write_file_atomic(dg.csv, csv.str());
      }
      out << rep.dump() << "\n";

    } else if (command == "filter") {
      const Dataset data = load_dataset(fl.data);
      const LengthThreshold threshold = LengthThreshold::parse(fl.l);
      phase = Phase::kWork;
      const FilterResult res = filter_by_length(data, threshold);
      if (!fl.out.empty()) save_dataset(res.dataset, fl.out);
      const nlohmann::json rep = to_json(res.report);
      if (!fl.report.empty()) write_json(fl.report, rep);
      out << rep.dump() << "\n";

    } else if (command == "prompt-score") {
      std::vector<PromptCandidate> candidates;
      for (const auto& item : read_json_items(pr.candidates)) {
        PromptCandidate c;
        c.id = item.is_string() ? item.get<std::string>() : item.at("id").get<std::string>();
        candidates.push_back(c);
      }
      std::vector<CalibrationSample> calibration;
      for (const auto& item : read_json_items(pr.calibration)) {
        calibration.push_back(
            {item.at("image").get<std::string>(), item.at("caption").get<std::string>()});
      }
      if (pr.mock_script.empty() && pr.server.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "prompt-score: one of --mock-script or --server is required");
      }
      std::unique_ptr<VlmClient> client;
      if (!pr.mock_script.empty()) {
        client = std::make_unique<ScriptedVlmClient>(
            ScriptedVlmClient::from_json(read_json(pr.mock_script)));
      }
      const AccuracyBand band{pr.lo, pr.hi};
      if (!(band.lo <= band.hi)) {
        throw Error(ErrorCode::kInvalidArgument, "prompt-score: --lo exceeds --hi");
      }
      phase = Phase::kWork;
      if (!client) {
        client = std::make_unique<ProcessVlmClient>(split_words(pr.server),
                                                    std::chrono::milliseconds(pr.timeout_ms));
      }
      for (auto& c : candidates) {
        c.accuracy = score_prompt(c, calibration, *client, pr.detect_prompt, {pr.retries});
      }
      const Selection sel = select_prompts(candidates, band);
      for (const auto& w : sel.warnings) logger()->warn("{}", w);
      nlohmann::json rep = {{"band", {band.lo, band.hi}}, {"warnings", sel.warnings}};
      nlohmann::json list = nlohmann::json::array();
      for (const auto& c : candidates) {
        list.push_back({{"id", c.id}, {"accuracy", *c.accuracy}, {"selected", c.selected}});
      }
      rep["candidates"] = list;
      if (!pr.out.empty()) write_json(pr.out, rep);
      out << rep.dump() << "\n";

    } else if (command == "mock-vlm") {
      ScriptedVlmClient client = ScriptedVlmClient::from_json(read_json(mock_script));
      phase = Phase::kWork;
      serve_jsonl(client, std::cin, std::cout);
    }
  } catch (const Error& e) {
    err << "lamar " << command << ": error[" << to_string(e.code()) << "]: " << one_line(e.what())
        << "\n";
    return phase == Phase::kValidate ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "lamar " << command << ": error[internal]: " << one_line(e.what()) << "\n";
    return phase == Phase::kValidate ? kExitValidation : kExitRuntime;
  }
  return kExitOk;
}

}  // namespace lamar::cli
