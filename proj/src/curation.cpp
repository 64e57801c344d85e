#include "lamar/curation.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "lamar/error.hpp"

namespace lamar {

LengthThreshold LengthThreshold::of(double percent) {
  if (!(percent >= 0.0) || !std::isfinite(percent)) {
    throw Error(ErrorCode::kInvalidArgument, "length threshold: percent must be a finite value >= 0");
  }
  return LengthThreshold{percent};
}

LengthThreshold LengthThreshold::parse(const std::string& text) {
  if (text == "none" || text == "None") return none();
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "length threshold: expected 'none' or a number, got '" + text + "'");
  }
  return of(v);
}

bool LengthThreshold::keeps(std::uint32_t orig_len, std::uint32_t cap_len) const {
  if (!percent) return true;
  // Both sides are exact in double for integral percents.
  return 100.0 * cap_len <= static_cast<double>(orig_len) * (100.0 + *percent);
}

std::string LengthThreshold::label() const {
  if (!percent) return "none";
  std::ostringstream os;
  os << *percent;
  return os.str();
}

FilterResult filter_by_length(const Dataset& corpus, const LengthThreshold& threshold) {
  struct Pair {
    const EmbeddingRecord* truthful = nullptr;
    const EmbeddingRecord* generated = nullptr;
  };
  std::map<std::string, Pair> pairs;
  FilterResult result;
  RetentionReport& rep = result.report;
  rep.threshold = threshold;
  for (const auto& r : corpus.records) {
    if (r.label == Label::kOutOfContext) {
      ++rep.passthrough;
      continue;
    }
    const std::string key = r.id.substr(0, r.id.find(':'));
    Pair& p = pairs[key];
    const EmbeddingRecord*& slot = r.label == Label::kTrue ? p.truthful : p.generated;
    if (slot != nullptr) {
      throw Error(ErrorCode::kInvariant, "filter: pair '" + key + "' has more than one " +
                                             to_string(r.label) + " record");
    }
    slot = &r;
  }
  std::map<const EmbeddingRecord*, bool> drop;
  for (const auto& [key, p] : pairs) {
    if (!p.truthful || !p.generated) {
      const auto* present = p.truthful ? p.truthful : p.generated;
      throw Error(ErrorCode::kInvariant, "filter: unpaired record '" + present->id + "'");
    }
    ++rep.pairs;
    if (threshold.keeps(p.generated->orig_len, p.generated->cap_len)) {
      ++rep.kept_pairs;
    } else {
      drop[p.truthful] = true;
      drop[p.generated] = true;
      ++rep.removed_truthful;
      ++rep.removed_generated;
    }
  }
  rep.retention = rep.pairs == 0 ? 1.0
                                 : static_cast<double>(rep.kept_pairs) / static_cast<double>(rep.pairs);

  result.dataset.manifest = corpus.manifest;
  for (const auto& r : corpus.records) {
    if (!drop.count(&r)) result.dataset.records.push_back(r);
  }
  result.dataset.recount();
  return result;
}

nlohmann::json to_json(const RetentionReport& r) {
  nlohmann::json j = {{"pairs", r.pairs},
                      {"kept_pairs", r.kept_pairs},
                      {"removed_truthful", r.removed_truthful},
                      {"removed_generated", r.removed_generated},
                      {"passthrough", r.passthrough},
                      {"retention", r.retention}};
  j["threshold"] = r.threshold.percent ? nlohmann::json(*r.threshold.percent) : nlohmann::json();
  return j;
}

namespace {

template <typename F>
auto with_retry(const RetryPolicy& retry, const std::string& sample, F&& call) {
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kClient) throw;
      if (attempt >= retry.attempts) {
        throw Error(ErrorCode::kClient, "score_prompt: sample '" + sample + "' failed after " +
                                            std::to_string(attempt) + " attempts: " + e.what());
      }
    }
  }
}

}  // namespace

double score_prompt(const PromptCandidate& candidate,
                    const std::vector<CalibrationSample>& calibration, VlmClient& client,
                    const std::string& detect_prompt_id, RetryPolicy retry) {
  if (calibration.empty()) {
    throw Error(ErrorCode::kEmpty, "score_prompt: empty calibration set");
  }
  if (retry.attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "score_prompt: retry attempts must be >= 1");
  }
  std::size_t correct = 0;
  for (const auto& s : calibration) {
    const std::string falsified = with_retry(
        retry, s.image, [&] { return client.generate(s.image, s.caption, candidate.id); });
    const VlmVerdict on_truthful = with_retry(
        retry, s.image, [&] { return client.detect(s.image, s.caption, detect_prompt_id); });
    const VlmVerdict on_falsified = with_retry(
        retry, s.image, [&] { return client.detect(s.image, falsified, detect_prompt_id); });
    if (on_truthful == VlmVerdict::kTruthful) ++correct;
    if (on_falsified == VlmVerdict::kFalsified) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(2 * calibration.size());
}

Selection select_prompts(std::vector<PromptCandidate>& candidates, AccuracyBand band) {
  if (!(band.lo <= band.hi)) {
    throw Error(ErrorCode::kInvalidArgument, "select_prompts: band lower bound exceeds upper bound");
  }
  for (const auto& c : candidates) {
    if (!c.accuracy) {
      throw Error(ErrorCode::kInvalidArgument, "select_prompts: candidate '" + c.id +
                                                   "' has not been scored");
    }
  }
  Selection out;
  for (auto& c : candidates) {
    c.selected = *c.accuracy >= band.lo && *c.accuracy <= band.hi;
    if (c.selected) out.selected.push_back(c);
  }
  if (out.selected.empty()) {
    std::ostringstream os;
    os << "select_prompts: no candidate inside band [" << band.lo << ", " << band.hi << "]";
    out.warnings.push_back(os.str());
  }
  return out;
}

}  // namespace lamar
