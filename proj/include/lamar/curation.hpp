#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamar/dataset.hpp"
#include "lamar/vlm_client.hpp"

namespace lamar {

// Relative caption-length threshold in percent of the original caption.
// An empty threshold keeps every pair.
struct LengthThreshold {
  std::optional<double> percent;

  static LengthThreshold none() { return {}; }
  static LengthThreshold of(double percent);
  // "none" or a non-negative number.
  static LengthThreshold parse(const std::string& text);

  // Inclusive: keeps cap_len <= orig_len * (1 + percent / 100).
  bool keeps(std::uint32_t orig_len, std::uint32_t cap_len) const;
  std::string label() const;
};

struct RetentionReport {
  LengthThreshold threshold;
  std::size_t pairs = 0;
  std::size_t kept_pairs = 0;
  std::size_t removed_truthful = 0;
  std::size_t removed_generated = 0;
  std::size_t passthrough = 0;  // out-of-context records, not length-filtered
  double retention = 1.0;       // kept_pairs / pairs
};

struct FilterResult {
  Dataset dataset;
  RetentionReport report;
};

// The pair key of a record is its id up to the first ':'. Every key must
// hold exactly one truthful and one miscaptioned record; out-of-context
// records pass through untouched.
FilterResult filter_by_length(const Dataset& corpus, const LengthThreshold& threshold);

nlohmann::json to_json(const RetentionReport& report);

struct PromptCandidate {
  std::string id;  // opaque handle understood by the client
  std::optional<double> accuracy;
  bool selected = false;
};

// A truthful calibration sample; the prompt under test falsifies its caption.
struct CalibrationSample {
  std::string image;
  std::string caption;
};

struct RetryPolicy {
  int attempts = 3;
};

// Detector accuracy over truthful captions and their generated
// counterparts: correct / (2 * samples).
double score_prompt(const PromptCandidate& candidate,
                    const std::vector<CalibrationSample>& calibration, VlmClient& client,
                    const std::string& detect_prompt_id, RetryPolicy retry = {});

struct AccuracyBand {
  double lo = 0.55;
  double hi = 0.80;
};

struct Selection {
  std::vector<PromptCandidate> selected;
  std::vector<std::string> warnings;
};

// Marks and returns candidates whose accuracy lies in [lo, hi].
Selection select_prompts(std::vector<PromptCandidate>& candidates, AccuracyBand band = {});

}  // namespace lamar
