#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamar/labels.hpp"
#include "lamar/model.hpp"

namespace lamar {

// One (image, caption) sample with the truthful caption it should reconstruct.
// Embeddings are kept in their stored 32-bit form so save/load is bit-exact.
struct EmbeddingRecord {
  std::string id;  // at most kMaxIdBytes bytes
  Split split = Split::kTrain;
  Label label = Label::kTrue;
  std::vector<float> image;
  std::vector<float> caption;
  std::vector<float> truth;
  std::uint32_t orig_len = 0;  // characters of the original (truthful) caption
  std::uint32_t cap_len = 0;   // characters of the input caption
};

using LabelCounts = std::array<std::size_t, kNumLabels>;

struct DatasetManifest {
  std::size_t dim = 0;
  std::uint32_t version = 1;
  std::array<LabelCounts, kNumSplits> counts{};  // [split][label]
  std::optional<std::uint64_t> seed;             // fixtures only
  std::optional<nlohmann::json> fixture;         // generating spec, fixtures only

  std::size_t total() const;
  std::size_t split_total(Split split) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<EmbeddingRecord> records;

  // Records of one split in file order.
  std::vector<const EmbeddingRecord*> split(Split split) const;
  // Rebuilds the manifest counts from the records.
  void recount();
};

inline constexpr std::size_t kMaxIdBytes = 31;
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr double kUnitNormTolerance = 1e-5;

// Bytes per record for embedding dimension d.
std::size_t record_stride(std::size_t dim);

// Throws kInvariant / kDimMismatch / kCountMismatch describing the first violation.
void validate(const Dataset& dataset);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(const std::string& bytes, const std::string& where = "dataset");

nlohmann::json manifest_to_json(const DatasetManifest& manifest);

// Stacks records into a batch, widening embeddings to Real.
Batch make_batch(const std::vector<const EmbeddingRecord*>& records, std::size_t dim);

}  // namespace lamar
