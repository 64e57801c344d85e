#include "lamar/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "binary_io.hpp"
#include "lamar/error.hpp"

namespace lamar {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'R', '1'};
constexpr std::size_t kPreamble = 12;      // magic + version + header length
constexpr std::size_t kRecordHeader = 48;  // id[32], split, label, reserved u16, lengths, reserved u32

double norm_of(const std::vector<float>& v) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

nlohmann::json counts_to_json(const std::array<LabelCounts, kNumSplits>& counts) {
  nlohmann::json j = nlohmann::json::object();
  for (int s = 0; s < kNumSplits; ++s) {
    nlohmann::json per = nlohmann::json::object();
    for (int l = 0; l < kNumLabels; ++l) per[to_string(static_cast<Label>(l))] = counts[s][l];
    j[to_string(static_cast<Split>(s))] = per;
  }
  return j;
}

}  // namespace

std::size_t DatasetManifest::total() const {
  std::size_t n = 0;
  for (const auto& split : counts) {
    for (std::size_t c : split) n += c;
  }
  return n;
}

std::size_t DatasetManifest::split_total(Split split) const {
  std::size_t n = 0;
  for (std::size_t c : counts[static_cast<int>(split)]) n += c;
  return n;
}

std::vector<const EmbeddingRecord*> Dataset::split(Split split) const {
  std::vector<const EmbeddingRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

void Dataset::recount() {
  manifest.counts = {};
  for (const auto& r : records) {
    ++manifest.counts[static_cast<int>(r.split)][static_cast<int>(r.label)];
  }
}

std::size_t record_stride(std::size_t dim) { return kRecordHeader + 3 * 4 * dim; }

void validate(const Dataset& dataset) {
  const std::size_t d = dataset.manifest.dim;
  if (d == 0) throw Error(ErrorCode::kDimMismatch, "dataset: dimension must be positive");
  std::array<LabelCounts, kNumSplits> counts{};
  std::unordered_set<std::string> ids;
  for (const auto& r : dataset.records) {
    const std::string where = "dataset record '" + r.id + "'";
    if (r.id.empty() || r.id.size() > kMaxIdBytes) {
      throw Error(ErrorCode::kInvariant, where + ": id must be 1.." +
                                             std::to_string(kMaxIdBytes) + " bytes");
    }
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::kInvariant, where + ": duplicate id");
    }
    if (static_cast<int>(r.label) >= kNumLabels || static_cast<int>(r.split) >= kNumSplits) {
      throw Error(ErrorCode::kInvariant, where + ": label or split out of range");
    }
    if (r.image.size() != d || r.caption.size() != d || r.truth.size() != d) {
      throw Error(ErrorCode::kDimMismatch, where + ": embedding length differs from dim " +
                                               std::to_string(d));
    }
    for (const auto* v : {&r.image, &r.caption, &r.truth}) {
      const double n = norm_of(*v);
      if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
        throw Error(ErrorCode::kInvariant, where + ": embedding norm " + std::to_string(n) +
                                               " is not 1");
      }
    }
    if (r.label == Label::kTrue && r.caption != r.truth) {
      throw Error(ErrorCode::kInvariant, where + ": truthful record with caption != truth");
    }
    ++counts[static_cast<int>(r.split)][static_cast<int>(r.label)];
  }
  if (counts != dataset.manifest.counts) {
    throw Error(ErrorCode::kCountMismatch,
                "dataset: count mismatch between manifest and records");
  }
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j = {{"format", "LMR1"},
                      {"version", m.version},
                      {"dim", m.dim},
                      {"count", m.total()},
                      {"record_stride", record_stride(m.dim)},
                      {"counts", counts_to_json(m.counts)}};
  if (m.seed) j["seed"] = *m.seed;
  if (m.fixture) j["fixture"] = *m.fixture;
  return j;
}

std::string encode_dataset(const Dataset& dataset) {
  validate(dataset);
  const std::size_t d = dataset.manifest.dim;
  std::string payload;
  payload.reserve(dataset.records.size() * record_stride(d));
  for (const auto& r : dataset.records) {
    std::string id(32, '\0');
    std::copy(r.id.begin(), r.id.end(), id.begin());
    payload += id;
    payload.push_back(static_cast<char>(r.split));
    payload.push_back(static_cast<char>(r.label));
    io::put_u16(payload, 0);
    io::put_u32(payload, r.orig_len);
    io::put_u32(payload, r.cap_len);
    io::put_u32(payload, 0);
    for (const auto* v : {&r.image, &r.caption, &r.truth}) {
      for (float x : *v) io::put_f32(payload, x);
    }
  }
  nlohmann::json header = manifest_to_json(dataset.manifest);
  header["checksum"] = "fnv1a64:" + io::hex64(io::fnv1a64(payload));
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  io::put_u32(bytes, dataset.manifest.version);
  io::put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;
  return bytes;
}

Dataset decode_dataset(const std::string& bytes, const std::string& where) {
  if (bytes.size() < kPreamble) {
    throw Error(ErrorCode::kTruncated, where + ": file shorter than the LMR1 preamble");
  }
  if (bytes.compare(0, 4, kMagic, 4) != 0) {
    throw Error(ErrorCode::kVersionMismatch, where + ": bad magic, not an LMR1 file");
  }
  const std::uint32_t version = io::get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                where + ": unsupported format version " + std::to_string(version));
  }
  const std::size_t header_len = io::get_u32(bytes.data() + 8);
  if (bytes.size() < kPreamble + header_len) {
    throw Error(ErrorCode::kTruncated, where + ": manifest truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kPreamble, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvariant, where + ": malformed manifest: " + e.what());
  }

  Dataset ds;
  DatasetManifest& m = ds.manifest;
  try {
    if (header.at("version").get<std::uint32_t>() != kDatasetVersion) {
      throw Error(ErrorCode::kVersionMismatch, where + ": manifest version mismatch");
    }
    const auto dim = header.at("dim").get<std::int64_t>();
    if (dim <= 0 || header.at("record_stride").get<std::size_t>() !=
                        record_stride(static_cast<std::size_t>(dim))) {
      throw Error(ErrorCode::kDimMismatch, where + ": dim " + std::to_string(dim) +
                                               " inconsistent with record stride");
    }
    m.dim = static_cast<std::size_t>(dim);
    for (int s = 0; s < kNumSplits; ++s) {
      const auto& per = header.at("counts").at(to_string(static_cast<Split>(s)));
      for (int l = 0; l < kNumLabels; ++l) {
        m.counts[s][l] = per.at(to_string(static_cast<Label>(l))).get<std::size_t>();
      }
    }
    if (header.contains("seed")) m.seed = header.at("seed").get<std::uint64_t>();
    if (header.contains("fixture")) m.fixture = header.at("fixture");
    if (header.at("count").get<std::size_t>() != m.total()) {
      throw Error(ErrorCode::kCountMismatch, where + ": count mismatch inside manifest");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvariant, where + ": manifest field error: " + e.what());
  }

  const std::string payload = bytes.substr(kPreamble + header_len);
  const std::size_t stride = record_stride(m.dim);
  if (payload.size() % stride != 0) {
    throw Error(ErrorCode::kTruncated, where + ": record block is not a whole number of records");
  }
  if (payload.size() / stride != m.total()) {
    throw Error(ErrorCode::kCountMismatch,
                where + ": count mismatch, manifest lists " + std::to_string(m.total()) +
                    " records but file holds " + std::to_string(payload.size() / stride));
  }
  if (header.value("checksum", "") != "fnv1a64:" + io::hex64(io::fnv1a64(payload))) {
    throw Error(ErrorCode::kChecksum, where + ": record checksum mismatch");
  }

  ds.records.reserve(m.total());
  for (std::size_t i = 0; i < m.total(); ++i) {
    const char* p = payload.data() + i * stride;
    EmbeddingRecord r;
    r.id.assign(p, strnlen(p, 32));
    const auto split = static_cast<std::uint8_t>(p[32]);
    const auto label = static_cast<std::uint8_t>(p[33]);
    if (split >= kNumSplits || label >= kNumLabels) {
      throw Error(ErrorCode::kInvariant, where + ": record " + std::to_string(i) +
                                             " has an out-of-range split or label");
    }
    r.split = static_cast<Split>(split);
    r.label = static_cast<Label>(label);
    r.orig_len = io::get_u32(p + 36);
    r.cap_len = io::get_u32(p + 40);
    const char* f = p + kRecordHeader;
    for (auto* v : {&r.image, &r.caption, &r.truth}) {
      v->resize(m.dim);
      for (std::size_t k = 0; k < m.dim; ++k, f += 4) (*v)[k] = io::get_f32(f);
    }
    ds.records.push_back(std::move(r));
  }
  validate(ds);
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path), "load_dataset '" + path.string() + "'");
}

Batch make_batch(const std::vector<const EmbeddingRecord*>& records, std::size_t dim) {
  Batch b;
  b.image = Tensor(records.size(), dim);
  b.caption = Tensor(records.size(), dim);
  b.truth = Tensor(records.size(), dim);
  b.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = *records[i];
    if (r.image.size() != dim) {
      throw Error(ErrorCode::kDimMismatch, "make_batch: record '" + r.id + "' has dim " +
                                               std::to_string(r.image.size()) + ", expected " +
                                               std::to_string(dim));
    }
    for (std::size_t k = 0; k < dim; ++k) {
      b.image(i, k) = r.image[k];
      b.caption(i, k) = r.caption[k];
      b.truth(i, k) = r.truth[k];
    }
    b.labels.push_back(r.label);
  }
  return b;
}

}  // namespace lamar
