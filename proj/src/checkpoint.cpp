#include "lamar/checkpoint.hpp"

#include "binary_io.hpp"
#include "lamar/error.hpp"

namespace lamar {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'R', 'C'};

}  // namespace

nlohmann::json to_json(const ReconstructorConfig& c) {
  return {{"blocks", c.blocks},   {"heads", c.heads},     {"d_model", c.d_model},
          {"ff_dim", c.ff_dim},   {"dropout", c.dropout}};
}

ReconstructorConfig reconstructor_config_from_json(const nlohmann::json& j) {
  ReconstructorConfig c;
  c.blocks = j.value("blocks", c.blocks);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"task", to_string(c.task)},
          {"integration", to_string(c.integration)},
          {"reconstructor", to_json(c.reconstructor)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.task = parse_task(j.at("task").get<std::string>());
  c.integration = parse_integration_mode(j.at("integration").get<std::string>());
  c.reconstructor = reconstructor_config_from_json(j.at("reconstructor"));
  return c;
}

void save_checkpoint(const LamarModel& model, const std::filesystem::path& path) {
  std::string payload;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, e] : model.params) {
    table.push_back({{"name", name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}});
    for (Real v : e.value.data()) io::put_f64(payload, v);
  }
  nlohmann::json header = {{"format", "LMRC"},
                           {"version", kCheckpointVersion},
                           {"model", to_json(model.config)},
                           {"params", table},
                           {"checksum", "fnv1a64:" + io::hex64(io::fnv1a64(payload))}};
  const std::string text = header.dump();
  std::string bytes(kMagic, 4);
  io::put_u32(bytes, kCheckpointVersion);
  io::put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;
  io::write_file_atomic(path, bytes);
}

LamarModel load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const std::string where = "load_checkpoint '" + path.string() + "'";
  if (bytes.size() < 12 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw Error(ErrorCode::kVersionMismatch, where + ": not an LMRC checkpoint");
  }
  if (io::get_u32(bytes.data() + 4) != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, where + ": unsupported version " +
                                                 std::to_string(io::get_u32(bytes.data() + 4)));
  }
  const std::uint32_t header_len = io::get_u32(bytes.data() + 8);
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
    throw Error(ErrorCode::kTruncated, where + ": header truncated");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvariant, where + ": malformed header: " + e.what());
  }
  const std::string_view payload(bytes.data() + 12 + header_len, bytes.size() - 12 - header_len);

  LamarModel model{model_config_from_json(header.at("model")), {}};
  model.config.validate();
  std::size_t expected = 0;
  for (const auto& p : header.at("params")) {
    expected += p.at("rows").get<std::size_t>() * p.at("cols").get<std::size_t>() * 8;
  }
  if (payload.size() != expected) {
    throw Error(ErrorCode::kTruncated, where + ": payload holds " + std::to_string(payload.size()) +
                                           " bytes, expected " + std::to_string(expected));
  }
  if (header.at("checksum").get<std::string>() != "fnv1a64:" + io::hex64(io::fnv1a64(payload))) {
    throw Error(ErrorCode::kChecksum, where + ": parameter checksum mismatch");
  }
  std::size_t offset = 0;
  for (const auto& p : header.at("params")) {
    const auto rows = p.at("rows").get<std::size_t>();
    const auto cols = p.at("cols").get<std::size_t>();
    Tensor t(rows, cols);
    for (auto& v : t.data()) {
      v = io::get_f64(payload.data() + offset);
      offset += 8;
    }
    model.params.add(p.at("name").get<std::string>(), std::move(t));
  }
  // The parameter table must describe exactly the architecture in the config.
  LamarModel shape = LamarModel::create(model.config, 0);
  for (const auto& [name, e] : shape.params) {
    if (!model.params.contains(name) || !model.params.value(name).same_shape(e.value)) {
      throw Error(ErrorCode::kDimMismatch, where + ": parameter '" + name +
                                               "' missing or misshapen for the stored config");
    }
  }
  if (shape.params.size() != model.params.size()) {
    throw Error(ErrorCode::kDimMismatch, where + ": unexpected extra parameters");
  }
  return model;
}

}  // namespace lamar
