#pragma once

#include <filesystem>

#include <json.hpp>

#include "lamar/model.hpp"

namespace lamar {

// LMRC model container: magic, version, length-prefixed JSON header with the
// model configuration and parameter table, then every parameter as
// little-endian f64 in name order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const LamarModel& model, const std::filesystem::path& path);
LamarModel load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ReconstructorConfig& config);
ReconstructorConfig reconstructor_config_from_json(const nlohmann::json& j);

}  // namespace lamar
