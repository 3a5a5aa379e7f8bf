#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sktune/model.hpp"

namespace sktune {

/// SKT1 document: {"format":"SKT1", <metadata keys...>, "params":{...}}.
/// Parameters are written sorted by name, values with 17 significant digits,
/// so parse followed by serialize reproduces the input bytes.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  ParamMap params;
};

inline constexpr std::string_view kCheckpointFormat = "SKT1";

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Shortest form that still round-trips: always 17 significant digits.
std::string format_double(double value);

Checkpoint model_checkpoint(const FrozenModel& model);
/// The loaded model is frozen.
FrozenModel model_from_checkpoint(const Checkpoint& checkpoint);

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace sktune
