#include "sktune/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sktune/error.hpp"

namespace sktune {

std::string format_double(double value) {
  if (!std::isfinite(value)) throw Error(ErrorKind::NonFinite, "cannot serialize a non-finite value");
  // "-0" would parse back as the integer 0 and lose its sign.
  if (value == 0.0 && std::signbit(value)) return "-0.0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out;
  out += "{\"format\":\"";
  out += kCheckpointFormat;
  out += '"';
  for (const auto& [key, value] : checkpoint.metadata.items()) {
    if (key == "format" || key == "params") {
      throw Error(ErrorKind::InvalidArgument, "metadata key '" + key + "' is reserved");
    }
    out += ',';
    out += nlohmann::json(key).dump();
    out += ':';
    out += value.dump();
  }
  out += ",\"params\":{";
  bool first_param = true;
  for (const auto& [name, tensor] : checkpoint.params) {
    if (!first_param) out += ',';
    first_param = false;
    out += nlohmann::json(name).dump();
    out += ":{\"shape\":[";
    for (std::size_t i = 0; i < tensor.rank(); ++i) {
      if (i) out += ',';
      out += std::to_string(tensor.dim(i));
    }
    out += "],\"data\":[";
    const auto data = tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i) out += ',';
      out += format_double(data[i]);
    }
    out += "]}";
  }
  out += "}}\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedLine, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat || !doc.contains("params") ||
      !doc["params"].is_object()) {
    throw Error(ErrorKind::MalformedLine, "not an SKT1 checkpoint");
  }
  Checkpoint checkpoint;
  for (const auto& [key, value] : doc.items()) {
    if (key != "format" && key != "params") checkpoint.metadata[key] = value;
  }
  for (const auto& [name, entry] : doc["params"].items()) {
    try {
      Shape shape = entry.at("shape").get<Shape>();
      std::vector<double> data = entry.at("data").get<std::vector<double>>();
      checkpoint.params.emplace(name, Tensor(std::move(shape), std::move(data)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedLine, "parameter " + name + ": " + e.what());
    }
  }
  return checkpoint;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text_file(path)); }

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model}, {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ffn", c.d_ffn},     {"max_seq", c.max_seq},
          {"ln_eps", c.ln_eps},         {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ffn = j.at("d_ffn").get<std::size_t>();
    c.max_seq = j.at("max_seq").get<std::size_t>();
    c.ln_eps = j.at("ln_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedLine, std::string("model config: ") + e.what());
  }
}

Checkpoint model_checkpoint(const FrozenModel& model) {
  Checkpoint checkpoint;
  checkpoint.metadata["config"] = config_to_json(model.config());
  checkpoint.params = model.params();
  return checkpoint;
}

FrozenModel model_from_checkpoint(const Checkpoint& checkpoint) {
  if (!checkpoint.metadata.contains("config")) throw Error(ErrorKind::MalformedLine, "checkpoint has no model config");
  FrozenModel model = FrozenModel::from_params(config_from_json(checkpoint.metadata["config"]), checkpoint.params);
  model.freeze();
  return model;
}

}  // namespace sktune
