#pragma once

// Model persistence: one JSON document holding the model config, the seed it
// was initialized/trained with, and every tensor as nested arrays (rows of
// columns). The JSON writer emits the shortest digits that read back to the
// same double, so a save/load round trip is value-exact.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pvred/error.hpp"
#include "pvred/model.hpp"
#include "pvred/net.hpp"
#include "pvred/textio.hpp"

namespace pvred::model_io {

inline constexpr const char* kFormat = "pvred-model";
inline constexpr int kVersion = 1;

struct ModelFile {
  model::ModelConfig config;
  net::ModelParams params;
  std::uint64_t seed = 0;
};

inline nlohmann::ordered_json config_to_json(const model::ModelConfig& c) {
  nlohmann::ordered_json j;
  j["pose_dim"] = c.pose_dim;
  j["hidden"] = c.hidden;
  j["embed_dim"] = c.position_dim();
  j["observed"] = c.observed;
  j["predicted"] = c.predicted;
  j["variant"] = model::to_string(c.variant);
  j["use_velocity"] = c.use_velocity;
  j["use_position"] = c.use_position;
  j["loss"] = model::to_string(c.loss);
  j["use_bias"] = c.use_bias;
  j["dropout"] = c.dropout;
  j["fps"] = c.fps;
  return j;
}

inline model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig c;
  c.pose_dim = j.at("pose_dim").get<Eigen::Index>();
  c.hidden = j.at("hidden").get<Eigen::Index>();
  c.embed_dim = j.at("embed_dim").get<Eigen::Index>();
  c.observed = j.at("observed").get<long>();
  c.predicted = j.at("predicted").get<long>();
  c.variant = model::parse_variant(j.at("variant").get<std::string>());
  c.use_velocity = j.at("use_velocity").get<bool>();
  c.use_position = j.at("use_position").get<bool>();
  c.loss = model::parse_loss_kind(j.at("loss").get<std::string>());
  c.use_bias = j.at("use_bias").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.fps = j.at("fps").get<double>();
  c.validate();
  return c;
}

inline std::string to_json_string(const ModelFile& file) {
  nlohmann::ordered_json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["seed"] = file.seed;
  doc["config"] = config_to_json(file.config);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  net::visit_tensors(
      [&](const std::string& name, const auto& t) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (Eigen::Index r = 0; r < t.rows(); ++r) {
          nlohmann::ordered_json row = nlohmann::ordered_json::array();
          for (Eigen::Index c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
          rows.push_back(std::move(row));
        }
        tensors[name] = std::move(rows);
      },
      file.params);
  doc["tensors"] = std::move(tensors);
  return doc.dump(1) + "\n";
}

inline ModelFile from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what(), 0);
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ParseError("not a pvred model file", 0);
    if (doc.at("version").get<int>() != kVersion) throw ParseError("unsupported model file version", 0);
    ModelFile file;
    file.seed = doc.at("seed").get<std::uint64_t>();
    file.config = config_from_json(doc.at("config"));
    file.params = net::init_params(file.config.pose_dim, file.config.position_dim(), file.config.hidden, 0);
    const auto& tensors = doc.at("tensors");
    net::visit_tensors(
        [&](const std::string& name, auto& t) {
          const auto& rows = tensors.at(name);
          if (static_cast<Eigen::Index>(rows.size()) != t.rows()) throw ParseError("tensor " + name + " has wrong row count", 0);
          for (Eigen::Index r = 0; r < t.rows(); ++r) {
            const auto& row = rows.at(static_cast<std::size_t>(r));
            if (static_cast<Eigen::Index>(row.size()) != t.cols())
              throw ParseError("tensor " + name + " has wrong column count", 0);
            for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = row.at(static_cast<std::size_t>(c)).template get<double>();
          }
        },
        file.params);
    return file;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what(), 0);
  }
}

inline void save_model(const ModelFile& file, const std::filesystem::path& path) {
  textio::atomic_write_file(path, to_json_string(file));
}

inline ModelFile load_model(const std::filesystem::path& path) { return from_json_string(textio::read_file(path)); }

}  // namespace pvred::model_io
