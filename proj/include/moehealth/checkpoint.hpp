#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "moehealth/model.hpp"

namespace moehealth {

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  nlohmann::json meta;
};

/// Serializes architecture config, expert-pool ordering, and every parameter
/// (column-major, shortest round-trip number format) plus a caller-supplied
/// metadata block. Written atomically.
void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& meta);

/// Rebuilds the model bit-exactly. Structural problems (missing parameters,
/// shape drift, unknown format) raise DataError; unreadable files IoError.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace moehealth
