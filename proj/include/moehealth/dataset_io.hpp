#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "moehealth/sample.hpp"

namespace moehealth {

/// A dataset as stored on disk: line 1 is a header record carrying the
/// feature dimensions (and optional generator metadata), every further line
/// is one sample record. Absent modalities are absent keys, never null.
struct DatasetFile {
  DatasetDims dims;
  std::vector<Sample> samples;
  nlohmann::json meta;  // opaque provenance block from the header
};

/// Writes header + one record per line, atomically. `meta` is stored verbatim
/// in the header so downstream artifacts can echo it.
void save_dataset(const std::string& path, const DatasetDims& dims,
                  const std::vector<Sample>& samples,
                  const nlohmann::json& meta = nlohmann::json::object());

/// Parses and validates a dataset file. Malformed lines, invariant
/// violations, and dimension mismatches raise DataError tagged with the
/// 1-based line number; unreadable files raise IoError.
DatasetFile load_dataset(const std::string& path);

}  // namespace moehealth
