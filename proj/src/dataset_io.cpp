#include "moehealth/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "moehealth/errors.hpp"
#include "moehealth/io.hpp"

namespace moehealth {
namespace {

constexpr const char* kFormatName = "moe-health-dataset";
constexpr int kFormatVersion = 1;

nlohmann::json sample_to_json(const Sample& s) {
  nlohmann::json rec;
  rec["id"] = s.id;
  rec["label"] = s.label;
  if (s.ehr_static) {
    auto& arr = rec["ehr_static"] = nlohmann::json::array();
    for (Index i = 0; i < s.ehr_static->size(); ++i) arr.push_back((*s.ehr_static)[i]);
  }
  if (s.ehr_series) {
    auto& rows = rec["ehr_series"] = nlohmann::json::array();
    for (Index t = 0; t < s.ehr_series->rows(); ++t) {
      auto row = nlohmann::json::array();
      for (Index f = 0; f < s.ehr_series->cols(); ++f) row.push_back((*s.ehr_series)(t, f));
      rows.push_back(std::move(row));
    }
  }
  if (s.text_tokens) {
    rec["text_tokens"] = *s.text_tokens;
  }
  if (s.image_features) {
    auto& arr = rec["image_features"] = nlohmann::json::array();
    for (Index i = 0; i < s.image_features->size(); ++i) arr.push_back((*s.image_features)[i]);
  }
  return rec;
}

[[noreturn]] void fail(long line, const std::string& message) { throw DataError(message, line); }

Vector parse_vector(const nlohmann::json& arr, long line, const char* field) {
  if (!arr.is_array() || arr.empty()) {
    fail(line, std::string(field) + " must be a nonempty array");
  }
  Vector v(static_cast<Index>(arr.size()));
  Index i = 0;
  for (const auto& x : arr) {
    if (!x.is_number()) fail(line, std::string(field) + " holds a non-numeric entry");
    v[i++] = x.get<real_t>();
  }
  return v;
}

Sample parse_record(const nlohmann::json& rec, const DatasetDims& dims, long line) {
  if (!rec.is_object()) fail(line, "record is not an object");
  Sample s;
  if (!rec.contains("id") || !rec["id"].is_string()) fail(line, "missing string field \"id\"");
  s.id = rec["id"].get<std::string>();
  if (!rec.contains("label") || !rec["label"].is_number_integer()) {
    fail(line, "missing integer field \"label\"");
  }
  s.label = rec["label"].get<int>();

  if (rec.contains("ehr_static")) {
    Vector v = parse_vector(rec["ehr_static"], line, "ehr_static");
    if (v.size() != dims.static_dim) {
      fail(line, "ehr_static has " + std::to_string(v.size()) + " entries, header declares " +
                     std::to_string(dims.static_dim));
    }
    s.ehr_static = std::move(v);
  }
  if (rec.contains("ehr_series")) {
    const auto& rows = rec["ehr_series"];
    if (!rows.is_array() || rows.empty()) fail(line, "ehr_series must be a nonempty array of rows");
    if (static_cast<Index>(rows.size()) != dims.series_len) {
      fail(line, "ehr_series has " + std::to_string(rows.size()) + " rows, header declares " +
                     std::to_string(dims.series_len));
    }
    Matrix m(dims.series_len, dims.series_dim);
    Index t = 0;
    for (const auto& row : rows) {
      Vector v = parse_vector(row, line, "ehr_series row");
      if (v.size() != dims.series_dim) {
        fail(line, "ehr_series row has " + std::to_string(v.size()) +
                       " entries, header declares " + std::to_string(dims.series_dim));
      }
      m.row(t++) = v.transpose();
    }
    s.ehr_series = std::move(m);
  }
  if (rec.contains("text_tokens")) {
    const auto& arr = rec["text_tokens"];
    if (!arr.is_array() || arr.empty()) fail(line, "text_tokens must be a nonempty array");
    std::vector<int> tokens;
    tokens.reserve(arr.size());
    for (const auto& x : arr) {
      if (!x.is_number_integer()) fail(line, "text_tokens holds a non-integer entry");
      const int tok = x.get<int>();
      if (tok < 0 || tok >= dims.vocab_size) {
        fail(line, "token id " + std::to_string(tok) + " outside vocabulary of size " +
                       std::to_string(dims.vocab_size));
      }
      tokens.push_back(tok);
    }
    s.text_tokens = std::move(tokens);
  }
  if (rec.contains("image_features")) {
    Vector v = parse_vector(rec["image_features"], line, "image_features");
    if (v.size() != dims.image_dim) {
      fail(line, "image_features has " + std::to_string(v.size()) + " entries, header declares " +
                     std::to_string(dims.image_dim));
    }
    s.image_features = std::move(v);
  }

  validate_sample(s, line);
  return s;
}

}  // namespace

void save_dataset(const std::string& path, const DatasetDims& dims,
                  const std::vector<Sample>& samples, const nlohmann::json& meta) {
  std::ostringstream out;
  nlohmann::json header;
  header["format"] = kFormatName;
  header["version"] = kFormatVersion;
  header["dims"] = {{"static_dim", dims.static_dim},
                    {"series_dim", dims.series_dim},
                    {"series_len", dims.series_len},
                    {"vocab_size", dims.vocab_size},
                    {"image_dim", dims.image_dim}};
  header["n_samples"] = samples.size();
  if (!meta.is_null() && !meta.empty()) {
    header["meta"] = meta;
  }
  out << header.dump() << '\n';
  for (const Sample& s : samples) {
    out << sample_to_json(s).dump() << '\n';
  }
  write_text_atomic(path, out.str());
}

DatasetFile load_dataset(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  long line_no = 0;

  if (!std::getline(in, line)) {
    throw DataError("empty dataset file: " + path);
  }
  line_no = 1;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(line_no, std::string("header parse error: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kFormatName) {
    fail(line_no, "not a " + std::string(kFormatName) + " header");
  }
  if (header.value("version", -1) != kFormatVersion) {
    fail(line_no, "unsupported format version");
  }
  if (!header.contains("dims") || !header["dims"].is_object()) {
    fail(line_no, "header lacks the \"dims\" object");
  }

  DatasetFile out;
  const auto& d = header["dims"];
  try {
    out.dims.static_dim = d.at("static_dim").get<Index>();
    out.dims.series_dim = d.at("series_dim").get<Index>();
    out.dims.series_len = d.at("series_len").get<Index>();
    out.dims.vocab_size = d.at("vocab_size").get<Index>();
    out.dims.image_dim = d.at("image_dim").get<Index>();
  } catch (const nlohmann::json::exception& e) {
    fail(line_no, std::string("bad dims in header: ") + e.what());
  }
  if (out.dims.static_dim < 1 || out.dims.series_dim < 1 || out.dims.series_len < 1 ||
      out.dims.vocab_size < 1 || out.dims.image_dim < 1) {
    fail(line_no, "header dimensions must all be positive");
  }
  out.meta = header.value("meta", nlohmann::json::object());

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(line_no, std::string("parse error: ") + e.what());
    }
    out.samples.push_back(parse_record(rec, out.dims, line_no));
  }

  if (header.contains("n_samples")) {
    const auto declared = header["n_samples"].get<std::size_t>();
    if (declared != out.samples.size()) {
      throw DataError("header declares " + std::to_string(declared) + " samples but file holds " +
                      std::to_string(out.samples.size()) + " (truncated file?)");
    }
  }
  return out;
}

}  // namespace moehealth
