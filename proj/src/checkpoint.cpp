#include "moehealth/checkpoint.hpp"

#include "moehealth/errors.hpp"
#include "moehealth/io.hpp"

namespace moehealth {
namespace {

constexpr const char* kFormatName = "moe-health-checkpoint";
constexpr int kFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"encoder",
       {{"dims",
         {{"static_dim", c.encoder.dims.static_dim},
          {"series_dim", c.encoder.dims.series_dim},
          {"series_len", c.encoder.dims.series_len},
          {"vocab_size", c.encoder.dims.vocab_size},
          {"image_dim", c.encoder.dims.image_dim}}},
        {"embed_dim", c.encoder.embed_dim},
        {"static_embed_dim", c.encoder.static_embed_dim},
        {"rnn_hidden_dim", c.encoder.rnn_hidden_dim},
        {"token_embed_dim", c.encoder.token_embed_dim},
        {"image_hidden_dim", c.encoder.image_hidden_dim},
        {"shared_missing_embedding", c.encoder.shared_missing_embedding}}},
      {"expert_hidden_dim", c.expert_hidden_dim},
      {"gate_hidden_dim", c.gate_hidden_dim},
      {"top_k", c.top_k},
      {"ablation", to_string(c.ablation)},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    const auto& e = j.at("encoder");
    const auto& d = e.at("dims");
    c.encoder.dims.static_dim = d.at("static_dim").get<Index>();
    c.encoder.dims.series_dim = d.at("series_dim").get<Index>();
    c.encoder.dims.series_len = d.at("series_len").get<Index>();
    c.encoder.dims.vocab_size = d.at("vocab_size").get<Index>();
    c.encoder.dims.image_dim = d.at("image_dim").get<Index>();
    c.encoder.embed_dim = e.at("embed_dim").get<Index>();
    c.encoder.static_embed_dim = e.at("static_embed_dim").get<Index>();
    c.encoder.rnn_hidden_dim = e.at("rnn_hidden_dim").get<Index>();
    c.encoder.token_embed_dim = e.at("token_embed_dim").get<Index>();
    c.encoder.image_hidden_dim = e.at("image_hidden_dim").get<Index>();
    c.encoder.shared_missing_embedding = e.at("shared_missing_embedding").get<bool>();
    c.expert_hidden_dim = j.at("expert_hidden_dim").get<Index>();
    c.gate_hidden_dim = j.at("gate_hidden_dim").get<Index>();
    c.top_k = j.at("top_k").get<int>();
    c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("checkpoint: malformed config block: ") + ex.what());
  }
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const nlohmann::json& meta) {
  nlohmann::json doc;
  doc["format"] = kFormatName;
  doc["version"] = kFormatVersion;
  doc["config"] = config_to_json(model.config());

  auto combos = nlohmann::json::array();
  for (const ModalityCombination& c : model.combinations()) {
    combos.push_back(c.key());
  }
  doc["combinations"] = std::move(combos);

  nlohmann::json params = nlohmann::json::object();
  const ParameterStore& store = model.params();
  for (const std::string& name : store.names()) {
    const Parameter& p = store.at(name);
    auto values = nlohmann::json::array();
    for (Index c = 0; c < p.cols(); ++c) {
      for (Index r = 0; r < p.rows(); ++r) {
        values.push_back(p.values(r, c));
      }
    }
    params[name] = {{"rows", p.rows()}, {"cols", p.cols()}, {"values", std::move(values)}};
  }
  doc["parameters"] = std::move(params);
  if (!meta.is_null() && !meta.empty()) {
    doc["meta"] = meta;
  }
  write_text_atomic(path, doc.dump() + "\n");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint: parse error in " + path + ": " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != kFormatName) {
    throw DataError("checkpoint: " + path + " is not a " + kFormatName + " file");
  }
  if (doc.value("version", -1) != kFormatVersion) {
    throw DataError("checkpoint: unsupported version in " + path);
  }

  const ModelConfig config = config_from_json(doc.at("config"));
  std::vector<ModalityCombination> combinations;
  try {
    for (const auto& key : doc.at("combinations")) {
      combinations.push_back(ModalityCombination::from_key(key.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed combinations block: ") + e.what());
  } catch (const ValueError& e) {
    throw DataError(std::string("checkpoint: bad combination key: ") + e.what());
  }

  LoadedCheckpoint out;
  out.model = std::make_unique<Model>(config, combinations, /*init_seed=*/0);
  out.meta = doc.value("meta", nlohmann::json::object());

  if (!doc.contains("parameters") || !doc["parameters"].is_object()) {
    throw DataError("checkpoint: missing parameters block");
  }
  const auto& params = doc["parameters"];
  ParameterStore& store = out.model->params();
  if (params.size() != store.size()) {
    throw DataError("checkpoint: holds " + std::to_string(params.size()) +
                    " parameters, model defines " + std::to_string(store.size()));
  }
  for (const std::string& name : store.names()) {
    if (!params.contains(name)) {
      throw DataError("checkpoint: parameter \"" + name + "\" is missing");
    }
    const auto& block = params[name];
    Parameter& p = store.at(name);
    Index rows = 0;
    Index cols = 0;
    try {
      rows = block.at("rows").get<Index>();
      cols = block.at("cols").get<Index>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("checkpoint: malformed block for \"" + name + "\": " + e.what());
    }
    if (rows != p.rows() || cols != p.cols()) {
      throw DataError("checkpoint: parameter \"" + name + "\" is " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", model expects " + std::to_string(p.rows()) + "x" +
                      std::to_string(p.cols()));
    }
    const auto& values = block.at("values");
    if (!values.is_array() || static_cast<Index>(values.size()) != rows * cols) {
      throw DataError("checkpoint: parameter \"" + name + "\" has wrong value count");
    }
    Index i = 0;
    for (Index c = 0; c < cols; ++c) {
      for (Index r = 0; r < rows; ++r) {
        p.values(r, c) = values[static_cast<std::size_t>(i++)].get<real_t>();
      }
    }
  }
  return out;
}

}  // namespace moehealth
