#pragma once

#include <array>
#include <string>
#include <vector>

#include "moehealth/parameter.hpp"
#include "moehealth/sample.hpp"
#include "moehealth/tape.hpp"
#include "moehealth/types.hpp"

namespace moehealth {

struct EncoderConfig {
  DatasetDims dims;
  Index embed_dim = 32;  // d_h, the unified per-modality embedding width
  Index static_embed_dim = 16;
  Index rnn_hidden_dim = 32;  // per direction
  Index token_embed_dim = 16;
  Index image_hidden_dim = 32;

  /// One missingness embedding shared by all modalities instead of one per
  /// modality. Off by default; the per-modality variant carries strictly more
  /// information.
  bool shared_missing_embedding = false;

  Index fused_dim() const { return kNumModalities * embed_dim; }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// The concatenated multimodal representation: one embed_dim slot per
/// modality in canonical order, with absent slots filled by the learned
/// missingness embeddings (or zeros under the zero-padding ablation).
struct FusedRepresentation {
  NodeId node;
  std::array<bool, kNumModalities> present;
};

/// Initial value of a missing-modality embedding: a ±1 square wave with flip
/// period 2^(modality_index+1). The three signatures are mutually orthogonal
/// Walsh rows, and their unit magnitude dominates the sub-unit encoder
/// outputs of a freshly initialized network, so the availability pattern is
/// linearly identifiable in a fused vector before any training. Shared by the
/// gating network's routing prior, which is initialized to read these markers.
Vector missing_signature(Index embed_dim, int modality_index);

/// Modality encoders plus the per-modality missingness embeddings. The
/// constructor registers and initializes all parameters in `store`; weight
/// matrices are Xavier-uniform, biases zero, and missingness embeddings start
/// at the signature patterns above (all remain ordinary trainable
/// parameters).
class Encoders {
 public:
  Encoders(const EncoderConfig& config, ParameterStore& store, Rng& init_rng);

  const EncoderConfig& config() const { return config_; }

  /// Static branch + bidirectional recurrent summary, mapped to embed_dim.
  NodeId encode_ehr(Tape& t, const Vector& ehr_static, const Matrix& ehr_series) const;

  /// Mean of learned token embeddings, then ReLU, then a linear map to embed_dim.
  NodeId encode_text(Tape& t, const std::vector<int>& tokens) const;

  /// Two-layer perceptron with ReLU over precomputed image features.
  NodeId encode_image(Tape& t, const Vector& features) const;

  /// Builds the full fused representation for a sample. With `zero_missing`,
  /// absent slots are exact zero vectors instead of the learned embeddings.
  FusedRepresentation assemble(Tape& t, const Sample& sample, bool zero_missing = false) const;

  Parameter& missing_embedding(ModalityKind m) const { return *missing_[static_cast<int>(m)]; }

  /// All encoder parameter names in registration order (missingness
  /// embeddings included).
  const std::vector<std::string>& parameter_names() const { return names_; }

 private:
  Parameter& track(Parameter& p);

  EncoderConfig config_;
  std::vector<std::string> names_;

  Parameter* static_w_;
  Parameter* static_b_;
  Parameter* rnn_fwd_in_w_;
  Parameter* rnn_fwd_rec_w_;
  Parameter* rnn_fwd_b_;
  Parameter* rnn_bwd_in_w_;
  Parameter* rnn_bwd_rec_w_;
  Parameter* rnn_bwd_b_;
  Parameter* ehr_out_w_;
  Parameter* ehr_out_b_;
  Parameter* token_table_;
  Parameter* text_out_w_;
  Parameter* text_out_b_;
  Parameter* image_l1_w_;
  Parameter* image_l1_b_;
  Parameter* image_l2_w_;
  Parameter* image_l2_b_;
  std::array<Parameter*, kNumModalities> missing_;
};

}  // namespace moehealth
