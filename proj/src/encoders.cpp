#include "moehealth/encoders.hpp"

#include <memory>
#include <utility>

#include "moehealth/errors.hpp"

namespace moehealth {

namespace {

// Final hidden state of a tanh recurrence over the rows of `series`
// (in reverse row order when `reverse` is set). h_0 is the zero vector:
//   h_t = tanh(W_in * x_t + W_rec * h_{t-1} + b)
// The per-step hidden states are kept for backpropagation through time.
class RnnFinalNode final : public Node {
 public:
  RnnFinalNode(Tape& t, NodeId in_w, NodeId rec_w, NodeId b, Matrix series, bool reverse)
      : in_w_(in_w), rec_w_(rec_w), b_(b), series_(std::move(series)), reverse_(reverse) {
    const Matrix& wi = t.value(in_w);
    const Matrix& wr = t.value(rec_w);
    const Matrix& bv = t.value(b);
    const Index hidden = wi.rows();
    const Index steps = series_.rows();
    if (wi.cols() != series_.cols() || wr.rows() != hidden || wr.cols() != hidden ||
        bv.rows() != hidden || bv.cols() != 1) {
      throw ShapeError("rnn_final: weight shapes do not match series width " +
                       std::to_string(series_.cols()));
    }
    states_.resize(hidden, steps);
    Vector h = Vector::Zero(hidden);
    Vector pre(hidden);
    for (Index s = 0; s < steps; ++s) {
      const Index row = reverse_ ? steps - 1 - s : s;
      pre = bv;
      pre.noalias() += wi * series_.row(row).transpose();
      pre.noalias() += wr * h;
      h = pre.array().tanh().matrix();
      states_.col(s) = h;
    }
    value_ = h;
    grad_ = Matrix::Zero(hidden, 1);
  }

  void backward(Tape& t) override {
    const Matrix& wr = t.value(rec_w_);
    Matrix& g_in = t.node(in_w_).grad();
    Matrix& g_rec = t.node(rec_w_).grad();
    Matrix& g_b = t.node(b_).grad();
    const Index steps = states_.cols();
    Vector dh = grad_;
    Vector da(states_.rows());
    for (Index s = steps - 1; s >= 0; --s) {
      da = (1.0 - states_.col(s).array().square()) * dh.array();
      const Index row = reverse_ ? steps - 1 - s : s;
      g_in.noalias() += da * series_.row(row);
      if (s > 0) {
        g_rec.noalias() += da * states_.col(s - 1).transpose();
      }
      g_b += da;
      dh.noalias() = wr.transpose() * da;
    }
  }

 private:
  NodeId in_w_, rec_w_, b_;
  Matrix series_;
  bool reverse_;
  Matrix states_;  // hidden x steps, in processing order
};

// Mean of the embedding-table rows selected by `tokens`, as a column vector.
class EmbeddingMeanNode final : public Node {
 public:
  EmbeddingMeanNode(Tape& t, NodeId table, std::vector<int> tokens)
      : table_(table), tokens_(std::move(tokens)) {
    const Matrix& e = t.value(table);
    value_ = Matrix::Zero(e.cols(), 1);
    for (int tok : tokens_) {
      value_ += e.row(tok).transpose();
    }
    value_ /= static_cast<real_t>(tokens_.size());
    grad_ = Matrix::Zero(value_.rows(), 1);
  }

  void backward(Tape& t) override {
    Matrix& g = t.node(table_).grad();
    const Matrix share = grad_.transpose() / static_cast<real_t>(tokens_.size());
    for (int tok : tokens_) {
      g.row(tok) += share;
    }
  }

 private:
  NodeId table_;
  std::vector<int> tokens_;
};

}  // namespace

Vector missing_signature(Index embed_dim, int modality_index) {
  Vector v(embed_dim);
  for (Index j = 0; j < embed_dim; ++j) {
    const bool flip = (static_cast<unsigned>(j) >> modality_index) & 1u;
    v[j] = flip ? real_t{-1.0} : real_t{1.0};
  }
  return v;
}

Encoders::Encoders(const EncoderConfig& config, ParameterStore& store, Rng& init_rng)
    : config_(config) {
  const DatasetDims& d = config.dims;
  const Index recurrent_span = 2 * config.rnn_hidden_dim;

  auto weight = [&](const std::string& name, Index rows, Index cols) {
    Parameter& p = track(store.create(name, rows, cols));
    init_xavier_uniform(p.values, init_rng);
    return &p;
  };
  auto bias = [&](const std::string& name, Index rows) {
    return &track(store.create(name, rows));
  };

  static_w_ = weight("enc.ehr.static.w", config.static_embed_dim, d.static_dim);
  static_b_ = bias("enc.ehr.static.b", config.static_embed_dim);
  rnn_fwd_in_w_ = weight("enc.ehr.rnn.fwd.in_w", config.rnn_hidden_dim, d.series_dim);
  rnn_fwd_rec_w_ = weight("enc.ehr.rnn.fwd.rec_w", config.rnn_hidden_dim, config.rnn_hidden_dim);
  rnn_fwd_b_ = bias("enc.ehr.rnn.fwd.b", config.rnn_hidden_dim);
  rnn_bwd_in_w_ = weight("enc.ehr.rnn.bwd.in_w", config.rnn_hidden_dim, d.series_dim);
  rnn_bwd_rec_w_ = weight("enc.ehr.rnn.bwd.rec_w", config.rnn_hidden_dim, config.rnn_hidden_dim);
  rnn_bwd_b_ = bias("enc.ehr.rnn.bwd.b", config.rnn_hidden_dim);
  ehr_out_w_ = weight("enc.ehr.out.w", config.embed_dim, config.static_embed_dim + recurrent_span);
  ehr_out_b_ = bias("enc.ehr.out.b", config.embed_dim);

  token_table_ = weight("enc.text.embed", d.vocab_size, config.token_embed_dim);
  text_out_w_ = weight("enc.text.out.w", config.embed_dim, config.token_embed_dim);
  text_out_b_ = bias("enc.text.out.b", config.embed_dim);

  image_l1_w_ = weight("enc.image.l1.w", config.image_hidden_dim, d.image_dim);
  image_l1_b_ = bias("enc.image.l1.b", config.image_hidden_dim);
  image_l2_w_ = weight("enc.image.l2.w", config.embed_dim, config.image_hidden_dim);
  image_l2_b_ = bias("enc.image.l2.b", config.embed_dim);

  if (config.shared_missing_embedding) {
    Parameter& shared = track(store.create("missing.SHARED", config.embed_dim, 1));
    shared.values.col(0) = missing_signature(config.embed_dim, 0);
    missing_.fill(&shared);
  } else {
    for (ModalityKind m : kAllModalities) {
      const int idx = static_cast<int>(m);
      Parameter& p = track(store.create("missing." + modality_name(m), config.embed_dim, 1));
      p.values.col(0) = missing_signature(config.embed_dim, idx);
      missing_[idx] = &p;
    }
  }
}

Parameter& Encoders::track(Parameter& p) {
  names_.push_back(p.name);
  return p;
}

NodeId Encoders::encode_ehr(Tape& t, const Vector& ehr_static, const Matrix& ehr_series) const {
  if (ehr_series.rows() < 1) {
    throw ValueError("encode_ehr: series has no time bins");
  }
  if (!ehr_static.allFinite() || !ehr_series.allFinite()) {
    throw ValueError("encode_ehr: input contains non-finite values");
  }
  if (ehr_static.size() != config_.dims.static_dim || ehr_series.cols() != config_.dims.series_dim) {
    throw ShapeError("encode_ehr: static is " + std::to_string(ehr_static.size()) + ", series is " +
                     std::to_string(ehr_series.rows()) + "x" + std::to_string(ehr_series.cols()) +
                     "; configured dims are " + std::to_string(config_.dims.static_dim) + " and *x" +
                     std::to_string(config_.dims.series_dim));
  }
  const NodeId static_emb = relu(t, affine(t, t.leaf(*static_w_), t.leaf(*static_b_), ehr_static));
  const NodeId fwd = t.push(std::make_unique<RnnFinalNode>(
      t, t.leaf(*rnn_fwd_in_w_), t.leaf(*rnn_fwd_rec_w_), t.leaf(*rnn_fwd_b_), ehr_series, false));
  const NodeId bwd = t.push(std::make_unique<RnnFinalNode>(
      t, t.leaf(*rnn_bwd_in_w_), t.leaf(*rnn_bwd_rec_w_), t.leaf(*rnn_bwd_b_), ehr_series, true));
  return affine(t, t.leaf(*ehr_out_w_), t.leaf(*ehr_out_b_), concat(t, {static_emb, fwd, bwd}));
}

NodeId Encoders::encode_text(Tape& t, const std::vector<int>& tokens) const {
  if (tokens.empty()) {
    throw ValueError("encode_text: token list is empty");
  }
  for (int tok : tokens) {
    if (tok < 0 || tok >= config_.dims.vocab_size) {
      throw ValueError("encode_text: token id " + std::to_string(tok) +
                       " outside vocabulary of size " + std::to_string(config_.dims.vocab_size));
    }
  }
  const NodeId pooled = t.push(std::make_unique<EmbeddingMeanNode>(t, t.leaf(*token_table_), tokens));
  return affine(t, t.leaf(*text_out_w_), t.leaf(*text_out_b_), relu(t, pooled));
}

NodeId Encoders::encode_image(Tape& t, const Vector& features) const {
  if (features.size() != config_.dims.image_dim) {
    throw ShapeError("encode_image: got " + std::to_string(features.size()) +
                     " features, configured for " + std::to_string(config_.dims.image_dim));
  }
  const NodeId hidden = relu(t, affine(t, t.leaf(*image_l1_w_), t.leaf(*image_l1_b_), features));
  return affine(t, t.leaf(*image_l2_w_), t.leaf(*image_l2_b_), hidden);
}

FusedRepresentation Encoders::assemble(Tape& t, const Sample& sample, bool zero_missing) const {
  FusedRepresentation fused{};
  std::vector<NodeId> slots;
  slots.reserve(kNumModalities);
  for (ModalityKind m : kAllModalities) {
    const int idx = static_cast<int>(m);
    fused.present[idx] = sample.has(m);
    if (sample.has(m)) {
      switch (m) {
        case ModalityKind::kEhr:
          slots.push_back(encode_ehr(t, *sample.ehr_static, *sample.ehr_series));
          break;
        case ModalityKind::kText:
          slots.push_back(encode_text(t, *sample.text_tokens));
          break;
        case ModalityKind::kImage:
          slots.push_back(encode_image(t, *sample.image_features));
          break;
      }
    } else if (zero_missing) {
      slots.push_back(constant(t, Matrix::Zero(config_.embed_dim, 1)));
    } else {
      slots.push_back(t.leaf(*missing_[idx]));
    }
  }
  fused.node = concat(t, slots);
  return fused;
}

}  // namespace moehealth
