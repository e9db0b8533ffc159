#include "moehealth/moe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "moehealth/errors.hpp"

namespace moehealth {
namespace {

/// y_hat = sum_j w_j * y_j over the selected experts, where w_j are the gate
/// values renormalized within the selection. Selection indices are treated as
/// constants; gradient reaches the gate through the renormalized weights:
///   d y_hat / d y_j = w_j
///   d y_hat / d g_j = (y_j - y_hat) / s,   s = sum of selected gate values.
class FuseNode : public Node {
 public:
  FuseNode(const Tape& t, NodeId gate, std::vector<NodeId> expert_outputs,
           RoutingDecision routing)
      : gate_(gate), experts_(std::move(expert_outputs)), routing_(std::move(routing)) {
    const Vector& g = t.value(gate_).col(0);
    selected_mass_ = 0.0;
    for (Index idx : routing_.selected) {
      selected_mass_ += g[idx];
    }
    real_t y_hat = 0.0;
    for (std::size_t j = 0; j < experts_.size(); ++j) {
      y_hat += routing_.weights[static_cast<Index>(j)] * t.scalar(experts_[j]);
    }
    value_ = Matrix::Constant(1, 1, y_hat);
    grad_ = Matrix::Zero(1, 1);
  }

  void backward(Tape& t) override {
    const real_t g_out = grad_(0, 0);
    const real_t y_hat = value_(0, 0);
    Matrix& gate_grad = t.node(gate_).grad();
    for (std::size_t j = 0; j < experts_.size(); ++j) {
      const Index pool_index = routing_.selected[j];
      const real_t y_j = t.scalar(experts_[j]);
      t.node(experts_[j]).grad()(0, 0) += g_out * routing_.weights[static_cast<Index>(j)];
      gate_grad(pool_index, 0) += g_out * (y_j - y_hat) / selected_mass_;
    }
  }

 private:
  NodeId gate_;
  std::vector<NodeId> experts_;
  RoutingDecision routing_;
  real_t selected_mass_;
};

}  // namespace

std::vector<ModalityCombination> enumerate_combinations(const std::vector<Sample>& samples) {
  if (samples.empty()) {
    throw DataError("cannot enumerate modality combinations from an empty sample set");
  }
  std::set<unsigned> masks;
  for (const Sample& s : samples) {
    masks.insert(s.combination().mask());
  }
  std::vector<ModalityCombination> combinations;
  combinations.reserve(masks.size());
  for (unsigned mask : masks) {
    combinations.push_back(ModalityCombination::from_mask(mask));
  }
  std::sort(combinations.begin(), combinations.end());
  return combinations;
}

RoutingDecision route_topk(const GateDistribution& gate, int k) {
  if (gate.size() == 0) {
    throw ValueError("route_topk: empty gate distribution");
  }
  if (k <= 0) {
    throw ValueError("route_topk: k must be positive, got " + std::to_string(k));
  }
  if (!gate.allFinite() || gate.minCoeff() < 0.0) {
    throw ValueError("route_topk: gate distribution must be finite and non-negative");
  }

  RoutingDecision decision;
  const Index pool_size = gate.size();
  Index take = static_cast<Index>(k);
  if (take > pool_size) {
    take = pool_size;
    decision.clamped = true;
  }

  std::vector<Index> order(static_cast<std::size_t>(pool_size));
  for (Index i = 0; i < pool_size; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  std::sort(order.begin(), order.end(), [&gate](Index a, Index b) {
    if (gate[a] != gate[b]) return gate[a] > gate[b];
    return a < b;  // ties toward the smaller index
  });
  order.resize(static_cast<std::size_t>(take));
  decision.selected = std::move(order);

  real_t mass = 0.0;
  for (Index idx : decision.selected) {
    mass += gate[idx];
  }
  if (mass <= 0.0) {
    throw ValueError("route_topk: selected gate values have zero total mass");
  }
  decision.weights = Vector(take);
  for (Index j = 0; j < take; ++j) {
    decision.weights[j] = gate[decision.selected[static_cast<std::size_t>(j)]] / mass;
  }
  return decision;
}

namespace {

// Logit contribution of one matched availability marker in the routing
// prior, and the subset-tie-breaking bonus per modality inside an expert's
// combination. Any ratio with kGatePriorScale > 1.5 * kGatePriorSizeBias
// makes the matching expert the strict argmax for every pattern; these
// values keep the initial softmax decisive but far from saturated.
constexpr real_t kGatePriorScale = 2.0;
constexpr real_t kGatePriorSizeBias = 0.5;

}  // namespace

GatingNetwork::GatingNetwork(Index input_dim, Index hidden_dim, Index num_experts,
                             ParameterStore& store, Rng& init_rng)
    : num_experts_(num_experts) {
  if (input_dim <= 0 || hidden_dim <= 0 || num_experts <= 0) {
    throw ConfigError("gating network dimensions must be positive");
  }
  auto make = [&](const std::string& name, Index rows, Index cols, bool xavier) {
    Parameter& p = store.create(name, rows, cols);
    if (xavier) init_xavier_uniform(p.values, init_rng);
    names_.push_back(name);
    return &p;
  };
  hidden_w_ = make("moe.gate.hidden.w", hidden_dim, input_dim, true);
  hidden_b_ = make("moe.gate.hidden.b", hidden_dim, 1, false);
  out_w_ = make("moe.gate.out.w", num_experts, hidden_dim, true);
  out_b_ = make("moe.gate.out.b", num_experts, 1, false);
  skip_w_ = make("moe.gate.skip.w", num_experts, input_dim, false);
}

GatingNetwork::GatingNetwork(Index input_dim, Index hidden_dim, ParameterStore& store,
                             Rng& init_rng, const std::vector<ModalityCombination>& expert_combos,
                             const Matrix& slot_markers)
    : GatingNetwork(input_dim, hidden_dim, static_cast<Index>(expert_combos.size()), store,
                    init_rng) {
  const Index embed_dim = slot_markers.rows();
  if (slot_markers.cols() != kNumModalities || embed_dim * kNumModalities != input_dim) {
    throw ShapeError("gating prior: slot markers are " + std::to_string(embed_dim) + "x" +
                     std::to_string(slot_markers.cols()) + " for input dim " +
                     std::to_string(input_dim));
  }
  // Expert k's skip row scores each slot's agreement with that modality's
  // missing marker: positive when the modality is outside combination k
  // (missing it is evidence for k), negative when inside (evidence against).
  // A present modality's slot carries encoder output instead of the marker,
  // so its term starts near zero either way.
  for (Index k = 0; k < num_experts_; ++k) {
    const ModalityCombination& combo = expert_combos[static_cast<std::size_t>(k)];
    for (ModalityKind m : kAllModalities) {
      const Index slot = static_cast<Index>(m);
      const real_t sign = combo.has(m) ? -kGatePriorScale : kGatePriorScale;
      skip_w_->values.row(k).segment(slot * embed_dim, embed_dim) =
          (sign / static_cast<real_t>(embed_dim)) * slot_markers.col(slot).transpose();
    }
    out_b_->values(k, 0) = kGatePriorSizeBias * static_cast<real_t>(combo.count());
  }
}

NodeId GatingNetwork::distribution(Tape& t, NodeId fused) const {
  NodeId hidden = relu(t, affine(t, t.leaf(*hidden_w_), t.leaf(*hidden_b_), fused));
  NodeId refined = affine(t, t.leaf(*out_w_), t.leaf(*out_b_), hidden);
  return softmax(t, add(t, matvec(t, t.leaf(*skip_w_), fused), refined));
}

Expert::Expert(const std::string& combination_key, Index input_dim, Index hidden_dim,
               ParameterStore& store, Rng& init_rng)
    : key_(combination_key) {
  if (input_dim <= 0 || hidden_dim <= 0) {
    throw ConfigError("expert dimensions must be positive");
  }
  const std::string prefix = "moe.expert." + key_ + ".";
  auto make = [&](const std::string& suffix, Index rows, Index cols, bool xavier) {
    Parameter& p = store.create(prefix + suffix, rows, cols);
    if (xavier) init_xavier_uniform(p.values, init_rng);
    names_.push_back(prefix + suffix);
    return &p;
  };
  l1_w_ = make("l1.w", hidden_dim, input_dim, true);
  l1_b_ = make("l1.b", hidden_dim, 1, false);
  l2_w_ = make("l2.w", hidden_dim, hidden_dim, true);
  l2_b_ = make("l2.b", hidden_dim, 1, false);
  head_w_ = make("head.w", 1, hidden_dim, true);
  head_b_ = make("head.b", 1, 1, false);
}

NodeId Expert::predict(Tape& t, NodeId fused) const {
  NodeId h1 = relu(t, affine(t, t.leaf(*l1_w_), t.leaf(*l1_b_), fused));
  NodeId h2 = relu(t, affine(t, t.leaf(*l2_w_), t.leaf(*l2_b_), h1));
  return sigmoid(t, affine(t, t.leaf(*head_w_), t.leaf(*head_b_), h2));
}

ExpertPool::ExpertPool(const std::vector<ModalityCombination>& combinations, Index input_dim,
                       Index hidden_dim, ParameterStore& store, Rng& init_rng) {
  if (combinations.empty()) {
    throw ConfigError("expert pool requires at least one modality combination");
  }
  experts_.reserve(combinations.size());
  for (const ModalityCombination& combo : combinations) {
    if (index_of(combo.key()).has_value()) {
      throw ConfigError("duplicate expert combination key: " + combo.key());
    }
    experts_.emplace_back(combo.key(), input_dim, hidden_dim, store, init_rng);
  }
}

std::vector<std::string> ExpertPool::keys() const {
  std::vector<std::string> out;
  out.reserve(experts_.size());
  for (const Expert& e : experts_) {
    out.push_back(e.combination_key());
  }
  return out;
}

std::optional<Index> ExpertPool::index_of(const std::string& key) const {
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    if (experts_[i].combination_key() == key) return static_cast<Index>(i);
  }
  return std::nullopt;
}

std::vector<std::string> ExpertPool::parameter_names() const {
  std::vector<std::string> out;
  for (const Expert& e : experts_) {
    out.insert(out.end(), e.parameter_names().begin(), e.parameter_names().end());
  }
  return out;
}

FusePrediction fuse_predict(Tape& t, NodeId fused, const GatingNetwork& gating,
                            const ExpertPool& pool, int k) {
  if (gating.num_experts() != pool.size()) {
    throw ConfigError("gating network and expert pool disagree on pool size");
  }
  FusePrediction out;
  out.gate = gating.distribution(t, fused);
  out.routing = route_topk(t.value(out.gate).col(0), k);
  std::vector<NodeId> expert_outputs;
  expert_outputs.reserve(out.routing.selected.size());
  for (Index idx : out.routing.selected) {
    expert_outputs.push_back(pool[idx].predict(t, fused));
  }
  out.prediction =
      t.push(std::make_unique<FuseNode>(t, out.gate, std::move(expert_outputs), out.routing));
  return out;
}

FusePrediction fuse_uniform(Tape& t, NodeId fused, const ExpertPool& pool) {
  FusePrediction out;
  out.gate = kNoNode;
  const Index pool_size = pool.size();
  out.routing.selected.resize(static_cast<std::size_t>(pool_size));
  for (Index i = 0; i < pool_size; ++i) {
    out.routing.selected[static_cast<std::size_t>(i)] = i;
  }
  out.routing.weights = Vector::Constant(pool_size, 1.0 / static_cast<real_t>(pool_size));

  NodeId acc = pool[0].predict(t, fused);
  for (Index i = 1; i < pool_size; ++i) {
    acc = add(t, acc, pool[i].predict(t, fused));
  }
  out.prediction = scale(t, acc, 1.0 / static_cast<real_t>(pool_size));
  return out;
}

}  // namespace moehealth
