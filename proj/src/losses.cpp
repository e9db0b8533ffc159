#include "moehealth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "moehealth/errors.hpp"

namespace moehealth {
namespace {

real_t clamp_probability(real_t p) { return std::clamp(p, kBceEps, 1.0 - kBceEps); }

real_t bce_term(real_t p, real_t y) {
  const real_t pc = clamp_probability(p);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

/// Mean BCE over scalar prediction nodes against fixed labels.
class BceNode : public Node {
 public:
  BceNode(const Tape& t, std::vector<NodeId> predictions, Vector labels)
      : predictions_(std::move(predictions)), labels_(std::move(labels)) {
    real_t total = 0.0;
    for (std::size_t i = 0; i < predictions_.size(); ++i) {
      total += bce_term(t.scalar(predictions_[i]), labels_[static_cast<Index>(i)]);
    }
    value_ = Matrix::Constant(1, 1, total / static_cast<real_t>(predictions_.size()));
    grad_ = Matrix::Zero(1, 1);
  }

  void backward(Tape& t) override {
    const real_t g = grad_(0, 0) / static_cast<real_t>(predictions_.size());
    for (std::size_t i = 0; i < predictions_.size(); ++i) {
      const real_t p = t.scalar(predictions_[i]);
      if (p < kBceEps || p > 1.0 - kBceEps) continue;  // clamp region is flat
      const real_t y = labels_[static_cast<Index>(i)];
      t.node(predictions_[i]).grad()(0, 0) += g * (-y / p + (1.0 - y) / (1.0 - p));
    }
  }

 private:
  std::vector<NodeId> predictions_;
  Vector labels_;
};

/// Elementwise mean of equally-shaped gate vectors.
class MeanGateNode : public Node {
 public:
  MeanGateNode(const Tape& t, std::vector<NodeId> gates) : gates_(std::move(gates)) {
    const Matrix& first = t.value(gates_[0]);
    Matrix total = Matrix::Zero(first.rows(), first.cols());
    for (NodeId id : gates_) {
      const Matrix& g = t.value(id);
      if (g.rows() != first.rows() || g.cols() != first.cols()) {
        throw ShapeError("mean_gate: gate distributions disagree on expert count");
      }
      total += g;
    }
    value_ = total / static_cast<real_t>(gates_.size());
    grad_ = Matrix::Zero(value_.rows(), value_.cols());
  }

  void backward(Tape& t) override {
    const Matrix share = grad_ / static_cast<real_t>(gates_.size());
    for (NodeId id : gates_) {
      t.node(id).grad() += share;
    }
  }

 private:
  std::vector<NodeId> gates_;
};

/// alpha * CV(f ⊙ p) with constant f. Writing u = f ⊙ p, mu = mean(u),
/// sigma = population std(u):
///   dCV/du_k = (u_k - mu) / (K·sigma·mu) - sigma / (K·mu²)
/// and du_k/dp_k = f_k. Gradient is zero at sigma = 0 (minimum plateau) and
/// whenever the mean guard zeroes the loss.
class CvBalanceNode : public Node {
 public:
  CvBalanceNode(const Tape& t, NodeId mean_gate_node, Vector f, real_t alpha)
      : p_node_(mean_gate_node), f_(std::move(f)), alpha_(alpha) {
    const Vector p = t.value(p_node_).col(0);
    if (p.size() != f_.size()) {
      throw ShapeError("balance_penalty: count vector and gate mean disagree on expert count");
    }
    const Vector u = (f_.array() * p.array()).matrix();
    mu_ = u.mean();
    if (mu_ <= kBalanceMeanGuard) {
      degenerate_ = true;
      value_ = Matrix::Zero(1, 1);
    } else {
      sigma_ = std::sqrt((u.array() - mu_).square().mean());
      value_ = Matrix::Constant(1, 1, alpha_ * sigma_ / mu_);
    }
    grad_ = Matrix::Zero(1, 1);
  }

  void backward(Tape& t) override {
    if (degenerate_ || sigma_ <= 0.0) return;
    const real_t g = grad_(0, 0) * alpha_;
    const Vector p = t.value(p_node_).col(0);
    const Vector u = (f_.array() * p.array()).matrix();
    const real_t n = static_cast<real_t>(u.size());
    Matrix& p_grad = t.node(p_node_).grad();
    for (Index k = 0; k < u.size(); ++k) {
      const real_t d_cv =
          (u[k] - mu_) / (n * sigma_ * mu_) - sigma_ / (n * mu_ * mu_);
      p_grad(k, 0) += g * d_cv * f_[k];
    }
  }

 private:
  NodeId p_node_;
  Vector f_;
  real_t alpha_;
  real_t mu_ = 0.0;
  real_t sigma_ = 0.0;
  bool degenerate_ = false;
};

}  // namespace

real_t bce_loss(const Vector& predictions, const Vector& labels) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("bce_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (predictions.size() == 0) {
    throw ValueError("bce_loss: empty batch");
  }
  real_t total = 0.0;
  for (Index i = 0; i < predictions.size(); ++i) {
    total += bce_term(predictions[i], labels[i]);
  }
  return total / static_cast<real_t>(predictions.size());
}

Vector selection_counts(const std::vector<RoutingDecision>& decisions, Index pool_size) {
  Vector f = Vector::Zero(pool_size);
  for (const RoutingDecision& d : decisions) {
    for (Index idx : d.selected) {
      if (idx < 0 || idx >= pool_size) {
        throw ValueError("selection_counts: expert index " + std::to_string(idx) +
                         " outside pool of size " + std::to_string(pool_size));
      }
      f[idx] += 1.0;
    }
  }
  return f;
}

UsageStats usage_stats(const std::vector<RoutingDecision>& decisions,
                       const std::vector<GateDistribution>& gates) {
  if (decisions.empty() || decisions.size() != gates.size()) {
    throw ValueError("usage_stats: decisions and gates must be nonempty lists of equal length");
  }
  const Index pool_size = gates.front().size();
  UsageStats stats;
  stats.f = selection_counts(decisions, pool_size);
  stats.p = Vector::Zero(pool_size);
  for (const GateDistribution& g : gates) {
    if (g.size() != pool_size) {
      throw ShapeError("usage_stats: gate distributions disagree on expert count");
    }
    stats.p += g;
  }
  stats.p /= static_cast<real_t>(gates.size());
  return stats;
}

real_t load_balance_loss(const UsageStats& stats, real_t alpha) {
  if (alpha < 0.0) {
    throw ValueError("load_balance_loss: alpha must be non-negative");
  }
  if (stats.f.size() != stats.p.size()) {
    throw ShapeError("load_balance_loss: f and p disagree on expert count");
  }
  const Vector u = (stats.f.array() * stats.p.array()).matrix();
  const real_t mu = u.mean();
  if (mu <= kBalanceMeanGuard) return 0.0;
  const real_t sigma = std::sqrt((u.array() - mu).square().mean());
  return alpha * sigma / mu;
}

real_t composite_loss(real_t task_loss, real_t balance_loss) {
  if (!std::isfinite(task_loss) || !std::isfinite(balance_loss)) {
    throw ValueError("composite_loss: non-finite input");
  }
  return task_loss + balance_loss;
}

NodeId bce(Tape& t, const std::vector<NodeId>& predictions, const Vector& labels) {
  if (predictions.empty() || static_cast<Index>(predictions.size()) != labels.size()) {
    throw ValueError("bce: prediction nodes and labels must be nonempty and equal length");
  }
  return t.push(std::make_unique<BceNode>(t, predictions, labels));
}

NodeId mean_gate(Tape& t, const std::vector<NodeId>& gates) {
  if (gates.empty()) {
    throw ValueError("mean_gate: empty gate list");
  }
  return t.push(std::make_unique<MeanGateNode>(t, gates));
}

NodeId balance_penalty(Tape& t, NodeId mean_gate_node, const Vector& f, real_t alpha) {
  if (alpha < 0.0) {
    throw ValueError("balance_penalty: alpha must be non-negative");
  }
  return t.push(std::make_unique<CvBalanceNode>(t, mean_gate_node, f, alpha));
}

}  // namespace moehealth
