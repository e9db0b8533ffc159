#include "moehealth/adamw.hpp"

#include <cmath>

#include "moehealth/errors.hpp"

namespace moehealth {

void AdamW::step(ParameterStore& store) {
  ++step_count_;
  for (std::size_t i = 0; i < store.size(); ++i) {
    update(store[i]);
  }
}

void AdamW::step(ParameterStore& store, const std::vector<std::string>& names) {
  ++step_count_;
  for (const std::string& name : names) {
    update(store.at(name));
  }
}

void AdamW::update(Parameter& p) {
  auto [it, created] = moments_.try_emplace(p.name);
  Moments& m = it->second;
  if (created) {
    m.first = Matrix::Zero(p.rows(), p.cols());
    m.second = Matrix::Zero(p.rows(), p.cols());
  } else if (m.first.rows() != p.rows() || m.first.cols() != p.cols()) {
    throw ShapeError("optimizer state for '" + p.name + "' is " +
                     std::to_string(m.first.rows()) + "x" + std::to_string(m.first.cols()) +
                     " but the parameter is " + std::to_string(p.rows()) + "x" +
                     std::to_string(p.cols()));
  }

  // Bias correction counts this parameter's own updates, so parameters that
  // join late (subset stepping) are corrected as if freshly initialized.
  ++m.steps;
  const real_t bc1 = 1.0 - std::pow(config_.beta1, static_cast<real_t>(m.steps));
  const real_t bc2 = 1.0 - std::pow(config_.beta2, static_cast<real_t>(m.steps));

  // Decoupled decay multiplies the parameter itself, never the gradient.
  if (config_.weight_decay != 0.0) {
    p.values *= (1.0 - config_.learning_rate * config_.weight_decay);
  }

  m.first = config_.beta1 * m.first + (1.0 - config_.beta1) * p.gradient;
  m.second.array() =
      config_.beta2 * m.second.array() + (1.0 - config_.beta2) * p.gradient.array().square();

  p.values.array() -=
      config_.learning_rate * (m.first.array() / bc1) /
      ((m.second.array() / bc2).sqrt() + config_.epsilon);

  p.gradient.setZero();
}

}  // namespace moehealth
