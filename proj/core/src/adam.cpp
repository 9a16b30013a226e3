#include "match/adam.hpp"

#include <cmath>

#include "match/errors.hpp"

namespace match::ad {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Tensor::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (params.size() != m_.size()) {
    throw ShapeError("adam: parameter list changed size between steps");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.value.rows() != m_[i].rows() || p.value.cols() != m_[i].cols() ||
        p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw ShapeError("adam: shape mismatch for parameter '" + p.name + "'");
    }
    if (!p.trainable) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config_.learning_rate * (m_[i].array() / c1) /
                       ((v_[i].array() / c2).sqrt() + config_.epsilon);
  }
}

}  // namespace match::ad
