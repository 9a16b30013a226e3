#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "match/autodiff.hpp"

namespace match::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// First/second moment estimates for a fixed, ordered list of parameters.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// One bias-corrected update of every trainable parameter from its `grad`.
  /// The parameter list must keep the same order and shapes across calls.
  void step(std::span<Parameter* const> params);

  std::size_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::size_t steps_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace match::ad
