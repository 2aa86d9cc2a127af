#pragma once

#include <vector>

#include "egocast/nn.hpp"

namespace egocast {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers live here, matched one-to-one
// with the registered parameters; the step counter increments by exactly
// one per step().
class Adam {
 public:
  explicit Adam(std::vector<NamedParam> params, AdamConfig cfg = {});

  // Applies one update. Every parameter must have a populated gradient.
  void step();
  void zero_grad();

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  long step_ = 0;
};

}  // namespace egocast
