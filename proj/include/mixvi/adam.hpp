#pragma once

#include <vector>

#include "mixvi/tape.hpp"

namespace mixvi {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment gradient descent with bias correction. Callers minimizing
// a maximization objective pass gradients of its negation.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Param*>& params, const std::vector<Tensor>& grads);

  int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

}  // namespace mixvi
