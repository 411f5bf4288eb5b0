#include "mixvi/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mixvi {

void Adam::step(const std::vector<Param*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter/gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t p = 0; p < params.size(); ++p) {
    Param& prm = *params[p];
    const Tensor& g = grads[p];
    if (!g.same_shape(prm.value))
      throw std::invalid_argument("adam: gradient shape " + g.shape_str() + " does not match parameter '" + prm.name +
                                  "' " + prm.value.shape_str());
    if (prm.m.size() != prm.value.size()) {
      prm.m = Tensor::zeros(prm.value.shape);
      prm.v = Tensor::zeros(prm.value.shape);
    }
    for (int64_t i = 0; i < g.size(); ++i) {
      prm.m(i) = cfg_.beta1 * prm.m(i) + (1.0 - cfg_.beta1) * g(i);
      prm.v(i) = cfg_.beta2 * prm.v(i) + (1.0 - cfg_.beta2) * g(i) * g(i);
      const double mhat = prm.m(i) / c1;
      const double vhat = prm.v(i) / c2;
      prm.value(i) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace mixvi
