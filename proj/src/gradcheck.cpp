#include "mixvi/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace mixvi {

namespace {

double eval_scalar(const std::function<NodeId(Tape&)>& build) {
  Tape tape;
  NodeId root = build(tape);
  const Tensor& val = tape.val(root);
  if (!val.is_scalar()) throw std::invalid_argument("gradcheck: function must evaluate to a scalar");
  return val(0);
}

}  // namespace

GradCheckReport gradcheck(const std::function<NodeId(Tape&)>& build, const std::vector<Param*>& leaves, double eps) {
  const double v0 = eval_scalar(build);
  const double v1 = eval_scalar(build);
  if (v0 != v1)
    throw std::invalid_argument("gradcheck: function is not deterministic (got " + std::to_string(v0) + " then " +
                                std::to_string(v1) + ")");

  Tape tape;
  NodeId root = build(tape);
  tape.backward(root);
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (const Param* p : leaves) grads.push_back(tape.grad_of(*p));

  GradCheckReport report;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Param& p = *leaves[li];
    double worst = 0.0;
    for (int64_t i = 0; i < p.size(); ++i) {
      const double keep = p.value(i);
      p.value(i) = keep + eps;
      const double fp = eval_scalar(build);
      p.value(i) = keep - eps;
      const double fm = eval_scalar(build);
      p.value(i) = keep;
      const double fd = (fp - fm) / (2.0 * eps);
      const double g = grads[li](i);
      const double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1.0});
      worst = std::max(worst, rel);
    }
    report.per_leaf.emplace_back(p.name, worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  return report;
}

}  // namespace mixvi
