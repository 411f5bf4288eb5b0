#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mixvi/tape.hpp"

namespace mixvi {

struct GradCheckReport {
  double max_rel_err = 0.0;
  // per-leaf worst relative error, in leaf order
  std::vector<std::pair<std::string, double>> per_leaf;
};

// Compares tape gradients of a scalar-valued graph against central finite
// differences over every entry of every leaf. The builder must be
// deterministic given the leaves (all random draws fixed); non-deterministic
// builders are detected by double evaluation and rejected.
GradCheckReport gradcheck(const std::function<NodeId(Tape&)>& build, const std::vector<Param*>& leaves,
                          double eps = 1e-6);

}  // namespace mixvi
