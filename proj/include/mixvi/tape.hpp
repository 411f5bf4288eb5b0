#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixvi/errors.hpp"
#include "mixvi/tensor.hpp"

namespace mixvi {

using NodeId = int32_t;

// A learnable parameter. Owns the value and the optimizer moment buffers;
// parameters outlive tapes, which bind to them step by step.
struct Param {
  std::string name;
  Tensor value;
  Tensor m, v;  // adaptive-moment state, sized on first optimizer step

  Param() = default;
  Param(std::string n, Tensor val) : name(std::move(n)), value(std::move(val)) {}
  int64_t size() const { return value.size(); }
};

// Batch-normalization running statistics, shared across tapes and updated
// with momentum 0.1 on every training-mode forward.
struct BatchNormState {
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool initialized = false;
};

enum class Op : uint8_t {
  Leaf,
  Add, Sub, Mul, Div, Neg,
  Exp, Log, Sqrt, Tanh, Softplus, Sigmoid, ElemMax,
  MatMul, Transpose, QuadForm, TriSolve,
  Sum, Mean, RowSum,
  LogSumExpRows, TakePerRow, TakeRows,
  Slice, Concat, Reshape,
  AddRowVec, ScaleRows, TakeDiag, MakeDiag,
  Conv1d, MaxPoolMenus, BatchNorm,
  BatchCholApply, CorrChol, CorrCholLogDet,
};

const char* op_name(Op op);

struct Node {
  Op op;
  std::vector<NodeId> in;
  Tensor value;
  Tensor grad;                // allocated during backward
  Tensor aux;                 // cached mask / normalization intermediates
  std::vector<int64_t> iaux;  // indices, strides, argmax caches
  BatchNormState* bn = nullptr;
  bool flag = false;  // train mode (BatchNorm) or softplus-diagonal (BatchCholApply)
  bool needs_grad = false;
  const Param* bound = nullptr;
};

// Dynamic computation graph: append-only nodes, topological by construction,
// rebuilt every optimization step. One tape per worker thread; never shared.
class Tape {
 public:
  NodeId constant(Tensor t);
  NodeId leaf(Param& p);  // dedup: binding the same Param twice yields the same node

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId neg(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId tanh(NodeId a);
  NodeId softplus(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId elem_max(NodeId a, NodeId b);

  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId quad_form(NodeId a, NodeId x);          // x^T A x
  NodeId tri_solve(NodeId chol_lower, NodeId b);  // L^{-1} b, b vector or [D,M]

  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId row_sum(NodeId a);  // sum over trailing axes, keeps the first

  // Row-wise log-sum-exp with max subtraction. `mask` (same shape, 0/1)
  // marks available entries; masked-out entries contribute -inf. Empty mask
  // means all available.
  NodeId logsumexp_rows(NodeId a, Tensor mask = {});
  NodeId take_per_row(NodeId a, std::vector<int64_t> idx);
  NodeId take_rows(NodeId a, std::vector<int64_t> idx);

  NodeId slice(NodeId a, int64_t start, int64_t len);  // first axis
  NodeId concat(const std::vector<NodeId>& parts);     // first axis
  NodeId reshape(NodeId a, std::vector<int64_t> shape);

  NodeId add_row_vec(NodeId a, NodeId v);  // v added along the last axis
  NodeId scale_rows(NodeId a, NodeId s);   // row block i scaled by s[i]
  NodeId take_diag(NodeId a);
  NodeId make_diag(NodeId a);

  // 1-D convolution over each row of x [B, Len] with filter bank w [C, W]
  // applied at the given stride; output [B, Tout, C].
  NodeId conv1d(NodeId x, NodeId w, int64_t stride);
  // Max over the menu axis of x [B, T, C]; mask [B, T] marks real menus.
  NodeId max_pool_menus(NodeId x, Tensor mask = {});
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool train);

  // y_b = L_b eps_b with per-row Cholesky factors assembled from diag [B,K]
  // and packed strict-lower [B, K(K-1)/2] entries (row-major, i>j). With
  // softplus_diag the diagonal entries pass through softplus first.
  NodeId batch_chol_apply(NodeId diag, NodeId lower, NodeId eps, bool softplus_diag);

  // Maps unconstrained u in R^{K(K-1)/2} to a correlation Cholesky factor
  // (rows of unit norm, positive diagonal) via tanh partial correlations,
  // and the log-determinant of that map restricted to the strict lower
  // triangle.
  NodeId corr_chol(NodeId u, int64_t k);
  NodeId corr_chol_logdet(NodeId u, int64_t k);

  // Reverse sweep from a scalar root; accumulates gradients into every node
  // with needs_grad reachable from it.
  void backward(NodeId root);

  const Tensor& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(NodeId id) const;
  // Gradient of the last backward() w.r.t. a bound parameter (zeros if the
  // parameter was never bound or backward has not run).
  Tensor grad_of(const Param& p) const;

  size_t num_nodes() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

  // Drops all nodes and bindings; gradient accumulators vanish with them.
  void reset();

 private:
  friend NodeId record(Tape&, const std::string&, const std::vector<NodeId>&, const struct RecordArgs&);
  NodeId push(Node n);
  void check_finite(const Node& n) const;
  const Tensor& v(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, NodeId> bound_;
};

// Structural arguments for the generic recording surface.
struct RecordArgs {
  std::vector<int64_t> ints;  // slice bounds / target shape / stride / indices / K
  Tensor mask;
  BatchNormState* bn = nullptr;
  bool flag = false;
};

// Generic op-kind dispatch (name -> builder). Unknown names are an error.
NodeId record(Tape& tape, const std::string& op_kind, const std::vector<NodeId>& inputs,
              const RecordArgs& args = {});

}  // namespace mixvi
