#include "mixvi/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixvi {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double stable_softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

[[noreturn]] void shape_error(const char* what, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

[[noreturn]] void shape_error(const char* what, const Tensor& a) {
  throw std::invalid_argument(std::string(what) + ": unsupported shape " + a.shape_str());
}

int64_t tri_lower_count(int64_t k) { return k * (k - 1) / 2; }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::Sigmoid: return "sigmoid";
    case Op::ElemMax: return "elem-max";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::QuadForm: return "quad-form";
    case Op::TriSolve: return "tri-solve";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSum: return "row-sum";
    case Op::LogSumExpRows: return "log-sum-exp";
    case Op::TakePerRow: return "take-per-row";
    case Op::TakeRows: return "take-rows";
    case Op::Slice: return "slice";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::AddRowVec: return "add-row-vec";
    case Op::ScaleRows: return "scale-rows";
    case Op::TakeDiag: return "take-diag";
    case Op::MakeDiag: return "make-diag";
    case Op::Conv1d: return "conv1d";
    case Op::MaxPoolMenus: return "max-pool";
    case Op::BatchNorm: return "batch-norm";
    case Op::BatchCholApply: return "batch-chol-apply";
    case Op::CorrChol: return "corr-chol";
    case Op::CorrCholLogDet: return "corr-chol-logdet";
  }
  return "?";
}

void Tape::check_finite(const Node& n) const {
  for (double x : n.value.data) {
    if (!std::isfinite(x))
      throw NonFiniteError(std::string("non-finite value after forward op '") + op_name(n.op) + "'");
  }
}

NodeId Tape::push(Node n) {
  for (NodeId i : n.in) n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(i)].needs_grad;
  check_finite(n);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  return push(std::move(n));
}

NodeId Tape::leaf(Param& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  Node n;
  n.op = Op::Leaf;
  n.value = p.value;
  n.needs_grad = true;
  n.bound = &p;
  NodeId id = push(std::move(n));
  bound_.emplace(&p, id);
  return id;
}

// ---- elementwise binary with size-1 broadcast ----

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  Node n;
  n.op = Op::Add;
  n.in = {a, b};
  if (ta.same_shape(tb)) {
    n.value = ta;
    for (int64_t i = 0; i < tb.size(); ++i) n.value(i) += tb(i);
  } else if (tb.is_scalar()) {
    n.value = ta;
    for (double& x : n.value.data) x += tb(0);
  } else if (ta.is_scalar()) {
    n.value = tb;
    for (double& x : n.value.data) x += ta(0);
  } else {
    shape_error("add", ta, tb);
  }
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  Node n;
  n.op = Op::Sub;
  n.in = {a, b};
  if (ta.same_shape(tb)) {
    n.value = ta;
    for (int64_t i = 0; i < tb.size(); ++i) n.value(i) -= tb(i);
  } else if (tb.is_scalar()) {
    n.value = ta;
    for (double& x : n.value.data) x -= tb(0);
  } else if (ta.is_scalar()) {
    n.value = tb;
    for (double& x : n.value.data) x = ta(0) - x;
  } else {
    shape_error("sub", ta, tb);
  }
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  Node n;
  n.op = Op::Mul;
  n.in = {a, b};
  if (ta.same_shape(tb)) {
    n.value = ta;
    for (int64_t i = 0; i < tb.size(); ++i) n.value(i) *= tb(i);
  } else if (tb.is_scalar()) {
    n.value = ta;
    for (double& x : n.value.data) x *= tb(0);
  } else if (ta.is_scalar()) {
    n.value = tb;
    for (double& x : n.value.data) x *= ta(0);
  } else {
    shape_error("mul", ta, tb);
  }
  return push(std::move(n));
}

NodeId Tape::div(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  Node n;
  n.op = Op::Div;
  n.in = {a, b};
  if (ta.same_shape(tb)) {
    n.value = ta;
    for (int64_t i = 0; i < tb.size(); ++i) n.value(i) /= tb(i);
  } else if (tb.is_scalar()) {
    n.value = ta;
    for (double& x : n.value.data) x /= tb(0);
  } else if (ta.is_scalar()) {
    n.value = tb;
    for (double& x : n.value.data) x = ta(0) / x;
  } else {
    shape_error("div", ta, tb);
  }
  return push(std::move(n));
}

// ---- elementwise unary ----

NodeId Tape::neg(NodeId a) {
  Node n;
  n.op = Op::Neg;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = -x;
  return push(std::move(n));
}

NodeId Tape::exp(NodeId a) {
  Node n;
  n.op = Op::Exp;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = std::exp(x);
  return push(std::move(n));
}

NodeId Tape::log(NodeId a) {
  Node n;
  n.op = Op::Log;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = std::log(x);
  return push(std::move(n));
}

NodeId Tape::sqrt(NodeId a) {
  Node n;
  n.op = Op::Sqrt;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = std::sqrt(x);
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId a) {
  Node n;
  n.op = Op::Tanh;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = std::tanh(x);
  return push(std::move(n));
}

NodeId Tape::softplus(NodeId a) {
  Node n;
  n.op = Op::Softplus;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = stable_softplus(x);
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  Node n;
  n.op = Op::Sigmoid;
  n.in = {a};
  n.value = v(a);
  for (double& x : n.value.data) x = mixvi::sigmoid(x);
  return push(std::move(n));
}

NodeId Tape::elem_max(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  if (!ta.same_shape(tb)) shape_error("elem-max", ta, tb);
  Node n;
  n.op = Op::ElemMax;
  n.in = {a, b};
  n.value = ta;
  for (int64_t i = 0; i < tb.size(); ++i) n.value(i) = std::max(ta(i), tb(i));
  return push(std::move(n));
}

// ---- linear algebra ----

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = v(a);
  const Tensor& tb = v(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) shape_error("matmul", ta, tb);
  Node n;
  n.op = Op::MatMul;
  n.in = {a, b};
  n.value = Tensor({ta.shape[0], tb.shape[1]});
  ConstMatMap A(ta.data.data(), ta.shape[0], ta.shape[1]);
  ConstMatMap B(tb.data.data(), tb.shape[0], tb.shape[1]);
  MatMap C(n.value.data.data(), ta.shape[0], tb.shape[1]);
  C.noalias() = A * B;
  return push(std::move(n));
}

NodeId Tape::transpose(NodeId a) {
  const Tensor& ta = v(a);
  if (ta.rank() != 2) shape_error("transpose", ta);
  Node n;
  n.op = Op::Transpose;
  n.in = {a};
  n.value = Tensor({ta.shape[1], ta.shape[0]});
  for (int64_t r = 0; r < ta.shape[0]; ++r)
    for (int64_t c = 0; c < ta.shape[1]; ++c) n.value(c, r) = ta(r, c);
  return push(std::move(n));
}

NodeId Tape::quad_form(NodeId a, NodeId x) {
  const Tensor& ta = v(a);
  const Tensor& tx = v(x);
  if (ta.rank() != 2 || ta.shape[0] != ta.shape[1] || tx.rank() != 1 || tx.shape[0] != ta.shape[0])
    shape_error("quad-form", ta, tx);
  Node n;
  n.op = Op::QuadForm;
  n.in = {a, x};
  const int64_t d = ta.shape[0];
  double acc = 0.0;
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) acc += tx(i) * ta(i, j) * tx(j);
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

NodeId Tape::tri_solve(NodeId chol_lower, NodeId b) {
  const Tensor& tl = v(chol_lower);
  const Tensor& tb = v(b);
  if (tl.rank() != 2 || tl.shape[0] != tl.shape[1]) shape_error("tri-solve", tl);
  const int64_t d = tl.shape[0];
  const bool vec = tb.rank() == 1;
  const int64_t m = vec ? 1 : tb.shape[1];
  if ((vec && tb.shape[0] != d) || (!vec && (tb.rank() != 2 || tb.shape[0] != d))) shape_error("tri-solve", tl, tb);
  Node n;
  n.op = Op::TriSolve;
  n.in = {chol_lower, b};
  n.value = tb;
  ConstMatMap L(tl.data.data(), d, d);
  MatMap Y(n.value.data.data(), d, m);
  L.triangularView<Eigen::Lower>().solveInPlace(Y);
  return push(std::move(n));
}

// ---- reductions ----

NodeId Tape::sum(NodeId a) {
  Node n;
  n.op = Op::Sum;
  n.in = {a};
  double acc = 0.0;
  for (double x : v(a).data) acc += x;
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  const Tensor& ta = v(a);
  if (ta.size() == 0) shape_error("mean", ta);
  Node n;
  n.op = Op::Mean;
  n.in = {a};
  double acc = 0.0;
  for (double x : ta.data) acc += x;
  n.value = Tensor::scalar(acc / static_cast<double>(ta.size()));
  return push(std::move(n));
}

NodeId Tape::row_sum(NodeId a) {
  const Tensor& ta = v(a);
  if (ta.rank() < 2) shape_error("row-sum", ta);
  const int64_t r = ta.shape[0];
  const int64_t c = ta.cols();
  Node n;
  n.op = Op::RowSum;
  n.in = {a};
  n.value = Tensor({r});
  for (int64_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j) acc += ta(i * c + j);
    n.value(i) = acc;
  }
  return push(std::move(n));
}

NodeId Tape::logsumexp_rows(NodeId a, Tensor mask) {
  const Tensor& ta = v(a);
  if (ta.rank() != 2 && ta.rank() != 1) shape_error("log-sum-exp", ta);
  if (mask.size() > 0 && !mask.same_shape(ta)) shape_error("log-sum-exp mask", ta, mask);
  // A rank-1 input is one row; the result is then a scalar.
  const int64_t r = ta.rank() == 2 ? ta.shape[0] : 1;
  const int64_t c = ta.rank() == 2 ? ta.shape[1] : ta.shape[0];
  Node n;
  n.op = Op::LogSumExpRows;
  n.in = {a};
  n.aux = std::move(mask);
  n.value = Tensor({r});
  const bool masked = n.aux.size() > 0;
  for (int64_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < c; ++j)
      if (!masked || n.aux(i * c + j) != 0.0) mx = std::max(mx, ta(i * c + j));
    if (!std::isfinite(mx))
      throw std::invalid_argument("log-sum-exp: row " + std::to_string(i) + " has no available entries");
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j)
      if (!masked || n.aux(i * c + j) != 0.0) acc += std::exp(ta(i * c + j) - mx);
    n.value(i) = mx + std::log(acc);
  }
  return push(std::move(n));
}

NodeId Tape::take_per_row(NodeId a, std::vector<int64_t> idx) {
  const Tensor& ta = v(a);
  if (ta.rank() != 2 || static_cast<int64_t>(idx.size()) != ta.shape[0]) shape_error("take-per-row", ta);
  Node n;
  n.op = Op::TakePerRow;
  n.in = {a};
  n.value = Tensor({ta.shape[0]});
  for (int64_t i = 0; i < ta.shape[0]; ++i) {
    int64_t j = idx[static_cast<size_t>(i)];
    if (j < 0 || j >= ta.shape[1])
      throw std::invalid_argument("take-per-row: index " + std::to_string(j) + " out of range for " + ta.shape_str());
    n.value(i) = ta(i, j);
  }
  n.iaux = std::move(idx);
  return push(std::move(n));
}

NodeId Tape::take_rows(NodeId a, std::vector<int64_t> idx) {
  const Tensor& ta = v(a);
  if (ta.rank() < 2) shape_error("take-rows", ta);
  const int64_t c = ta.cols();
  std::vector<int64_t> shape = ta.shape;
  shape[0] = static_cast<int64_t>(idx.size());
  Node n;
  n.op = Op::TakeRows;
  n.in = {a};
  n.value = Tensor(std::move(shape));
  for (size_t i = 0; i < idx.size(); ++i) {
    int64_t r = idx[i];
    if (r < 0 || r >= ta.shape[0])
      throw std::invalid_argument("take-rows: row " + std::to_string(r) + " out of range for " + ta.shape_str());
    std::copy_n(ta.data.begin() + static_cast<size_t>(r * c), static_cast<size_t>(c),
                n.value.data.begin() + static_cast<size_t>(static_cast<int64_t>(i) * c));
  }
  n.iaux = std::move(idx);
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, int64_t start, int64_t len) {
  const Tensor& ta = v(a);
  if (ta.rank() < 1 || start < 0 || len < 0 || start + len > ta.shape[0])
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                ") out of bounds for " + ta.shape_str());
  const int64_t c = ta.rank() >= 2 ? ta.cols() : 1;
  std::vector<int64_t> shape = ta.shape;
  shape[0] = len;
  Node n;
  n.op = Op::Slice;
  n.in = {a};
  n.iaux = {start, len};
  n.value = Tensor(std::move(shape));
  std::copy_n(ta.data.begin() + static_cast<size_t>(start * c), static_cast<size_t>(len * c), n.value.data.begin());
  return push(std::move(n));
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<int64_t> shape = v(parts[0]).shape;
  int64_t rows = 0;
  for (NodeId p : parts) {
    const Tensor& tp = v(p);
    if (tp.rank() != static_cast<int>(shape.size())) shape_error("concat", v(parts[0]), tp);
    for (size_t d = 1; d < shape.size(); ++d)
      if (tp.shape[d] != shape[d]) shape_error("concat", v(parts[0]), tp);
    rows += tp.shape[0];
  }
  shape[0] = rows;
  Node n;
  n.op = Op::Concat;
  n.in = parts;
  n.value = Tensor(std::move(shape));
  size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& tp = v(p);
    std::copy(tp.data.begin(), tp.data.end(), n.value.data.begin() + static_cast<ptrdiff_t>(off));
    off += tp.data.size();
  }
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::vector<int64_t> shape) {
  const Tensor& ta = v(a);
  if (Tensor::numel(shape) != ta.size())
    throw std::invalid_argument("reshape: cannot view " + ta.shape_str() + " as " + Tensor::shape_str(shape));
  Node n;
  n.op = Op::Reshape;
  n.in = {a};
  n.value = Tensor(std::move(shape), ta.data);
  return push(std::move(n));
}

NodeId Tape::add_row_vec(NodeId a, NodeId vn) {
  const Tensor& ta = v(a);
  const Tensor& tv = v(vn);
  if (ta.rank() < 2 || tv.rank() != 1 || tv.shape[0] != ta.shape.back()) shape_error("add-row-vec", ta, tv);
  const int64_t c = ta.shape.back();
  Node n;
  n.op = Op::AddRowVec;
  n.in = {a, vn};
  n.value = ta;
  for (int64_t i = 0; i < ta.size(); ++i) n.value(i) += tv(i % c);
  return push(std::move(n));
}

NodeId Tape::scale_rows(NodeId a, NodeId s) {
  const Tensor& ta = v(a);
  const Tensor& ts = v(s);
  if (ta.rank() < 2 || ts.rank() != 1 || ts.shape[0] != ta.shape[0]) shape_error("scale-rows", ta, ts);
  const int64_t c = ta.cols();
  Node n;
  n.op = Op::ScaleRows;
  n.in = {a, s};
  n.value = ta;
  for (int64_t r = 0; r < ta.shape[0]; ++r)
    for (int64_t j = 0; j < c; ++j) n.value(r * c + j) *= ts(r);
  return push(std::move(n));
}

NodeId Tape::take_diag(NodeId a) {
  const Tensor& ta = v(a);
  if (ta.rank() != 2 || ta.shape[0] != ta.shape[1]) shape_error("take-diag", ta);
  Node n;
  n.op = Op::TakeDiag;
  n.in = {a};
  n.value = Tensor({ta.shape[0]});
  for (int64_t i = 0; i < ta.shape[0]; ++i) n.value(i) = ta(i, i);
  return push(std::move(n));
}

NodeId Tape::make_diag(NodeId a) {
  const Tensor& ta = v(a);
  if (ta.rank() != 1) shape_error("make-diag", ta);
  Node n;
  n.op = Op::MakeDiag;
  n.in = {a};
  n.value = Tensor({ta.shape[0], ta.shape[0]});
  for (int64_t i = 0; i < ta.shape[0]; ++i) n.value(i, i) = ta(i);
  return push(std::move(n));
}

NodeId Tape::conv1d(NodeId x, NodeId w, int64_t stride) {
  const Tensor& tx = v(x);
  const Tensor& tw = v(w);
  if (tx.rank() != 2 || tw.rank() != 2 || stride < 1) shape_error("conv1d", tx, tw);
  const int64_t b = tx.shape[0];
  const int64_t len = tx.shape[1];
  const int64_t c = tw.shape[0];
  const int64_t width = tw.shape[1];
  if (width > len) shape_error("conv1d", tx, tw);
  const int64_t tout = (len - width) / stride + 1;
  Node n;
  n.op = Op::Conv1d;
  n.in = {x, w};
  n.iaux = {stride};
  n.value = Tensor({b, tout, c});
  if (stride == width && len == tout * width) {
    // Non-overlapping windows collapse to one GEMM.
    ConstMatMap X(tx.data.data(), b * tout, width);
    ConstMatMap W(tw.data.data(), c, width);
    MatMap Y(n.value.data.data(), b * tout, c);
    Y.noalias() = X * W.transpose();
  } else {
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t t = 0; t < tout; ++t)
        for (int64_t ci = 0; ci < c; ++ci) {
          double acc = 0.0;
          for (int64_t k = 0; k < width; ++k) acc += tx(bi, t * stride + k) * tw(ci, k);
          n.value.data[static_cast<size_t>((bi * tout + t) * c + ci)] = acc;
        }
  }
  return push(std::move(n));
}

NodeId Tape::max_pool_menus(NodeId x, Tensor mask) {
  const Tensor& tx = v(x);
  if (tx.rank() != 3) shape_error("max-pool", tx);
  const int64_t b = tx.shape[0], t = tx.shape[1], c = tx.shape[2];
  if (mask.size() > 0 && (mask.rank() != 2 || mask.shape[0] != b || mask.shape[1] != t))
    shape_error("max-pool mask", tx, mask);
  Node n;
  n.op = Op::MaxPoolMenus;
  n.in = {x};
  n.aux = std::move(mask);
  n.value = Tensor({b, c});
  n.iaux.assign(static_cast<size_t>(b * c), -1);
  const bool masked = n.aux.size() > 0;
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t ci = 0; ci < c; ++ci) {
      double best = -std::numeric_limits<double>::infinity();
      int64_t arg = -1;
      for (int64_t ti = 0; ti < t; ++ti) {
        if (masked && n.aux(bi, ti) == 0.0) continue;
        double val = tx.data[static_cast<size_t>((bi * t + ti) * c + ci)];
        if (val > best) {
          best = val;
          arg = ti;
        }
      }
      if (arg < 0) throw std::invalid_argument("max-pool: batch row " + std::to_string(bi) + " fully masked");
      n.value(bi, ci) = best;
      n.iaux[static_cast<size_t>(bi * c + ci)] = arg;
    }
  }
  return push(std::move(n));
}

NodeId Tape::batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool train) {
  const Tensor& tx = v(x);
  const Tensor& tg = v(gamma);
  const Tensor& tb = v(beta);
  if (tx.rank() != 2) shape_error("batch-norm", tx);
  const int64_t b = tx.shape[0], c = tx.shape[1];
  if (tg.rank() != 1 || tg.shape[0] != c || !tg.same_shape(tb)) shape_error("batch-norm", tx, tg);
  if (!state.initialized) {
    state.running_mean = Tensor({c});
    state.running_var = Tensor::ones({c});
    state.initialized = true;
  }
  Node n;
  n.op = Op::BatchNorm;
  n.in = {x, gamma, beta};
  n.bn = &state;
  n.flag = train;
  n.value = Tensor({b, c});
  // aux rows 0..b-1: xhat, row b: inverse stddev per feature
  n.aux = Tensor({b + 1, c});
  for (int64_t j = 0; j < c; ++j) {
    double mu, var;
    if (train) {
      mu = 0.0;
      for (int64_t i = 0; i < b; ++i) mu += tx(i, j);
      mu /= static_cast<double>(b);
      var = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        double d = tx(i, j) - mu;
        var += d * d;
      }
      var /= static_cast<double>(b);
      state.running_mean(j) = (1.0 - state.momentum) * state.running_mean(j) + state.momentum * mu;
      state.running_var(j) = (1.0 - state.momentum) * state.running_var(j) + state.momentum * var;
    } else {
      mu = state.running_mean(j);
      var = state.running_var(j);
    }
    const double invstd = 1.0 / std::sqrt(var + state.eps);
    n.aux(b, j) = invstd;
    for (int64_t i = 0; i < b; ++i) {
      double xhat = (tx(i, j) - mu) * invstd;
      n.aux(i, j) = xhat;
      n.value(i, j) = tg(j) * xhat + tb(j);
    }
  }
  return push(std::move(n));
}

NodeId Tape::batch_chol_apply(NodeId diag, NodeId lower, NodeId eps, bool softplus_diag) {
  const Tensor& td = v(diag);
  const Tensor& tl = v(lower);
  const Tensor& te = v(eps);
  if (td.rank() != 2 || !td.same_shape(te)) shape_error("batch-chol-apply", td, te);
  const int64_t b = td.shape[0], k = td.shape[1];
  if (tl.rank() != 2 || tl.shape[0] != b || tl.shape[1] != tri_lower_count(k)) shape_error("batch-chol-apply", td, tl);
  Node n;
  n.op = Op::BatchCholApply;
  n.in = {diag, lower, eps};
  n.flag = softplus_diag;
  n.value = Tensor({b, k});
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t i = 0; i < k; ++i) {
      double dii = softplus_diag ? stable_softplus(td(bi, i)) : td(bi, i);
      double acc = dii * te(bi, i);
      const int64_t base = i * (i - 1) / 2;
      for (int64_t j = 0; j < i; ++j) acc += tl(bi, base + j) * te(bi, j);
      n.value(bi, i) = acc;
    }
  }
  return push(std::move(n));
}

namespace {

// Shared forward for the correlation-Cholesky transform: z = tanh(u) are
// partial correlations; row i of L is filled left to right with the
// remaining norm pushed into later entries.  Returns z and the sqrt-prefix
// values s_ij (prefix products of sqrt(1 - z^2) within the row).
struct CorrCholCache {
  std::vector<double> z, s;
};

CorrCholCache corr_chol_cache(const Tensor& u, int64_t k) {
  const int64_t p = tri_lower_count(k);
  if (u.size() != p)
    throw std::invalid_argument("corr-chol: expected " + std::to_string(p) + " entries for K=" + std::to_string(k) +
                                ", got " + u.shape_str());
  CorrCholCache cc;
  cc.z.resize(static_cast<size_t>(p));
  cc.s.resize(static_cast<size_t>(p));
  int64_t idx = 0;
  for (int64_t i = 1; i < k; ++i) {
    double rem = 1.0;
    for (int64_t j = 0; j < i; ++j, ++idx) {
      double z = std::tanh(u(idx));
      cc.z[static_cast<size_t>(idx)] = z;
      cc.s[static_cast<size_t>(idx)] = std::sqrt(rem);
      rem *= (1.0 - z * z);
    }
  }
  return cc;
}

}  // namespace

NodeId Tape::corr_chol(NodeId un, int64_t k) {
  const Tensor& u = v(un);
  CorrCholCache cc = corr_chol_cache(u, k);
  Node n;
  n.op = Op::CorrChol;
  n.in = {un};
  n.iaux = {k};
  n.value = Tensor({k, k});
  n.aux = Tensor({2, std::max<int64_t>(u.size(), 1)});
  for (int64_t t = 0; t < u.size(); ++t) {
    n.aux(0, t) = cc.z[static_cast<size_t>(t)];
    n.aux(1, t) = cc.s[static_cast<size_t>(t)];
  }
  int64_t idx = 0;
  for (int64_t i = 0; i < k; ++i) {
    double rem = 1.0;
    for (int64_t j = 0; j < i; ++j, ++idx) {
      const double z = cc.z[static_cast<size_t>(idx)];
      n.value(i, j) = z * cc.s[static_cast<size_t>(idx)];
      rem *= (1.0 - z * z);
    }
    n.value(i, i) = std::sqrt(rem);
  }
  return push(std::move(n));
}

NodeId Tape::corr_chol_logdet(NodeId un, int64_t k) {
  const Tensor& u = v(un);
  CorrCholCache cc = corr_chol_cache(u, k);
  Node n;
  n.op = Op::CorrCholLogDet;
  n.in = {un};
  n.iaux = {k};
  n.aux = Tensor({1, std::max<int64_t>(u.size(), 1)});
  for (int64_t t = 0; t < u.size(); ++t) n.aux(0, t) = cc.z[static_cast<size_t>(t)];
  // d L_ij / d u_ij telescopes: log|det J| = sum over i>j of
  // (1 + (i-1-j)/2) * log(1 - z_ij^2).
  double acc = 0.0;
  int64_t idx = 0;
  for (int64_t i = 1; i < k; ++i)
    for (int64_t j = 0; j < i; ++j, ++idx) {
      const double z = cc.z[static_cast<size_t>(idx)];
      acc += (1.0 + 0.5 * static_cast<double>(i - 1 - j)) * std::log1p(-z * z);
    }
  n.value = Tensor::scalar(acc);
  return push(std::move(n));
}

// ---- backward ----

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.size() == 0)
    throw std::logic_error(std::string("grad: no gradient on node of op '") + op_name(n.op) + "'");
  return n.grad;
}

Tensor Tape::grad_of(const Param& p) const {
  auto it = bound_.find(&p);
  if (it == bound_.end() || nodes_[static_cast<size_t>(it->second)].grad.size() == 0)
    return Tensor::zeros(p.value.shape);
  return nodes_[static_cast<size_t>(it->second)].grad;
}

void Tape::reset() {
  nodes_.clear();
  bound_.clear();
}

void Tape::backward(NodeId root) {
  Node& rn = nodes_[static_cast<size_t>(root)];
  if (!rn.value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar, got " + rn.value.shape_str());
  // Mark nodes reachable from the root that need gradients.
  std::vector<char> reach(nodes_.size(), 0);
  std::vector<NodeId> stack = {root};
  reach[static_cast<size_t>(root)] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId i : nodes_[static_cast<size_t>(id)].in) {
      if (!reach[static_cast<size_t>(i)] && nodes_[static_cast<size_t>(i)].needs_grad) {
        reach[static_cast<size_t>(i)] = 1;
        stack.push_back(i);
      }
    }
  }
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (reach[i]) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
  rn.grad = Tensor::ones({1});

  for (int64_t id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!reach[static_cast<size_t>(id)] || n.op == Op::Leaf) continue;
    const Tensor& g = n.grad;
    auto gin = [&](int slot) -> Tensor* {
      Node& src = nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])];
      return src.needs_grad ? &src.grad : nullptr;
    };
    auto vin = [&](int slot) -> const Tensor& { return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])].value; };

    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        for (int s = 0; s < 2; ++s)
          if (Tensor* d = gin(s)) {
            if (d->size() == g.size())
              for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i);
            else
              for (int64_t i = 0; i < g.size(); ++i) (*d)(0) += g(i);
          }
        break;
      }
      case Op::Sub: {
        if (Tensor* d = gin(0)) {
          if (d->size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i);
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) += g(i);
        }
        if (Tensor* d = gin(1)) {
          if (d->size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) -= g(i);
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) -= g(i);
        }
        break;
      }
      case Op::Mul: {
        const Tensor& a = vin(0);
        const Tensor& b = vin(1);
        if (Tensor* d = gin(0)) {
          if (a.size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * (b.size() == g.size() ? b(i) : b(0));
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) += g(i) * b(i);
        }
        if (Tensor* d = gin(1)) {
          if (b.size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * (a.size() == g.size() ? a(i) : a(0));
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) += g(i) * a(i);
        }
        break;
      }
      case Op::Div: {
        const Tensor& a = vin(0);
        const Tensor& b = vin(1);
        auto av = [&](int64_t i) { return a.size() == g.size() ? a(i) : a(0); };
        auto bv = [&](int64_t i) { return b.size() == g.size() ? b(i) : b(0); };
        if (Tensor* d = gin(0)) {
          if (a.size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) / bv(i);
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) += g(i) / bv(i);
        }
        if (Tensor* d = gin(1)) {
          if (b.size() == g.size())
            for (int64_t i = 0; i < g.size(); ++i) (*d)(i) -= g(i) * av(i) / (bv(i) * bv(i));
          else
            for (int64_t i = 0; i < g.size(); ++i) (*d)(0) -= g(i) * av(i) / (bv(i) * bv(i));
        }
        break;
      }
      case Op::Neg: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) -= g(i);
        break;
      }
      case Op::Exp: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * n.value(i);
        break;
      }
      case Op::Log: {
        const Tensor& a = vin(0);
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) / a(i);
        break;
      }
      case Op::Sqrt: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * 0.5 / n.value(i);
        break;
      }
      case Op::Tanh: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * (1.0 - n.value(i) * n.value(i));
        break;
      }
      case Op::Softplus: {
        const Tensor& a = vin(0);
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * sigmoid(a(i));
        break;
      }
      case Op::Sigmoid: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i) * n.value(i) * (1.0 - n.value(i));
        break;
      }
      case Op::ElemMax: {
        const Tensor& a = vin(0);
        const Tensor& b = vin(1);
        Tensor* da = gin(0);
        Tensor* db = gin(1);
        for (int64_t i = 0; i < g.size(); ++i) {
          if (a(i) >= b(i)) {
            if (da) (*da)(i) += g(i);
          } else if (db) {
            (*db)(i) += g(i);
          }
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& a = vin(0);
        const Tensor& b = vin(1);
        ConstMatMap A(a.data.data(), a.shape[0], a.shape[1]);
        ConstMatMap B(b.data.data(), b.shape[0], b.shape[1]);
        ConstMatMap G(g.data.data(), a.shape[0], b.shape[1]);
        if (Tensor* d = gin(0)) {
          MatMap D(d->data.data(), a.shape[0], a.shape[1]);
          D.noalias() += G * B.transpose();
        }
        if (Tensor* d = gin(1)) {
          MatMap D(d->data.data(), b.shape[0], b.shape[1]);
          D.noalias() += A.transpose() * G;
        }
        break;
      }
      case Op::Transpose: {
        if (Tensor* d = gin(0)) {
          const int64_t r = n.value.shape[0], c = n.value.shape[1];
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) (*d)(j, i) += g(i, j);
        }
        break;
      }
      case Op::QuadForm: {
        const Tensor& a = vin(0);
        const Tensor& x = vin(1);
        const int64_t d0 = a.shape[0];
        const double gs = g(0);
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < d0; ++i)
            for (int64_t j = 0; j < d0; ++j) (*d)(i, j) += gs * x(i) * x(j);
        if (Tensor* d = gin(1))
          for (int64_t i = 0; i < d0; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < d0; ++j) acc += (a(i, j) + a(j, i)) * x(j);
            (*d)(i) += gs * acc;
          }
        break;
      }
      case Op::TriSolve: {
        const Tensor& l = vin(0);
        const int64_t d0 = l.shape[0];
        const int64_t m = n.value.rank() == 1 ? 1 : n.value.shape[1];
        ConstMatMap L(l.data.data(), d0, d0);
        ConstMatMap Y(n.value.data.data(), d0, m);
        ConstMatMap G(g.data.data(), d0, m);
        // db = L^{-T} g ; dL = -db y^T restricted to the lower triangle
        Eigen::MatrixXd db = L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd(G));
        if (Tensor* d = gin(1)) {
          MatMap D(d->data.data(), d0, m);
          D.noalias() += db;
        }
        if (Tensor* d = gin(0)) {
          Eigen::MatrixXd dl = -db * Y.transpose();
          for (int64_t i = 0; i < d0; ++i)
            for (int64_t j = 0; j <= i; ++j) (*d)(i, j) += dl(i, j);
        }
        break;
      }
      case Op::Sum: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < d->size(); ++i) (*d)(i) += g(0);
        break;
      }
      case Op::Mean: {
        if (Tensor* d = gin(0)) {
          const double s = g(0) / static_cast<double>(d->size());
          for (int64_t i = 0; i < d->size(); ++i) (*d)(i) += s;
        }
        break;
      }
      case Op::RowSum: {
        if (Tensor* d = gin(0)) {
          const int64_t r = d->shape[0];
          const int64_t c = d->cols();
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) (*d)(i * c + j) += g(i);
        }
        break;
      }
      case Op::LogSumExpRows: {
        if (Tensor* d = gin(0)) {
          const Tensor& a = vin(0);
          const int64_t r = n.value.shape[0];
          const int64_t c = a.size() / r;
          const bool masked = n.aux.size() > 0;
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) {
              if (masked && n.aux(i * c + j) == 0.0) continue;
              (*d)(i * c + j) += g(i) * std::exp(a(i * c + j) - n.value(i));
            }
        }
        break;
      }
      case Op::TakePerRow: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < n.value.size(); ++i) (*d)(i, n.iaux[static_cast<size_t>(i)]) += g(i);
        break;
      }
      case Op::TakeRows: {
        if (Tensor* d = gin(0)) {
          const int64_t c = d->cols();
          for (size_t i = 0; i < n.iaux.size(); ++i) {
            const int64_t r = n.iaux[i];
            for (int64_t j = 0; j < c; ++j) (*d)(r * c + j) += g(static_cast<int64_t>(i) * c + j);
          }
        }
        break;
      }
      case Op::Slice: {
        if (Tensor* d = gin(0)) {
          const int64_t c = d->rank() >= 2 ? d->cols() : 1;
          const int64_t off = n.iaux[0] * c;
          for (int64_t i = 0; i < g.size(); ++i) (*d)(off + i) += g(i);
        }
        break;
      }
      case Op::Concat: {
        int64_t off = 0;
        for (size_t s = 0; s < n.in.size(); ++s) {
          Node& src = nodes_[static_cast<size_t>(n.in[s])];
          if (src.needs_grad)
            for (int64_t i = 0; i < src.value.size(); ++i) src.grad(i) += g(off + i);
          off += src.value.size();
        }
        break;
      }
      case Op::Reshape: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i);
        break;
      }
      case Op::AddRowVec: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i) += g(i);
        if (Tensor* d = gin(1)) {
          const int64_t c = d->shape[0];
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i % c) += g(i);
        }
        break;
      }
      case Op::ScaleRows: {
        const Tensor& a = vin(0);
        const Tensor& s = vin(1);
        const int64_t r = a.shape[0];
        const int64_t c = a.cols();
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) (*d)(i * c + j) += g(i * c + j) * s(i);
        if (Tensor* d = gin(1))
          for (int64_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < c; ++j) acc += g(i * c + j) * a(i * c + j);
            (*d)(i) += acc;
          }
        break;
      }
      case Op::TakeDiag: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < g.size(); ++i) (*d)(i, i) += g(i);
        break;
      }
      case Op::MakeDiag: {
        if (Tensor* d = gin(0))
          for (int64_t i = 0; i < d->size(); ++i) (*d)(i) += g(i, i);
        break;
      }
      case Op::Conv1d: {
        const Tensor& x = vin(0);
        const Tensor& w = vin(1);
        const int64_t b = x.shape[0];
        const int64_t c = w.shape[0], width = w.shape[1];
        const int64_t stride = n.iaux[0];
        const int64_t tout = n.value.shape[1];
        Tensor* dx = gin(0);
        Tensor* dw = gin(1);
        if (stride == width && x.shape[1] == tout * width) {
          ConstMatMap X(x.data.data(), b * tout, width);
          ConstMatMap W(w.data.data(), c, width);
          ConstMatMap G(g.data.data(), b * tout, c);
          if (dx) {
            MatMap D(dx->data.data(), b * tout, width);
            D.noalias() += G * W;
          }
          if (dw) {
            MatMap D(dw->data.data(), c, width);
            D.noalias() += G.transpose() * X;
          }
        } else {
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t t = 0; t < tout; ++t)
              for (int64_t ci = 0; ci < c; ++ci) {
                const double gv = g.data[static_cast<size_t>((bi * tout + t) * c + ci)];
                for (int64_t k = 0; k < width; ++k) {
                  if (dx) (*dx)(bi, t * stride + k) += gv * w(ci, k);
                  if (dw) (*dw)(ci, k) += gv * x(bi, t * stride + k);
                }
              }
        }
        break;
      }
      case Op::MaxPoolMenus: {
        if (Tensor* d = gin(0)) {
          const int64_t b = n.value.shape[0], c = n.value.shape[1];
          const int64_t t = d->shape[1];
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t ci = 0; ci < c; ++ci) {
              const int64_t arg = n.iaux[static_cast<size_t>(bi * c + ci)];
              d->data[static_cast<size_t>((bi * t + arg) * c + ci)] += g(bi, ci);
            }
        }
        break;
      }
      case Op::BatchNorm: {
        const Tensor& gam = vin(1);
        const int64_t b = n.value.shape[0], c = n.value.shape[1];
        Tensor* dx = gin(0);
        Tensor* dg = gin(1);
        Tensor* dbta = gin(2);
        for (int64_t j = 0; j < c; ++j) {
          const double invstd = n.aux(b, j);
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < b; ++i) {
            sum_g += g(i, j);
            sum_gx += g(i, j) * n.aux(i, j);
          }
          if (dg) (*dg)(j) += sum_gx;
          if (dbta) (*dbta)(j) += sum_g;
          if (dx) {
            if (n.flag) {
              const double bn = static_cast<double>(b);
              for (int64_t i = 0; i < b; ++i)
                (*dx)(i, j) += gam(j) * invstd / bn * (bn * g(i, j) - sum_g - n.aux(i, j) * sum_gx);
            } else {
              for (int64_t i = 0; i < b; ++i) (*dx)(i, j) += gam(j) * invstd * g(i, j);
            }
          }
        }
        break;
      }
      case Op::BatchCholApply: {
        const Tensor& td = vin(0);
        const Tensor& tl = vin(1);
        const Tensor& te = vin(2);
        const int64_t b = td.shape[0], k = td.shape[1];
        Tensor* dd = gin(0);
        Tensor* dl = gin(1);
        Tensor* de = gin(2);
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t i = 0; i < k; ++i) {
            const double gv = g(bi, i);
            if (gv == 0.0) continue;
            const int64_t base = i * (i - 1) / 2;
            if (dd) {
              double der = n.flag ? sigmoid(td(bi, i)) : 1.0;
              (*dd)(bi, i) += gv * te(bi, i) * der;
            }
            if (de) {
              double dii = n.flag ? stable_softplus(td(bi, i)) : td(bi, i);
              (*de)(bi, i) += gv * dii;
              for (int64_t j = 0; j < i; ++j) (*de)(bi, j) += gv * tl(bi, base + j);
            }
            if (dl)
              for (int64_t j = 0; j < i; ++j) (*dl)(bi, base + j) += gv * te(bi, j);
          }
        break;
      }
      case Op::CorrChol: {
        if (Tensor* d = gin(0)) {
          const int64_t k = n.iaux[0];
          int64_t idx = 0;
          for (int64_t i = 1; i < k; ++i) {
            const int64_t row_base = idx;
            // suffix[j] = sum over m>j in this row (incl. diagonal) of g_im * L_im
            double suffix = g(i, i) * n.value(i, i);
            for (int64_t j = i - 1; j >= 0; --j) {
              const double z = n.aux(0, row_base + j);
              const double s = n.aux(1, row_base + j);
              const double w = 1.0 - z * z;
              const double dz = g(i, j) * s - (w > 0.0 ? z / w : 0.0) * suffix;
              (*d)(row_base + j) += dz * w;
              suffix += g(i, j) * n.value(i, j);
            }
            idx += i;
          }
        }
        break;
      }
      case Op::CorrCholLogDet: {
        if (Tensor* d = gin(0)) {
          const int64_t k = n.iaux[0];
          const double gs = g(0);
          int64_t idx = 0;
          for (int64_t i = 1; i < k; ++i)
            for (int64_t j = 0; j < i; ++j, ++idx) {
              const double z = n.aux(0, idx);
              (*d)(idx) += gs * (-z * (2.0 + static_cast<double>(i - 1 - j)));
            }
        }
        break;
      }
    }
  }
}

// ---- generic recording surface ----

NodeId record(Tape& tape, const std::string& op_kind, const std::vector<NodeId>& inputs, const RecordArgs& args) {
  auto need = [&](size_t k) {
    if (inputs.size() != k)
      throw std::invalid_argument("record(" + op_kind + "): expected " + std::to_string(k) + " inputs, got " +
                                  std::to_string(inputs.size()));
  };
  if (op_kind == "add") { need(2); return tape.add(inputs[0], inputs[1]); }
  if (op_kind == "sub") { need(2); return tape.sub(inputs[0], inputs[1]); }
  if (op_kind == "mul") { need(2); return tape.mul(inputs[0], inputs[1]); }
  if (op_kind == "div") { need(2); return tape.div(inputs[0], inputs[1]); }
  if (op_kind == "matmul") { need(2); return tape.matmul(inputs[0], inputs[1]); }
  if (op_kind == "sum") { need(1); return tape.sum(inputs[0]); }
  if (op_kind == "mean") { need(1); return tape.mean(inputs[0]); }
  if (op_kind == "exp") { need(1); return tape.exp(inputs[0]); }
  if (op_kind == "log") { need(1); return tape.log(inputs[0]); }
  if (op_kind == "tanh") { need(1); return tape.tanh(inputs[0]); }
  if (op_kind == "softplus") { need(1); return tape.softplus(inputs[0]); }
  if (op_kind == "log-sum-exp") { need(1); return tape.logsumexp_rows(inputs[0], args.mask); }
  if (op_kind == "slice") { need(1); return tape.slice(inputs[0], args.ints.at(0), args.ints.at(1)); }
  if (op_kind == "concat") { return tape.concat(inputs); }
  if (op_kind == "reshape") { need(1); return tape.reshape(inputs[0], args.ints); }
  if (op_kind == "conv1d") { need(2); return tape.conv1d(inputs[0], inputs[1], args.ints.at(0)); }
  if (op_kind == "max-pool") { need(1); return tape.max_pool_menus(inputs[0], args.mask); }
  if (op_kind == "batch-norm") {
    need(3);
    if (!args.bn) throw std::invalid_argument("record(batch-norm): missing state");
    return tape.batch_norm(inputs[0], inputs[1], inputs[2], *args.bn, args.flag);
  }
  if (op_kind == "quad-form") { need(2); return tape.quad_form(inputs[0], inputs[1]); }
  if (op_kind == "elem-max") { need(2); return tape.elem_max(inputs[0], inputs[1]); }
  throw std::invalid_argument("record: unknown op-kind '" + op_kind + "'");
}

}  // namespace mixvi
