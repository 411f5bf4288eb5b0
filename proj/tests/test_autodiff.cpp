#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "mixvi/gradcheck.hpp"
#include "mixvi/rng.hpp"
#include "mixvi/tape.hpp"

using namespace mixvi;

namespace {

Tensor random_tensor(CounterRng& rng, std::vector<int64_t> shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = lo + (hi - lo) * rng.uniform();
  return t;
}

Tensor random_lower(CounterRng& rng, int64_t d) {
  Tensor t({d, d});
  for (int64_t i = 0; i < d; ++i) {
    for (int64_t j = 0; j < i; ++j) t(i, j) = -1.0 + 2.0 * rng.uniform();
    t(i, i) = 0.5 + rng.uniform();  // well-conditioned diagonal
  }
  return t;
}

}  // namespace

TEST_CASE("square function: forward and backward") {
  Param x("x", Tensor::scalar(3.0));
  Tape tape;
  NodeId xn = tape.leaf(x);
  NodeId y = record(tape, "mul", {xn, xn});
  CHECK(tape.val(y)(0) == doctest::Approx(9.0));
  tape.backward(y);
  CHECK(tape.grad_of(x)(0) == doctest::Approx(6.0));
}

TEST_CASE("masked log-sum-exp of equal utilities") {
  Param v("v", Tensor::zeros({5}));
  Tape tape;
  RecordArgs args;
  args.mask = Tensor::ones({5});
  NodeId out = record(tape, "log-sum-exp", {tape.leaf(v)}, args);
  CHECK(tape.val(out)(0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  tape.backward(out);
  Tensor g = tape.grad_of(v);
  for (int64_t i = 0; i < 5; ++i) CHECK(g(i) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("masked log-sum-exp ignores unavailable entries") {
  Param v("v", Tensor::vec({100.0, 0.0, 0.0}));
  Tape tape;
  Tensor mask = Tensor::vec({0.0, 1.0, 1.0});
  NodeId out = tape.logsumexp_rows(tape.leaf(v), mask);
  CHECK(tape.val(out)(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  tape.backward(out);
  CHECK(tape.grad_of(v)(0) == 0.0);
}

TEST_CASE("matmul gradient matches finite differences") {
  CounterRng rng(7, 0);
  Param a("a", random_tensor(rng, {3, 4}));
  Param b("b", random_tensor(rng, {4, 2}));
  auto build = [&](Tape& t) {
    NodeId m = t.matmul(t.leaf(a), t.leaf(b));
    // weight the entries so the scalar reduction is not symmetric
    Tensor w({3, 2});
    for (int64_t i = 0; i < w.size(); ++i) w(i) = 0.3 + 0.1 * static_cast<double>(i);
    return t.sum(t.mul(m, t.constant(w)));
  };
  auto report = gradcheck(build, {&a, &b}, 1e-6);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("backward of sum is ones") {
  Param x("x", Tensor::vec({1.0, -2.0, 0.5, 3.0, 4.0}));
  Tape tape;
  NodeId root = tape.sum(tape.leaf(x));
  tape.backward(root);
  Tensor g = tape.grad_of(x);
  for (int64_t i = 0; i < 5; ++i) CHECK(g(i) == 1.0);
}

TEST_CASE("softplus gradient at zero is one half") {
  Param x("x", Tensor::scalar(0.0));
  Tape tape;
  NodeId root = tape.softplus(tape.leaf(x));
  tape.backward(root);
  CHECK(tape.grad_of(x)(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("composite MNL log-probability gradient matches finite differences") {
  CounterRng rng(11, 0);
  const int64_t j = 4, l = 2, k = 3;
  Tensor xf = random_tensor(rng, {j, l}, 0.0, 1.0);
  Tensor xr = random_tensor(rng, {j, k}, 0.0, 1.0);
  Tensor mask = Tensor::ones({j});
  Param alpha("alpha", random_tensor(rng, {l}));
  Param beta("beta", random_tensor(rng, {k}));
  auto build = [&](Tape& t) {
    NodeId vf = t.reshape(t.matmul(t.constant(xf), t.reshape(t.leaf(alpha), {l, 1})), {j});
    NodeId vr = t.reshape(t.matmul(t.constant(xr), t.reshape(t.leaf(beta), {k, 1})), {j});
    NodeId v = t.add(vf, vr);
    NodeId lse = t.logsumexp_rows(v, mask);
    NodeId chosen = t.slice(v, 2, 1);
    return t.sub(t.sum(chosen), t.sum(lse));
  };
  auto report = gradcheck(build, {&alpha, &beta}, 1e-6);
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("gradcheck of x squared is tight") {
  Param x("x", Tensor::scalar(3.0));
  auto build = [&](Tape& t) {
    NodeId xn = t.leaf(x);
    return t.mul(xn, xn);
  };
  auto report = gradcheck(build, {&x}, 1e-6);
  CHECK(report.max_rel_err <= 1e-8);
}

TEST_CASE("gradcheck rejects non-deterministic functions") {
  Param x("x", Tensor::scalar(1.0));
  int calls = 0;
  auto build = [&](Tape& t) {
    ++calls;
    return t.add(t.leaf(x), t.constant(Tensor::scalar(static_cast<double>(calls))));
  };
  CHECK_THROWS_AS(gradcheck(build, {&x}, 1e-6), std::invalid_argument);
}

TEST_CASE("every supported op agrees with finite differences on random shapes") {
  // 100 randomized trials cycling through the op set; each builds a scalar
  // composite and checks the tape gradient at 1e-5.
  for (int trial = 0; trial < 100; ++trial) {
    CounterRng rng(1000 + trial, 0);
    const int64_t r = 2 + rng.uniform_int(4);  // 2..5
    const int64_t c = 2 + rng.uniform_int(4);
    const int which = trial % 20;
    double tol = 1e-5;

    std::vector<Param> params;
    params.reserve(4);
    std::function<NodeId(Tape&)> build;

    switch (which) {
      case 0: {  // add / sub with scalar broadcast
        params.emplace_back("a", random_tensor(rng, {r, c}));
        params.emplace_back("s", Tensor::scalar(0.7));
        build = [&](Tape& t) {
          return t.sum(t.sub(t.add(t.leaf(params[0]), t.leaf(params[1])), t.leaf(params[1])));
        };
        break;
      }
      case 1: {  // mul / div
        params.emplace_back("a", random_tensor(rng, {r, c}, 0.5, 2.0));
        params.emplace_back("b", random_tensor(rng, {r, c}, 0.5, 2.0));
        build = [&](Tape& t) { return t.sum(t.div(t.mul(t.leaf(params[0]), t.leaf(params[1])), t.leaf(params[1]))); };
        break;
      }
      case 2: {  // exp, log, sqrt chain
        params.emplace_back("a", random_tensor(rng, {r}, 0.2, 2.0));
        build = [&](Tape& t) { return t.sum(t.log(t.add(t.sqrt(t.leaf(params[0])), t.exp(t.leaf(params[0]))))); };
        break;
      }
      case 3: {  // tanh, softplus, sigmoid
        params.emplace_back("a", random_tensor(rng, {r, c}));
        build = [&](Tape& t) { return t.sum(t.sigmoid(t.softplus(t.tanh(t.leaf(params[0]))))); };
        break;
      }
      case 4: {  // elementwise max (entries kept apart to dodge the kink)
        Tensor a = random_tensor(rng, {r, c});
        Tensor b = a;
        for (int64_t i = 0; i < b.size(); ++i) b(i) += (i % 2 ? 0.5 : -0.5);
        params.emplace_back("a", a);
        params.emplace_back("b", b);
        build = [&](Tape& t) { return t.sum(t.elem_max(t.leaf(params[0]), t.leaf(params[1]))); };
        break;
      }
      case 5: {  // matmul + transpose
        params.emplace_back("a", random_tensor(rng, {r, c}));
        params.emplace_back("b", random_tensor(rng, {r, c}));
        build = [&](Tape& t) { return t.sum(t.matmul(t.leaf(params[0]), t.transpose(t.leaf(params[1])))); };
        break;
      }
      case 6: {  // quadratic form
        params.emplace_back("a", random_tensor(rng, {c, c}));
        params.emplace_back("x", random_tensor(rng, {c}));
        build = [&](Tape& t) { return t.quad_form(t.leaf(params[0]), t.leaf(params[1])); };
        break;
      }
      case 7: {  // triangular solve, multi-RHS
        params.emplace_back("l", random_lower(rng, c));
        params.emplace_back("b", random_tensor(rng, {c, r}));
        build = [&](Tape& t) {
          NodeId y = t.tri_solve(t.leaf(params[0]), t.leaf(params[1]));
          return t.sum(t.mul(y, y));
        };
        break;
      }
      case 8: {  // mean and row_sum
        params.emplace_back("a", random_tensor(rng, {r, c}));
        build = [&](Tape& t) {
          NodeId rs = t.row_sum(t.leaf(params[0]));
          return t.add(t.mean(t.leaf(params[0])), t.sum(t.mul(rs, rs)));
        };
        break;
      }
      case 9: {  // masked log-sum-exp rows
        params.emplace_back("a", random_tensor(rng, {r, c}));
        Tensor mask = Tensor::ones({r, c});
        mask(0, 0) = 0.0;  // keep >= 1 available per row (c >= 2)
        build = [&, mask](Tape& t) { return t.sum(t.logsumexp_rows(t.leaf(params[0]), mask)); };
        break;
      }
      case 10: {  // take_per_row / take_rows
        params.emplace_back("a", random_tensor(rng, {r, c}));
        std::vector<int64_t> idx(static_cast<size_t>(r));
        for (int64_t i = 0; i < r; ++i) idx[static_cast<size_t>(i)] = rng.uniform_int(c);
        std::vector<int64_t> rows = {0, r - 1, 0};
        build = [&, idx, rows](Tape& t) {
          NodeId picked = t.take_per_row(t.leaf(params[0]), idx);
          NodeId gathered = t.take_rows(t.leaf(params[0]), rows);
          return t.add(t.sum(picked), t.sum(t.mul(gathered, gathered)));
        };
        break;
      }
      case 11: {  // slice / concat / reshape
        params.emplace_back("a", random_tensor(rng, {r, c}));
        params.emplace_back("b", random_tensor(rng, {1, c}));
        build = [&](Tape& t) {
          NodeId top = t.slice(t.leaf(params[0]), 0, 1);
          NodeId cat = t.concat({top, t.leaf(params[1]), t.slice(t.leaf(params[0]), r - 1, 1)});
          NodeId flat = t.reshape(cat, {3 * c});
          return t.sum(t.mul(flat, flat));
        };
        break;
      }
      case 12: {  // add_row_vec / scale_rows
        params.emplace_back("a", random_tensor(rng, {r, c}));
        params.emplace_back("v", random_tensor(rng, {c}));
        params.emplace_back("s", random_tensor(rng, {r}, 0.5, 1.5));
        build = [&](Tape& t) {
          NodeId y = t.scale_rows(t.add_row_vec(t.leaf(params[0]), t.leaf(params[1])), t.leaf(params[2]));
          return t.sum(t.mul(y, y));
        };
        break;
      }
      case 13: {  // take_diag / make_diag
        params.emplace_back("a", random_tensor(rng, {c, c}));
        params.emplace_back("d", random_tensor(rng, {c}));
        build = [&](Tape& t) {
          NodeId dd = t.take_diag(t.matmul(t.leaf(params[0]), t.make_diag(t.leaf(params[1]))));
          return t.sum(t.mul(dd, dd));
        };
        break;
      }
      case 14: {  // conv1d, strided fast path
        const int64_t width = c, tout = r, ch = 2;
        params.emplace_back("x", random_tensor(rng, {2, tout * width}));
        params.emplace_back("w", random_tensor(rng, {ch, width}));
        build = [&, width](Tape& t) {
          NodeId y = t.conv1d(t.leaf(params[0]), t.leaf(params[1]), width);
          return t.sum(t.mul(y, y));
        };
        break;
      }
      case 15: {  // conv1d, overlapping windows
        params.emplace_back("x", random_tensor(rng, {2, 6}));
        params.emplace_back("w", random_tensor(rng, {2, 3}));
        build = [&](Tape& t) {
          NodeId y = t.conv1d(t.leaf(params[0]), t.leaf(params[1]), 1);
          return t.sum(t.mul(y, y));
        };
        break;
      }
      case 16: {  // masked max-pool over menus
        Tensor x = random_tensor(rng, {2, r, c}, -3.0, 3.0);
        Tensor mask = Tensor::ones({2, r});
        if (r > 1) mask(1, r - 1) = 0.0;
        params.emplace_back("x", x);
        build = [&, mask](Tape& t) {
          NodeId y = t.max_pool_menus(t.leaf(params[0]), mask);
          return t.sum(t.mul(y, y));
        };
        break;
      }
      case 17: {  // batch-norm, train and inference modes
        params.emplace_back("x", random_tensor(rng, {4, c}));
        params.emplace_back("g", random_tensor(rng, {c}, 0.5, 1.5));
        params.emplace_back("b", random_tensor(rng, {c}));
        bool train = trial % 2 == 0;
        auto state = std::make_shared<BatchNormState>();
        state->running_mean = random_tensor(rng, {c});
        state->running_var = random_tensor(rng, {c}, 0.5, 1.5);
        state->initialized = true;
        build = [&, state, train](Tape& t) {
          NodeId y = t.batch_norm(t.leaf(params[0]), t.leaf(params[1]), t.leaf(params[2]), *state, train);
          return t.sum(t.mul(y, y));
        };
        tol = 1e-4;  // normalization divisions amplify finite-difference noise
        break;
      }
      case 18: {  // batched Cholesky apply, both diagonal modes
        const int64_t k = 3;
        params.emplace_back("d", random_tensor(rng, {r, k}));
        params.emplace_back("l", random_tensor(rng, {r, k * (k - 1) / 2}));
        params.emplace_back("e", random_tensor(rng, {r, k}));
        bool sp = trial % 2 == 0;
        build = [&, sp](Tape& t) {
          NodeId y = t.batch_chol_apply(t.leaf(params[0]), t.leaf(params[1]), t.leaf(params[2]), sp);
          return t.sum(t.mul(y, y));
        };
        break;
      }
      default: {  // correlation Cholesky transform and its log-det
        const int64_t k = 2 + rng.uniform_int(4);
        params.emplace_back("u", random_tensor(rng, {k * (k - 1) / 2}, -1.5, 1.5));
        build = [&, k](Tape& t) {
          NodeId l = t.corr_chol(t.leaf(params[0]), k);
          NodeId ld = t.corr_chol_logdet(t.leaf(params[0]), k);
          return t.add(t.sum(t.mul(l, l)), ld);
        };
        break;
      }
    }

    std::vector<Param*> leaves;
    for (auto& p : params) leaves.push_back(&p);
    auto report = gradcheck(build, leaves, 1e-6);
    INFO("trial ", trial, " op-case ", which);
    CHECK(report.max_rel_err <= tol);
  }
}

TEST_CASE("backward is linear in the root") {
  CounterRng rng(21, 0);
  Param x("x", random_tensor(rng, {4}));
  const double a = 1.7, b = -0.6;
  auto grad_of_root = [&](const std::function<NodeId(Tape&)>& f) {
    Tape t;
    NodeId root = f(t);
    t.backward(root);
    return t.grad_of(x);
  };
  auto f = [&](Tape& t) { return t.sum(t.mul(t.leaf(x), t.leaf(x))); };
  auto g = [&](Tape& t) { return t.sum(t.tanh(t.leaf(x))); };
  auto combo = [&](Tape& t) {
    NodeId fa = t.mul(f(t), t.constant(Tensor::scalar(a)));
    NodeId gb = t.mul(g(t), t.constant(Tensor::scalar(b)));
    return t.add(fa, gb);
  };
  Tensor gf = grad_of_root(f);
  Tensor gg = grad_of_root(g);
  Tensor gc = grad_of_root(combo);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(gc(i) == doctest::Approx(a * gf(i) + b * gg(i)).epsilon(1e-12));
}

TEST_CASE("reset clears all gradient state") {
  Param x("x", Tensor::vec({1.0, 2.0}));
  Tape tape;
  NodeId root = tape.sum(tape.mul(tape.leaf(x), tape.leaf(x)));
  tape.backward(root);
  CHECK(tape.grad_of(x)(0) == doctest::Approx(2.0));
  tape.reset();
  CHECK(tape.num_nodes() == 0);
  Tensor g = tape.grad_of(x);  // unbound after reset: zeros
  CHECK(g(0) == 0.0);
  CHECK(g(1) == 0.0);
  // the tape is reusable
  NodeId root2 = tape.sum(tape.mul(tape.leaf(x), tape.leaf(x)));
  tape.backward(root2);
  CHECK(tape.grad_of(x)(0) == doctest::Approx(2.0));
}

TEST_CASE("shape mismatch errors carry both shapes") {
  Tape tape;
  NodeId a = tape.constant(Tensor::zeros({2, 3}));
  NodeId b = tape.constant(Tensor::zeros({3, 3}));
  try {
    tape.add(a, b);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,3]") != std::string::npos);
  }
}

TEST_CASE("unknown op-kind is rejected") {
  Tape tape;
  NodeId a = tape.constant(Tensor::scalar(1.0));
  CHECK_THROWS_AS(record(tape, "frobnicate", {a}), std::invalid_argument);
}

TEST_CASE("backward requires a scalar root") {
  Tape tape;
  NodeId a = tape.constant(Tensor::zeros({3}));
  CHECK_THROWS_AS(tape.backward(a), std::invalid_argument);
}

TEST_CASE("non-finite forward values abort the step") {
  Tape tape;
  NodeId a = tape.constant(Tensor::vec({1.0, 0.0}));
  CHECK_THROWS_AS(tape.log(a), NonFiniteError);
}
