#include "mixvi/mmnl.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>

#include "mixvi/errors.hpp"
#include "mixvi/util.hpp"

namespace mixvi {

namespace {
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

int64_t ChoiceDataset::total_menus() const {
  int64_t n = 0;
  for (const auto& p : persons) n += static_cast<int64_t>(p.menus.size());
  return n;
}

void ChoiceDataset::validate() const {
  if (num_persons() < 1) throw DataError("dataset: needs at least one person");
  if (num_alternatives < 1) throw DataError("dataset: needs at least one alternative");
  for (size_t n = 0; n < persons.size(); ++n) {
    const auto& p = persons[n];
    if (p.menus.empty()) throw DataError("dataset: person " + std::to_string(n) + " has no menus");
    for (size_t t = 0; t < p.menus.size(); ++t) {
      const auto& m = p.menus[t];
      auto where = [&] { return "person " + std::to_string(n) + ", menu " + std::to_string(t); };
      if (m.xf.rank() != 2 || m.xf.shape[0] != num_alternatives || m.xf.shape[1] != num_fixed)
        throw DataError("dataset: bad fixed-covariate shape " + m.xf.shape_str() + " at " + where());
      if (m.xr.rank() != 2 || m.xr.shape[0] != num_alternatives || m.xr.shape[1] != num_random)
        throw DataError("dataset: bad random-covariate shape " + m.xr.shape_str() + " at " + where());
      if (static_cast<int64_t>(m.avail.size()) != num_alternatives)
        throw DataError("dataset: bad availability length at " + where());
      if (m.choice < 0 || m.choice >= num_alternatives)
        throw DataError("dataset: choice out of range at " + where());
      if (!m.avail[static_cast<size_t>(m.choice)])
        throw DataError("dataset: chosen alternative unavailable at " + where());
      bool any = false;
      for (uint8_t a : m.avail) any = any || (a != 0);
      if (!any) throw DataError("dataset: no available alternative at " + where());
    }
  }
}

PriorConfig default_prior(int64_t l, int64_t k) {
  PriorConfig p;
  p.lambda0 = Tensor::zeros({l});
  p.xi0 = Tensor::zeros({l, l});
  for (int64_t i = 0; i < l; ++i) p.xi0(i, i) = 100.0;
  p.mu0 = Tensor::zeros({k});
  p.sigma_big0 = Tensor::zeros({k, k});
  for (int64_t i = 0; i < k; ++i) p.sigma_big0(i, i) = 100.0;
  p.sigma0_scale = Tensor::full({k}, 10.0);
  p.nu = 2.0;
  return p;
}

Tensor systematic_utility(const Tensor& alpha, const Tensor& beta, const MenuObservation& menu) {
  const int64_t j = menu.xf.shape[0];
  if (alpha.size() != menu.xf.shape[1] || beta.size() != menu.xr.shape[1])
    throw std::invalid_argument("systematic_utility: taste dims " + alpha.shape_str() + "/" + beta.shape_str() +
                                " do not match covariates " + menu.xf.shape_str() + "/" + menu.xr.shape_str());
  Tensor v({j});
  for (int64_t a = 0; a < j; ++a) {
    double acc = 0.0;
    for (int64_t i = 0; i < alpha.size(); ++i) acc += alpha(i) * menu.xf(a, i);
    for (int64_t i = 0; i < beta.size(); ++i) acc += beta(i) * menu.xr(a, i);
    v(a) = acc;
  }
  return v;
}

double mnl_logprob(const Tensor& v, const std::vector<uint8_t>& avail, int64_t y) {
  const int64_t j = v.size();
  if (static_cast<int64_t>(avail.size()) != j)
    throw std::invalid_argument("mnl_logprob: availability length mismatch");
  if (y < 0 || y >= j || !avail[static_cast<size_t>(y)])
    throw std::invalid_argument("mnl_logprob: chosen alternative " + std::to_string(y) + " is unavailable");
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t a = 0; a < j; ++a)
    if (avail[static_cast<size_t>(a)]) mx = std::max(mx, v(a));
  double acc = 0.0;
  for (int64_t a = 0; a < j; ++a)
    if (avail[static_cast<size_t>(a)]) acc += std::exp(v(a) - mx);
  return v(y) - mx - std::log(acc);
}

std::vector<double> mnl_probs(const Tensor& v, const std::vector<uint8_t>& avail) {
  const int64_t j = v.size();
  std::vector<double> probs(static_cast<size_t>(j), 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (int64_t a = 0; a < j; ++a)
    if (avail[static_cast<size_t>(a)]) mx = std::max(mx, v(a));
  double acc = 0.0;
  for (int64_t a = 0; a < j; ++a)
    if (avail[static_cast<size_t>(a)]) acc += std::exp(v(a) - mx);
  for (int64_t a = 0; a < j; ++a)
    if (avail[static_cast<size_t>(a)]) probs[static_cast<size_t>(a)] = std::exp(v(a) - mx) / acc;
  return probs;
}

Tensor cholesky_lower(const Tensor& spd) {
  const int64_t d = spd.shape[0];
  ConstMatMap a(spd.data.data(), d, d);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("cholesky: matrix is not positive definite");
  Eigen::MatrixXd l = llt.matrixL();
  Tensor out({d, d});
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j <= i; ++j) out(i, j) = l(i, j);
  return out;
}

namespace {

void check_correlation(const Tensor& psi) {
  const int64_t k = psi.shape[0];
  if (psi.rank() != 2 || psi.shape[1] != k) throw std::invalid_argument("psi: must be square, got " + psi.shape_str());
  for (int64_t i = 0; i < k; ++i) {
    if (std::fabs(psi(i, i) - 1.0) > 1e-8)
      throw std::invalid_argument("psi: diagonal entry " + std::to_string(i) + " is not 1");
    for (int64_t j = 0; j < i; ++j)
      if (std::fabs(psi(i, j) - psi(j, i)) > 1e-8) throw std::invalid_argument("psi: not symmetric");
  }
  cholesky_lower(psi);  // throws when not PD
}

}  // namespace

Tensor omega_from(const Tensor& tau, const Tensor& psi) {
  const int64_t k = tau.size();
  if (psi.rank() != 2 || psi.shape[0] != k || psi.shape[1] != k)
    throw std::invalid_argument("omega_from: dims " + tau.shape_str() + " vs " + psi.shape_str());
  for (int64_t i = 0; i < k; ++i)
    if (!(tau(i) > 0.0)) throw std::invalid_argument("omega_from: tau must be positive");
  check_correlation(psi);
  Tensor omega({k, k});
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) omega(i, j) = tau(i) * psi(i, j) * tau(j);
  return omega;
}

double mvn_logpdf_chol(const Tensor& x, const Tensor& mean, const Tensor& chol_lower) {
  const int64_t d = x.size();
  if (mean.size() != d || chol_lower.shape[0] != d)
    throw std::invalid_argument("mvn_logpdf: dimension mismatch " + x.shape_str() + " vs " + mean.shape_str());
  Eigen::VectorXd diff(d);
  for (int64_t i = 0; i < d; ++i) diff(i) = x(i) - mean(i);
  ConstMatMap l(chol_lower.data.data(), d, d);
  Eigen::VectorXd y = l.triangularView<Eigen::Lower>().solve(diff);
  double logdet = 0.0;
  for (int64_t i = 0; i < d; ++i) logdet += std::log(l(i, i));
  return -0.5 * static_cast<double>(d) * kLog2Pi - logdet - 0.5 * y.squaredNorm();
}

double mvn_logpdf(const Tensor& x, const Tensor& mean, const Tensor& cov) {
  return mvn_logpdf_chol(x, mean, cholesky_lower(cov));
}

double half_cauchy_logpdf(const Tensor& tau, const Tensor& sigma0) {
  if (tau.size() != sigma0.size()) throw std::invalid_argument("half_cauchy: dims " + tau.shape_str());
  double acc = 0.0;
  for (int64_t i = 0; i < tau.size(); ++i) {
    const double t = tau(i);
    const double s = sigma0(i);
    if (!(t >= 0.0)) throw std::invalid_argument("half_cauchy: tau out of support");
    if (!(s > 0.0)) throw std::invalid_argument("half_cauchy: scale must be positive");
    acc += std::log(2.0) - std::log(std::numbers::pi) - std::log(s) - std::log1p((t / s) * (t / s));
  }
  return acc;
}

double lkj_log_norm_constant(int64_t k, double nu) {
  // log of the integral of det(Psi)^{nu-1} over K x K correlation matrices.
  double acc = 0.0;
  for (int64_t i = 1; i <= k - 1; ++i) {
    const double kk = static_cast<double>(k - i);
    const double a = nu + (kk - 1.0) / 2.0;
    const double log_beta = 2.0 * std::lgamma(a) - std::lgamma(2.0 * a);
    acc += (2.0 * nu - 2.0 + kk) * kk * std::numbers::ln2 + kk * log_beta;
  }
  return acc;
}

double lkj_logpdf(const Tensor& psi, double nu) {
  if (nu < 1.0) throw std::invalid_argument("lkj: nu must be >= 1");
  check_correlation(psi);
  const int64_t k = psi.shape[0];
  Tensor l = cholesky_lower(psi);
  double logdet = 0.0;
  for (int64_t i = 0; i < k; ++i) logdet += 2.0 * std::log(l(i, i));
  return (nu - 1.0) * logdet - lkj_log_norm_constant(k, nu);
}

double lognormal01_logpdf(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    if (!(x(i) > 0.0)) throw std::invalid_argument("lognormal: value out of support");
    const double lx = std::log(x(i));
    acc += -lx - 0.5 * lx * lx - 0.5 * kLog2Pi;
  }
  return acc;
}

double log_joint(const ChoiceDataset& data, const GlobalParams& globals, const LocalParams& locals,
                 const PriorConfig& prior) {
  const int64_t n = data.num_persons();
  const int64_t k = data.num_random;
  if (locals.betas.rank() != 2 || locals.betas.shape[0] != n || locals.betas.shape[1] != k)
    throw std::invalid_argument("log_joint: betas shape " + locals.betas.shape_str() + " does not match dataset");

  double lp = 0.0;
  if (data.num_fixed > 0) lp += mvn_logpdf(globals.alpha, prior.lambda0, prior.xi0);
  lp += prior.zeta_prior == ZetaPrior::Gaussian ? mvn_logpdf(globals.zeta, prior.mu0, prior.sigma_big0)
                                                : lognormal01_logpdf(globals.zeta);
  lp += half_cauchy_logpdf(globals.tau, prior.sigma0_scale);
  if (k > 1) lp += lkj_logpdf(globals.psi, prior.nu);

  const Tensor omega = omega_from(globals.tau, globals.psi);
  const Tensor chol = cholesky_lower(omega);

  const int64_t shards = num_shards(n);
  std::vector<double> partial(static_cast<size_t>(shards), 0.0);
  for_shards(
      n,
      [&](int64_t s, int64_t begin, int64_t end) {
        double acc = 0.0;
        Tensor beta({k});
        for (int64_t pi = begin; pi < end; ++pi) {
          for (int64_t i = 0; i < k; ++i) beta(i) = locals.betas(pi, i);
          acc += mvn_logpdf_chol(beta, globals.zeta, chol);
          for (const auto& menu : data.persons[static_cast<size_t>(pi)].menus) {
            Tensor v = systematic_utility(globals.alpha, beta, menu);
            acc += mnl_logprob(v, menu.avail, menu.choice);
          }
        }
        partial[static_cast<size_t>(s)] = acc;
      },
      nullptr);
  for (double p : partial) lp += p;
  return lp;
}

}  // namespace mixvi
