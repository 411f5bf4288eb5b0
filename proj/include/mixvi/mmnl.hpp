#pragma once

#include <cstdint>
#include <vector>

#include "mixvi/tensor.hpp"

namespace mixvi {

// One choice occasion: J alternatives with covariates split into the block
// entering the shared tastes (xf, J x L) and the block entering the random
// tastes (xr, J x K), an availability indicator per alternative, and the
// observed choice (0-based).
struct MenuObservation {
  Tensor xf;
  Tensor xr;
  std::vector<uint8_t> avail;
  int64_t choice = 0;
};

struct Person {
  std::vector<MenuObservation> menus;
};

// Panel of decision-makers. All menus share (J, L, K); menu counts may vary
// by person. Immutable after construction.
struct ChoiceDataset {
  int64_t num_alternatives = 0;  // J
  int64_t num_fixed = 0;         // L
  int64_t num_random = 0;        // K
  std::vector<Person> persons;

  int64_t num_persons() const { return static_cast<int64_t>(persons.size()); }
  int64_t total_menus() const;
  // Checks every structural invariant; throws DataError naming the first
  // violating (person, menu).
  void validate() const;
};

struct GlobalParams {
  Tensor alpha;  // [L]
  Tensor zeta;   // [K]
  Tensor tau;    // [K], positive
  Tensor psi;    // [K,K] correlation
};

struct LocalParams {
  Tensor betas;  // [N,K]
};

enum class ZetaPrior { Gaussian, LogNormal01 };

struct PriorConfig {
  Tensor lambda0;       // [L]
  Tensor xi0;           // [L,L] PD
  Tensor mu0;           // [K]
  Tensor sigma_big0;    // [K,K] PD
  Tensor sigma0_scale;  // [K], half-Cauchy scales
  double nu = 2.0;      // LKJ concentration
  ZetaPrior zeta_prior = ZetaPrior::Gaussian;
};

// Vague defaults: zero means, 10^2 I covariances, half-Cauchy(10) scales,
// LKJ(2).
PriorConfig default_prior(int64_t l, int64_t k);

// V_j = alpha . xf_j + beta . xr_j for every alternative (availability not
// applied here).
Tensor systematic_utility(const Tensor& alpha, const Tensor& beta, const MenuObservation& menu);

// log P(y | V, avail) with the log-sum-exp over available alternatives only.
double mnl_logprob(const Tensor& v, const std::vector<uint8_t>& avail, int64_t y);

// Choice probabilities over available alternatives (zero where unavailable).
std::vector<double> mnl_probs(const Tensor& v, const std::vector<uint8_t>& avail);

// Omega = diag(tau) Psi diag(tau); validates tau > 0 and that Psi is a
// correlation matrix.
Tensor omega_from(const Tensor& tau, const Tensor& psi);

// Fully normalized log densities.
double mvn_logpdf(const Tensor& x, const Tensor& mean, const Tensor& cov);
double mvn_logpdf_chol(const Tensor& x, const Tensor& mean, const Tensor& chol_lower);
double half_cauchy_logpdf(const Tensor& tau, const Tensor& sigma0);
double lkj_logpdf(const Tensor& psi, double nu);
double lkj_log_norm_constant(int64_t k, double nu);
double lognormal01_logpdf(const Tensor& x);

// Log of Eq-style factorization: priors on (alpha, zeta, tau, Psi), the
// N(zeta, Omega) density of every beta_n, and the MNL likelihood of every
// observed choice.
double log_joint(const ChoiceDataset& data, const GlobalParams& globals, const LocalParams& locals,
                 const PriorConfig& prior);

// Lower Cholesky factor via Eigen LLT; throws on non-PD input.
Tensor cholesky_lower(const Tensor& spd);

}  // namespace mixvi
