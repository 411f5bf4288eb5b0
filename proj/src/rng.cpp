#include "mixvi/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mixvi {

double CounterRng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor CounterRng::normal_tensor(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = normal();
  return t;
}

Tensor CounterRng::uniform_tensor(std::vector<int64_t> shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data) x = uniform();
  return t;
}

double normal_icdf(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_icdf: p must be in (0,1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r + 6.7265770927008700853e+4) * r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r + 3.9307895800092710610e+4) * r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r + 2.41780725177450611770e-1) * r +
             1.27045825245236838258e+0) *
                r +
            3.64784832476320460504e+0) *
               r +
           5.76949722146069140550e+0) *
              r +
          4.63033784615654529590e+0) *
             r +
         1.42343711074968357734e+0) /
        (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r + 1.51986665636164571966e-2) * r +
             1.48103976427480074590e-1) *
                r +
            6.89767334985100004550e-1) *
               r +
           1.67638483018380384940e+0) *
              r +
          2.05319162663775882187e+0) *
             r +
         1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 1.24266094738807843860e-3) * r +
             2.65321895265761230930e-2) *
                r +
            2.96560571828504891230e-1) *
               r +
           1.78482653991729133580e+0) *
              r +
          5.46378491116411436990e+0) *
             r +
         6.65790464350110377720e+0) /
        (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r + 1.84631831751005468180e-5) * r +
             7.86869131145613259100e-4) *
                r +
            1.48753612908506148525e-2) *
               r +
           1.36929880922735805310e-1) *
              r +
          5.99832206555887937690e-1) *
             r +
         1.0);
  }
  return (q < 0.0) ? -v : v;
}

namespace {
constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
                           59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113};
}

ScrambledHalton::ScrambledHalton(int dims, uint64_t seed) : dims_(dims) {
  if (dims < 1 || dims > static_cast<int>(sizeof(kPrimes) / sizeof(kPrimes[0])))
    throw std::invalid_argument("halton: unsupported dimension count " + std::to_string(dims));
  bases_.resize(static_cast<size_t>(dims));
  perms_.resize(static_cast<size_t>(dims));
  for (int d = 0; d < dims; ++d) {
    const int b = kPrimes[d];
    bases_[static_cast<size_t>(d)] = b;
    auto& perm = perms_[static_cast<size_t>(d)];
    perm.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) perm[static_cast<size_t>(i)] = i;
    // Fisher-Yates over digits 1..b-1; digit 0 stays fixed so trailing
    // zeros of the radical inverse are preserved.
    CounterRng rng(seed, 0x68616C74ULL + static_cast<uint64_t>(d));
    for (int i = b - 1; i > 1; --i) {
      int j = 1 + static_cast<int>(rng.uniform_int(i));
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
  }
}

std::vector<double> ScrambledHalton::point(uint64_t index) const {
  std::vector<double> out(static_cast<size_t>(dims_));
  for (int d = 0; d < dims_; ++d) {
    const int b = bases_[static_cast<size_t>(d)];
    const auto& perm = perms_[static_cast<size_t>(d)];
    double f = 1.0;
    double value = 0.0;
    uint64_t i = index;
    while (i > 0) {
      f /= b;
      value += f * perm[static_cast<size_t>(i % static_cast<uint64_t>(b))];
      i /= static_cast<uint64_t>(b);
    }
    out[static_cast<size_t>(d)] = value;
  }
  return out;
}

Tensor halton_normal_draws(int64_t r, int64_t k, uint64_t seed, uint64_t skip) {
  ScrambledHalton seq(static_cast<int>(k), seed);
  Tensor draws({r, k});
  for (int64_t i = 0; i < r; ++i) {
    auto p = seq.point(static_cast<uint64_t>(i) + skip + 1);
    for (int64_t j = 0; j < k; ++j) {
      double u = p[static_cast<size_t>(j)];
      // Guard the exact-zero corner of the radical inverse.
      if (u <= 0.0) u = 0.5 / 4503599627370496.0;
      draws(i, j) = normal_icdf(u);
    }
  }
  return draws;
}

}  // namespace mixvi
