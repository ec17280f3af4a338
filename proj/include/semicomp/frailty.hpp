#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace semicomp {

enum class FrailtyFamily { gamma_indep, gamma_corr, lognormal_corr };

FrailtyFamily parse_frailty_family(const std::string& name);
const char* frailty_family_name(FrailtyFamily f);

// Joint law of the cross-world frailties (gamma_0, gamma_1). Marginals have
// mean 1 and variance theta_a; rho is the Pearson correlation of the gammas
// (gamma families) or of their logarithms (lognormal).
struct FrailtySpec {
  FrailtyFamily family = FrailtyFamily::gamma_corr;
  double theta0 = 1.0;
  double theta1 = 1.0;
  double rho = 0.0;
};

// Throws InvalidSpec for negative variances or rho out of range.
void validate(const FrailtySpec& spec);

// How draws are generated: "degenerate", "independent", "common-shock",
// "gaussian-copula" or "lognormal".
std::string construction(const FrailtySpec& spec);

struct FrailtyDraws {
  std::vector<double> g0, g1;
  double copula_r = 0.0;  // latent normal correlation actually used
};

// b pairs, reproducible from the seed. Draws come in fixed blocks, each from
// its own sub-stream per component (shared, arm 0, arm 1), so the result does
// not depend on the thread count and gamma-indep equals gamma-corr at rho = 0.
FrailtyDraws sample_frailty_pairs(const FrailtySpec& spec, std::size_t b, std::uint64_t seed);

// Latent normal correlation r giving Pearson correlation rho between the two
// gamma marginals under a Gaussian copula. Throws InvalidSpec when rho is not
// attainable.
double calibrate_gaussian_copula(double theta0, double theta1, double rho);

// Pearson correlation of the gamma marginals under a Gaussian copula with
// latent correlation r (Gauss-Hermite quadrature).
double gaussian_copula_pearson(double theta0, double theta1, double r);

// Kendall's tau between T1 and T2 induced by a shared gamma frailty.
inline double kendall_tau_gamma(double theta) { return theta / (theta + 2.0); }

// Probabilists' Gauss-Hermite rule (weight standard normal density).
struct Quadrature {
  std::vector<double> nodes, weights;
};
Quadrature gauss_hermite(std::size_t n);

}  // namespace semicomp
