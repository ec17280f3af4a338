#include "semicomp/frailty.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/gamma.hpp>
#include <cmath>
#include <random>

#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"
#include "semicomp/random.hpp"

namespace semicomp {

namespace {
constexpr std::size_t kBlock = 4096;
}

FrailtyFamily parse_frailty_family(const std::string& name) {
  if (name == "gamma-indep") return FrailtyFamily::gamma_indep;
  if (name == "gamma-corr") return FrailtyFamily::gamma_corr;
  if (name == "lognormal-corr") return FrailtyFamily::lognormal_corr;
  throw InvalidSpec("unknown frailty family '" + name +
                    "' (gamma-indep, gamma-corr, lognormal-corr)");
}

const char* frailty_family_name(FrailtyFamily f) {
  switch (f) {
    case FrailtyFamily::gamma_indep: return "gamma-indep";
    case FrailtyFamily::gamma_corr: return "gamma-corr";
    case FrailtyFamily::lognormal_corr: return "lognormal-corr";
  }
  return "?";
}

void validate(const FrailtySpec& s) {
  for (double th : {s.theta0, s.theta1})
    if (!std::isfinite(th) || th < 0.0) throw InvalidSpec("frailty variance must be >= 0");
  if (!std::isfinite(s.rho)) throw InvalidSpec("rho must be finite");
  if (s.family == FrailtyFamily::lognormal_corr) {
    if (s.rho < -1.0 || s.rho > 1.0) throw InvalidSpec("lognormal rho must lie in [-1, 1]");
    return;
  }
  if (s.rho < 0.0 || s.rho > 1.0) throw InvalidSpec("gamma rho must lie in [0, 1]");
  if (s.family == FrailtyFamily::gamma_corr && s.rho > 0.0 && s.theta0 != s.theta1 &&
      (s.theta0 == 0.0 || s.theta1 == 0.0))
    throw InvalidSpec("rho > 0 needs both frailty variances positive");
}

std::string construction(const FrailtySpec& s) {
  if (s.theta0 == 0.0 && s.theta1 == 0.0) return "degenerate";
  if (s.family == FrailtyFamily::lognormal_corr) return "lognormal";
  if (s.family == FrailtyFamily::gamma_indep || s.rho == 0.0) return "independent";
  if (s.theta0 == s.theta1) return "common-shock";
  return "gaussian-copula";
}

Quadrature gauss_hermite(std::size_t n) {
  // Golub-Welsch for the probabilists' Hermite polynomials
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Quadrature q;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    q.nodes.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    q.weights.push_back(v * v);
  }
  return q;
}

namespace {

// Mean-one gamma quantile at Phi(y); the upper tail goes through the
// complement so large y keeps full precision.
double gamma_from_normal(double theta, double y) {
  if (theta == 0.0) return 1.0;
  const boost::math::gamma_distribution<double> g(1.0 / theta, theta);
  if (y <= 0.0) return boost::math::quantile(g, std::max(0.5 * std::erfc(-y / std::sqrt(2.0)), 1e-300));
  return boost::math::quantile(boost::math::complement(g, std::max(0.5 * std::erfc(y / std::sqrt(2.0)), 1e-300)));
}

}  // namespace

double gaussian_copula_pearson(double theta0, double theta1, double r) {
  static const Quadrature q = gauss_hermite(48);
  const double a = std::sqrt(std::max(r, 0.0)), b = std::sqrt(std::max(1.0 - r, 0.0));
  // E[g0 g1] with Y0 = a Zc + b Z0, Y1 = a Zc + b Z1
  double m = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    double inner0 = 0.0, inner1 = 0.0;
    for (std::size_t j = 0; j < q.nodes.size(); ++j) {
      const double y = a * q.nodes[i] + b * q.nodes[j];
      inner0 += q.weights[j] * gamma_from_normal(theta0, y);
      inner1 += q.weights[j] * gamma_from_normal(theta1, y);
    }
    m += q.weights[i] * inner0 * inner1;
  }
  return (m - 1.0) / std::sqrt(theta0 * theta1);
}

double calibrate_gaussian_copula(double theta0, double theta1, double rho) {
  if (rho == 0.0) return 0.0;
  const double top = gaussian_copula_pearson(theta0, theta1, 1.0);
  if (rho > top + 1e-12)
    throw InvalidSpec("correlation " + std::to_string(rho) +
                      " is not attainable for these frailty variances (max " +
                      std::to_string(top) + ")");
  if (rho >= top) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gaussian_copula_pearson(theta0, theta1, mid) < rho ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

FrailtyDraws sample_frailty_pairs(const FrailtySpec& spec, std::size_t b, std::uint64_t seed) {
  validate(spec);
  if (b == 0) throw InvalidSpec("number of frailty draws must be >= 1");
  FrailtyDraws out;
  out.g0.assign(b, 1.0);
  out.g1.assign(b, 1.0);
  const std::string how = construction(spec);
  if (how == "degenerate") return out;

  double r = 0.0;  // latent normal correlation
  if (how == "gaussian-copula") r = calibrate_gaussian_copula(spec.theta0, spec.theta1, spec.rho);
  if (how == "lognormal") r = spec.rho;
  out.copula_r = r;

  const std::size_t blocks = (b + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t lo = blk * kBlock, hi = std::min(b, lo + kBlock);
    Engine ec = make_engine(seed, streams::frailty_common, blk);
    Engine e0 = make_engine(seed, streams::frailty_arm0, blk);
    Engine e1 = make_engine(seed, streams::frailty_arm1, blk);
    if (how == "independent" || how == "common-shock") {
      const double th = spec.theta0;  // equal under common shock
      const double rho = how == "common-shock" ? spec.rho : 0.0;
      auto draw = [](Engine& e, double shape) {
        if (shape <= 0.0) return 0.0;
        return std::gamma_distribution<double>(shape, 1.0)(e);
      };
      for (std::size_t i = lo; i < hi; ++i) {
        if (how == "common-shock") {
          const double gc = draw(ec, rho / th);
          out.g0[i] = th * (gc + draw(e0, (1.0 - rho) / th));
          out.g1[i] = th * (gc + draw(e1, (1.0 - rho) / th));
        } else {
          out.g0[i] = spec.theta0 > 0.0 ? spec.theta0 * draw(e0, 1.0 / spec.theta0) : 1.0;
          out.g1[i] = spec.theta1 > 0.0 ? spec.theta1 * draw(e1, 1.0 / spec.theta1) : 1.0;
        }
      }
      return;
    }
    // latent normals: Y_a = sqrt(|r|) Zc (sign-flipped for arm 1 when r < 0)
    // + sqrt(1 - |r|) Z_a
    std::normal_distribution<double> nc, n0, n1;
    const double a = std::sqrt(std::abs(r)), c = std::sqrt(1.0 - std::abs(r));
    const double sign = r < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double zc = nc(ec), z0 = n0(e0), z1 = n1(e1);
      const double y0 = a * zc + c * z0, y1 = sign * a * zc + c * z1;
      if (how == "lognormal") {
        const double s0 = std::sqrt(std::log1p(spec.theta0)), s1 = std::sqrt(std::log1p(spec.theta1));
        out.g0[i] = std::exp(s0 * y0 - 0.5 * s0 * s0);
        out.g1[i] = std::exp(s1 * y1 - 0.5 * s1 * s1);
      } else {
        out.g0[i] = gamma_from_normal(spec.theta0, y0);
        out.g1[i] = gamma_from_normal(spec.theta1, y1);
      }
    }
  });
  return out;
}

}  // namespace semicomp
