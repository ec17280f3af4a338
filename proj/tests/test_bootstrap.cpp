#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "semicomp/bootstrap.hpp"
#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"

using namespace semicomp;
using testing::rec;

namespace {

Dataset exp_sample(std::size_t n0, std::size_t n1, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<ObservedRecord> rs;
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    const double t = e(g);
    rs.push_back(rec(i < n0 ? 0 : 1, t, 0, t, 1));
  }
  return Dataset(rs);
}

std::vector<double> mean_t2(const Dataset& d, std::uint64_t) {
  double s = 0;
  for (const auto& r : d.records()) s += r.t2_obs;
  return {s / static_cast<double>(d.size())};
}

std::vector<double> arm_sizes(const Dataset& d, std::uint64_t) {
  return {static_cast<double>(d.arm_indices(0).size()), static_cast<double>(d.arm_indices(1).size())};
}

}  // namespace

TEST_SUITE("bootstrap") {
  TEST_CASE("a constant pipeline has zero standard error") {
    const Dataset d = exp_sample(20, 30, 1);
    BootstrapPlan plan;
    plan.reps = 50;
    const auto r = bootstrap(d, [](const Dataset&, std::uint64_t) { return std::vector<double>{3.0, -1.0}; }, plan);
    CHECK(r.se == std::vector<double>{0.0, 0.0});
    CHECK(r.lower == r.estimate);
    CHECK(r.upper == r.estimate);
    CHECK(r.replicates.size() == 50);
  }

  TEST_CASE("stratified resampling keeps the arm sizes") {
    const Dataset d = exp_sample(20, 30, 2);
    BootstrapPlan plan;
    plan.reps = 40;
    const auto s = bootstrap(d, arm_sizes, plan);
    CHECK(s.se == std::vector<double>{0.0, 0.0});
    for (std::size_t r = 0; r < 5; ++r) {
      const auto idx = resample_indices(d, plan.seed, r, true);
      CHECK(idx.size() == 50);
      for (std::size_t i = 0; i < idx.size(); ++i) CHECK(d[idx[i]].a == (i < 20 ? 0 : 1));
    }
    plan.stratified = false;
    CHECK(bootstrap(d, arm_sizes, plan).se[0] > 0.0);
  }

  TEST_CASE("standard error of a sample mean") {
    const std::size_t n = 400;
    const Dataset d = exp_sample(n / 2, n / 2, 3);
    double m = mean_t2(d, 0)[0], ss = 0;
    for (const auto& r : d.records()) ss += (r.t2_obs - m) * (r.t2_obs - m);
    // plug-in standard deviation of the mean under the empirical law
    const double oracle = std::sqrt(ss / n) / std::sqrt(static_cast<double>(n));
    BootstrapPlan plan;
    plan.reps = 4000;
    plan.stratified = false;
    const auto r = bootstrap(d, mean_t2, plan);
    CHECK(r.se[0] == doctest::Approx(oracle).epsilon(0.06));
    const double z = normal_quantile(0.975);
    CHECK(r.lower[0] == doctest::Approx(r.estimate[0] - z * r.se[0]).epsilon(1e-12));
    CHECK(r.upper[0] == doctest::Approx(r.estimate[0] + z * r.se[0]).epsilon(1e-12));
    // doubling the replicates leaves the answer stable
    plan.reps = 8000;
    CHECK(bootstrap(d, mean_t2, plan).se[0] == doctest::Approx(r.se[0]).epsilon(0.06));
  }

  TEST_CASE("normal quantiles") {
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    CHECK(normal_quantile(0.05) == doctest::Approx(-1.644853626951472).epsilon(1e-12));
  }

  TEST_CASE("replicates do not depend on the thread count") {
    const Dataset d = exp_sample(30, 30, 4);
    BootstrapPlan plan;
    plan.reps = 64;
    auto pipe = [](const Dataset& x, std::uint64_t seed) {
      std::mt19937_64 g(seed);
      return std::vector<double>{mean_t2(x, seed)[0], std::uniform_real_distribution<double>()(g)};
    };
    set_max_threads(1);
    const auto a = bootstrap(d, pipe, plan);
    set_max_threads(3);
    const auto b = bootstrap(d, pipe, plan);
    set_max_threads(1);
    CHECK(a.replicates == b.replicates);
    CHECK(a.se == b.se);
    CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
    CHECK(replicate_seed(1, 0) != replicate_seed(2, 0));
    // the point estimate uses the original seed
    CHECK(a.estimate == pipe(d, plan.seed));
  }

  TEST_CASE("failed replicates are dropped up to a limit") {
    const Dataset d = exp_sample(30, 30, 5);
    BootstrapPlan plan;
    plan.reps = 100;
    // fail on every replicate whose seed is even: about half
    auto flaky = [&](const Dataset& x, std::uint64_t seed) {
      if (seed != plan.seed && seed % 2 == 0) throw NotConverged(10, 1.0);
      return mean_t2(x, seed);
    };
    CHECK_THROWS_AS(bootstrap(d, flaky, plan), TooManyFailures);
    plan.max_failure_fraction = 0.9;
    const auto r = bootstrap(d, flaky, plan);
    CHECK(r.failures.size() + r.replicates.size() == 100);
    CHECK(r.failures.size() > 20);
    for (std::size_t i = 0; i < r.replicate_index.size(); ++i)
      CHECK(replicate_seed(plan.seed, r.replicate_index[i]) % 2 == 1);
    // validation errors are not failures
    auto bad = [](const Dataset&, std::uint64_t) -> std::vector<double> { throw InvalidSpec("bad"); };
    CHECK_THROWS_AS(bootstrap(d, bad, plan), InvalidSpec);
  }
}
