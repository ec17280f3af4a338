#include "semicomp/bootstrap.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <optional>
#include <random>

#include "semicomp/errors.hpp"
#include "semicomp/parallel.hpp"
#include "semicomp/random.hpp"

namespace semicomp {

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::vector<std::size_t> resample_indices(const Dataset& data, std::uint64_t seed, std::size_t r,
                                          bool stratified) {
  Engine eng = make_engine(seed, streams::bootstrap, r);
  std::vector<std::size_t> out;
  out.reserve(data.size());
  auto draw_from = [&](const std::vector<std::size_t>& pool) {
    if (pool.empty()) return;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < pool.size(); ++i) out.push_back(pool[pick(eng)]);
  };
  if (stratified) {
    draw_from(data.arm_indices(0));
    draw_from(data.arm_indices(1));
  } else {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    draw_from(all);
  }
  return out;
}

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r) {
  return derive_seed(seed, streams::bootstrap, 1000003u + r);
}

void summarize(BootstrapResult& res) {
  const std::size_t k = res.estimate.size();
  const double z = normal_quantile(0.5 + 0.5 * res.level);
  res.se.assign(k, 0.0);
  res.lower.assign(k, 0.0);
  res.upper.assign(k, 0.0);
  const double n = static_cast<double>(res.replicates.size());
  for (std::size_t j = 0; j < k; ++j) {
    if (res.replicates.size() >= 2) {
      double mean = 0.0;
      for (const auto& row : res.replicates) mean += row[j];
      mean /= n;
      double ss = 0.0;
      for (const auto& row : res.replicates) ss += (row[j] - mean) * (row[j] - mean);
      res.se[j] = std::sqrt(ss / (n - 1.0));
    }
    res.lower[j] = res.estimate[j] - z * res.se[j];
    res.upper[j] = res.estimate[j] + z * res.se[j];
  }
}

BootstrapResult bootstrap(const Dataset& data, const Pipeline& pipeline, const BootstrapPlan& plan) {
  if (plan.reps < 2) throw InvalidSpec("bootstrap needs at least 2 repetitions");
  if (!(plan.level > 0.0 && plan.level < 1.0)) throw InvalidSpec("CI level must lie in (0, 1)");
  BootstrapResult res;
  res.level = plan.level;
  res.estimate = pipeline(data, plan.seed);

  std::vector<std::optional<std::vector<double>>> rows(plan.reps);
  std::vector<std::string> errors(plan.reps);
  parallel_for(plan.reps, [&](std::size_t r) {
    const auto idx = resample_indices(data, plan.seed, r, plan.stratified);
    try {
      auto v = pipeline(data.subset(idx), replicate_seed(plan.seed, r));
      if (v.size() != res.estimate.size())
        throw std::logic_error("bootstrap pipeline returned a different number of outputs");
      rows[r] = std::move(v);
    } catch (const EstimationError& e) {
      errors[r] = e.what();
    } catch (const EmptyArm& e) {
      errors[r] = e.what();
    } catch (const EmptyCell& e) {
      errors[r] = e.what();
    }
  });
  for (std::size_t r = 0; r < plan.reps; ++r) {
    if (rows[r]) {
      res.replicates.push_back(std::move(*rows[r]));
      res.replicate_index.push_back(r);
    } else {
      res.failures.push_back("replicate " + std::to_string(r) + ": " + errors[r]);
    }
  }
  if (static_cast<double>(res.failures.size()) >
      plan.max_failure_fraction * static_cast<double>(plan.reps))
    throw TooManyFailures(res.failures.size(), plan.reps);
  summarize(res);
  return res;
}

}  // namespace semicomp
