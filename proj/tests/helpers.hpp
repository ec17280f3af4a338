#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "semicomp/data.hpp"

namespace testing {

inline semicomp::ObservedRecord rec(int a, double t1, int d1, double t2, int d2,
                                    double entry = 0.0, std::vector<double> x = {},
                                    std::string id = "") {
  static int counter = 0;
  semicomp::ObservedRecord r;
  r.id = id.empty() ? "r" + std::to_string(++counter) : id;
  r.a = a;
  r.t1_obs = t1;
  r.delta1 = d1;
  r.t2_obs = t2;
  r.delta2 = d2;
  r.entry = entry;
  r.x = std::move(x);
  return r;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("semicomp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string scenario_path(const std::string& file) {
  return std::string(SEMICOMP_SCENARIO_DIR) + "/" + file;
}

// Independent exponential illness-death draw without frailty, used to build
// reference datasets whose generating law is known in closed form.
struct ExpIdm {
  double l01 = 1.0, l02 = 1.0, l12 = 1.0;
};

inline semicomp::Dataset exp_idm_data(std::size_t n_per_arm, ExpIdm arm0, ExpIdm arm1,
                                      double censor_rate, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::exponential_distribution<double> e(1.0);
  std::vector<semicomp::ObservedRecord> out;
  for (int a : {0, 1}) {
    const ExpIdm& m = a == 0 ? arm0 : arm1;
    for (std::size_t i = 0; i < n_per_arm; ++i) {
      const double t01 = m.l01 > 0 ? e(g) / m.l01 : INFINITY;
      const double t02 = m.l02 > 0 ? e(g) / m.l02 : INFINITY;
      double t1 = INFINITY, t2;
      if (t01 <= t02) {
        t1 = t01;
        t2 = t01 + e(g) / m.l12;
      } else {
        t2 = t02;
      }
      const double c = censor_rate > 0 ? e(g) / censor_rate : INFINITY;
      const double y2 = std::min(t2, c);
      const double y1 = std::min(t1, y2);
      out.push_back(rec(a, y1, t1 <= y2 ? 1 : 0, y2, t2 <= c ? 1 : 0));
    }
  }
  return semicomp::Dataset(std::move(out));
}

// Reference Cox fit with Breslow ties and counting-process risk sets
// (start, stop]: Newton-Raphson on the partial likelihood.
struct Spell {
  double start, stop;
  int event;
  std::vector<double> x;
};

inline Eigen::VectorXd cox_reference(const std::vector<Spell>& sp, std::size_t p) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  std::vector<double> times;
  for (const auto& s : sp)
    if (s.event) times.push_back(s.stop);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(b.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(b.size(), b.size());
    for (double t : times) {
      double s0 = 0;
      Eigen::VectorXd s1 = Eigen::VectorXd::Zero(b.size());
      Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(b.size(), b.size());
      Eigen::VectorXd xe = Eigen::VectorXd::Zero(b.size());
      int d = 0;
      for (const auto& s : sp) {
        const Eigen::Map<const Eigen::VectorXd> x(s.x.data(), b.size());
        if (s.start < t && t <= s.stop) {
          const double w = std::exp(x.dot(b));
          s0 += w;
          s1 += w * x;
          s2 += w * x * x.transpose();
        }
        if (s.event && s.stop == t) {
          xe += x;
          ++d;
        }
      }
      g += xe - d * s1 / s0;
      h += d * (s2 / s0 - (s1 / s0) * (s1 / s0).transpose());
    }
    const Eigen::VectorXd step = h.ldlt().solve(g);
    b += step;
    if (step.norm() < 1e-13) break;
  }
  return b;
}

// Counting-process spells of arm a for the 0->1, 0->2 and 1->2 transitions
// (1->2 spells start at onset: clock-forward time).
inline std::array<std::vector<Spell>, 3> transition_spells(const semicomp::Dataset& d, int a) {
  std::array<std::vector<Spell>, 3> s;
  for (const auto& r : d.records()) {
    if (r.a != a) continue;
    const bool death_first = r.delta1 == 0 && r.delta2 == 1;
    s[0].push_back({r.entry - 1e-300, r.t1_obs, r.delta1, r.x});
    s[1].push_back({r.entry - 1e-300, r.t1_obs, death_first ? 1 : 0, r.x});
    if (r.delta1 == 1) s[2].push_back({r.t1_obs, r.t2_obs, r.delta2, r.x});
  }
  return s;
}

}  // namespace testing
