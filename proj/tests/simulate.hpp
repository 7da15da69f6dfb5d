#pragma once

// Seeded synthetic series shared by the unit and acceptance tests.

#include <random>
#include <vector>

#include "psi/analytics/series.hpp"

namespace sim {

struct Pair {
  std::vector<double> x, y;
};

/// x white noise; y_t = 0.5 y_{t-1} + beta x_{t-1} + e_t. beta = 0 gives an
/// own-lag process with no dependence on x.
inline Pair ar_with_cause(std::size_t n, double beta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Pair p;
  double prev_x = 0.0, prev_y = 0.0;
  for (std::size_t t = 0; t < n + 50; ++t) {  // 50 burn-in steps
    double x = z(rng);
    double y = 0.5 * prev_y + beta * prev_x + z(rng);
    if (t >= 50) {
      p.x.push_back(x);
      p.y.push_back(y);
    }
    prev_x = x;
    prev_y = y;
  }
  return p;
}

/// x white noise; y_t = beta x_{t-delay} + e_t. beta = 0 gives independent noise.
inline Pair delayed_cause(std::size_t n, double beta, int delay, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(n + delay);
  for (auto& v : x) v = z(rng);
  Pair p;
  for (std::size_t t = 0; t < n; ++t) {
    p.x.push_back(x[t + delay]);
    p.y.push_back(beta * x[t] + z(rng));
  }
  return p;
}

inline psi::TimeSeries to_series(const std::vector<double>& v, std::string name,
                                 psi::YearMonth start = psi::YearMonth(2000, 1)) {
  psi::TimeSeries s(std::move(name));
  for (std::size_t i = 0; i < v.size(); ++i) s.insert(start + static_cast<int>(i), v[i]);
  return s;
}

}  // namespace sim
