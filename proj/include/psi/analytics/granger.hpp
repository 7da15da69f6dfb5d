#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "psi/analytics/f_distribution.hpp"
#include "psi/analytics/series.hpp"

namespace psi {

struct SingularDesign : Error {
  using Error::Error;
};

struct GrangerResult {
  std::string cause;
  std::string effect;
  int lag = 0;
  double f_value = 0.0;
  double p_value = 1.0;
  std::size_t n_effective = 0;
  double ssr_restricted = 0.0;
  double ssr_unrestricted = 0.0;
};

/// Design matrices for the restricted (own lags) and unrestricted (own +
/// cause lags) regressions, one row per month t with t, t-1..t-L present in
/// both series. Columns: intercept, effect lags 1..L, then cause lags 1..L.
struct GrangerDesign {
  Eigen::MatrixXd unrestricted;
  Eigen::VectorXd target;
  std::size_t n = 0;
};

inline GrangerDesign granger_design(const TimeSeries& cause, const TimeSeries& effect, int max_lag) {
  if (max_lag < 1) throw PreconditionError("granger: max_lag must be >= 1");
  std::vector<YearMonth> rows;
  for (const auto& [m, _] : effect.points()) {
    bool ok = true;
    for (int j = 0; j <= max_lag && ok; ++j) ok = effect.at(m - j).has_value() && cause.at(m - j).has_value();
    if (ok) rows.push_back(m);
  }
  GrangerDesign d;
  d.n = rows.size();
  const int L = max_lag;
  d.unrestricted.resize(static_cast<Eigen::Index>(d.n), 1 + 2 * L);
  d.target.resize(static_cast<Eigen::Index>(d.n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto m = rows[r];
    const auto i = static_cast<Eigen::Index>(r);
    d.target(i) = *effect.at(m);
    d.unrestricted(i, 0) = 1.0;
    for (int j = 1; j <= L; ++j) {
      d.unrestricted(i, j) = *effect.at(m - j);
      d.unrestricted(i, L + j) = *cause.at(m - j);
    }
  }
  return d;
}

/// Sum of squared residuals of the least-squares fit, via column-pivoting
/// Householder QR. Rank deficiency is reported rather than regularized.
inline double ols_ssr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols())
    throw SingularDesign("granger: design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                         std::to_string(X.cols()) + ")");
  Eigen::VectorXd beta = qr.solve(y);
  return (y - X * beta).squaredNorm();
}

/// Tests H0 "cause does not Granger-cause effect" at fixed lag order L:
///   F = ((SSR_r - SSR_u) / L) / (SSR_u / (n - 2L - 1)),  p = P(F(L, n-2L-1) > F).
inline GrangerResult granger_test(const TimeSeries& cause, const TimeSeries& effect, int max_lag) {
  auto d = granger_design(cause, effect, max_lag);
  const int L = max_lag;
  if (d.n <= static_cast<std::size_t>(2 * L + 2))
    throw InsufficientData("granger: " + std::to_string(d.n) + " usable observations, need more than " +
                           std::to_string(2 * L + 2));

  const Eigen::MatrixXd restricted = d.unrestricted.leftCols(1 + L);
  const double ssr_u = ols_ssr(d.unrestricted, d.target);
  const double ssr_r = ols_ssr(restricted, d.target);
  const double df_num = L;
  const double df_den = static_cast<double>(d.n) - 2.0 * L - 1.0;

  GrangerResult g;
  g.cause = cause.name();
  g.effect = effect.name();
  g.lag = L;
  g.n_effective = d.n;
  g.ssr_restricted = ssr_r;
  g.ssr_unrestricted = ssr_u;
  if (ssr_u <= 0.0) {
    // Perfect unrestricted fit: infinite F unless the restricted fit is perfect too.
    g.f_value = ssr_r > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    g.f_value = std::max(0.0, ((ssr_r - ssr_u) / df_num) / (ssr_u / df_den));
  }
  g.p_value = f_distribution_sf(g.f_value, df_num, df_den);
  return g;
}

}  // namespace psi
