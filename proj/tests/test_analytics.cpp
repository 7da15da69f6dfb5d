#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "psi/analytics/f_distribution.hpp"
#include "psi/analytics/granger.hpp"
#include "psi/analytics/metrics.hpp"
#include "psi/analytics/series.hpp"
#include "simulate.hpp"
#include "test_util.hpp"

using namespace psi;

namespace {

// Upper-tail F probabilities computed with mpmath at 50 significant digits.
struct FRef {
  double f, d1, d2, sf;
};
constexpr FRef kFReference[] = {
    {0.5, 3, 10, 0.69062224553355747161},   {1, 1, 1, 0.5},
    {2.5, 12, 175, 0.0047277683018360506411}, {3.0, 12, 175, 0.00076512466349079828602},
    {1.2, 12, 30, 0.32752913000819076432},  {4.0, 2, 50, 0.02446528443869687807},
    {0.1, 5, 5, 0.98775808346893027383},    {10, 3, 20, 0.00030940546351440708255},
    {1.76, 3, 30, 0.17606204256246113326},  {6.5, 12, 175, 1.5795390307081400658e-9},
    {0.9, 6, 12, 0.52556498795024248952},   {2.0, 1, 1000, 0.15761046413342373443},
};

}  // namespace

// ---------------------------------------------------------------------------
// Weighted F1
// ---------------------------------------------------------------------------

TEST(WeightedF1, Examples) {
  EXPECT_NEAR(weighted_f1({"yes", "yes", "no"}, {"yes", "no", "no"}).weighted_f1, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(weighted_f1({"a", "b", "c"}, {"a", "b", "c"}).weighted_f1, 1.0);
  auto bad = weighted_f1({"a", "a", "a", "b"}, {"b", "b", "b", "a"});
  EXPECT_DOUBLE_EQ(bad.weighted_f1, 0.0);
  EXPECT_LT(weighted_f1({"a", "a", "b", "b"}, {"b", "a", "a", "a"}).weighted_f1, 0.5);
}

TEST(WeightedF1, PredictedOnlyLabelHasZeroWeight) {
  auto r = weighted_f1({"a", "a"}, {"a", "z"});
  EXPECT_EQ(r.per_label.at("z").support, 0u);
  EXPECT_NEAR(r.weighted_f1, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.confusion[0][1], 1u);
}

TEST(WeightedF1, Preconditions) {
  EXPECT_THROW(weighted_f1({}, {}), PreconditionError);
  EXPECT_THROW(weighted_f1({"a"}, {"a", "b"}), PreconditionError);
}

TEST(WeightedF1Property, MatchesTallyOracle) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng() % 60;
    const int k = 2 + static_cast<int>(rng() % 3);
    std::vector<std::string> g, p;
    for (std::size_t i = 0; i < n; ++i) {
      g.push_back("c" + std::to_string(rng() % k));
      p.push_back(rng() % 3 ? g.back() : "c" + std::to_string(rng() % k));
    }
    EXPECT_NEAR(weighted_f1(g, p).weighted_f1, oracle::weighted_f1(g, p), 1e-12);
  }
}

TEST(WeightedF1Property, RelabelingInvariant) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> g, p, g2, p2;
    for (int i = 0; i < 30; ++i) {
      g.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      p.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
    }
    auto rename = [](const std::string& s) { return s == "a" ? "zz" : s == "b" ? "aa" : "mm"; };
    for (int i = 0; i < 30; ++i) {
      g2.push_back(rename(g[i]));
      p2.push_back(rename(p[i]));
    }
    EXPECT_NEAR(weighted_f1(g, p).weighted_f1, weighted_f1(g2, p2).weighted_f1, 1e-14);
  }
}

// ---------------------------------------------------------------------------
// Series and correlation
// ---------------------------------------------------------------------------

TEST(Series, TransformYoyAndMom) {
  TimeSeries s("cpi", {{YearMonth(2000, 1), 100.0}, {YearMonth(2000, 2), 101.0}, {YearMonth(2001, 1), 102.0},
                       {YearMonth(2001, 2), 99.99}});
  auto yoy = transform_series(s, SeriesTransform::YoyPct);
  ASSERT_EQ(yoy.size(), 2u);
  EXPECT_NEAR(*yoy.at(YearMonth(2001, 1)), 2.0, 1e-12);
  EXPECT_NEAR(*yoy.at(YearMonth(2001, 2)), -1.0, 1e-12);
  auto mom = transform_series(s, SeriesTransform::MomPct);
  ASSERT_EQ(mom.size(), 2u);
  EXPECT_NEAR(*mom.at(YearMonth(2000, 2)), 1.0, 1e-12);
  EXPECT_EQ(transform_series(s, SeriesTransform::Level), s);
  TimeSeries zero("z", {{YearMonth(2000, 1), 0.0}, {YearMonth(2000, 2), 1.0}});
  EXPECT_THROW(transform_series(zero, SeriesTransform::MomPct), ValidationError);
  EXPECT_EQ(parse_transform("YoY"), SeriesTransform::YoyPct);
}

TEST(Series, LoadRejectsDuplicateMonth) {
  testutil::TempDir dir;
  auto p = dir.write("s.csv", "month,value\n2001-01,1\n2001-02,2\n2001-02,3\n");
  try {
    load_series(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("2001-02"), std::string::npos) << e.what();
    EXPECT_EQ(e.line, 4u);
  }
  auto ok = load_series(dir.write("t.csv", "month,value\n2001-01,1.5\n2001-02,\n2001-03,2\n"), "ref");
  EXPECT_EQ(ok.size(), 2u);
  EXPECT_EQ(ok.name(), "ref");
}

TEST(Pearson, Examples) {
  std::vector<double> x{1, 2, 3}, y{1, 3, 2};
  EXPECT_NEAR(pearson(x, y), 0.5, 1e-15);
  std::vector<double> up{1, 2, 3, 4}, down{8, 6, 4, 2};
  EXPECT_DOUBLE_EQ(pearson(up, up), 1.0);
  EXPECT_DOUBLE_EQ(pearson(up, down), -1.0);
  std::vector<double> flat{2, 2, 2, 2};
  EXPECT_THROW(pearson(up, flat), ZeroVariance);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{2}), InsufficientData);
}

TEST(PearsonProperty, OracleSymmetryAndAffineInvariance) {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> z;
  for (int t = 0; t < 300; ++t) {
    std::vector<double> x, y, xs;
    const std::size_t n = 3 + rng() % 50;
    const double a = 0.5 + (rng() % 100) / 10.0, b = (static_cast<double>(rng() % 200) - 100.0) / 7.0;
    for (std::size_t i = 0; i < n; ++i) {
      x.push_back(z(rng));
      y.push_back(0.3 * x.back() + z(rng));
      xs.push_back(a * x.back() + b);
    }
    const double r = pearson(x, y);
    EXPECT_NEAR(r, static_cast<double>(oracle::pearson(x, y)), 1e-10);
    EXPECT_DOUBLE_EQ(pearson(y, x), r);
    EXPECT_NEAR(pearson(xs, y), r, 1e-12);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(LaggedCorrelation, DelayedCopyPeaksAtDelay) {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> z;
  std::vector<double> a;
  for (int i = 0; i < 120; ++i) a.push_back(z(rng));
  auto sa = sim::to_series(a, "a");
  auto sb = sim::to_series(a, "b", YearMonth(2000, 1) + 3);  // b_t = a_{t-3}
  auto res = lagged_correlation(sa, sb, -12, 12, 24);
  EXPECT_EQ(res.best_lag, 3);
  EXPECT_NEAR(res.best_r, 1.0, 1e-12);
  EXPECT_EQ(res.n_overlap.at(3), 120u);
  EXPECT_EQ(res.n_overlap.at(0), 117u);
}

TEST(LaggedCorrelation, SwappingArgumentsNegatesLags) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> z;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a, b;
    for (int i = 0; i < 60; ++i) {
      a.push_back(z(rng));
      b.push_back(z(rng));
    }
    auto sa = sim::to_series(a, "a"), sb = sim::to_series(b, "b", YearMonth(2000, 1) + static_cast<int>(rng() % 5));
    auto ab = lagged_correlation(sa, sb, -6, 6, 10), ba = lagged_correlation(sb, sa, -6, 6, 10);
    for (const auto& [k, r] : ab.per_lag) EXPECT_NEAR(ba.per_lag.at(-k), r, 1e-10);
  }
}

TEST(LaggedCorrelation, MinOverlapAndErrors) {
  auto s = sim::to_series({1, 2, 3, 5, 4, 6}, "s");
  auto res = lagged_correlation(s, s, -3, 3, 5);
  EXPECT_EQ(res.per_lag.size(), 3u);  // |k| <= 1 leave at least 5 pairs
  EXPECT_EQ(res.best_lag, 0);
  EXPECT_THROW(lagged_correlation(s, s, 10, 12, 2), InsufficientData);
  EXPECT_THROW(lagged_correlation(s, s, 2, 1, 2), PreconditionError);
}

// ---------------------------------------------------------------------------
// F distribution
// ---------------------------------------------------------------------------

TEST(FDistribution, ReferenceValues) {
  for (const auto& r : kFReference) {
    const double got = f_distribution_sf(r.f, r.d1, r.d2);
    EXPECT_NEAR(got, r.sf, 1e-10 * r.sf) << "F=" << r.f << " d1=" << r.d1 << " d2=" << r.d2;
  }
}

TEST(FDistribution, MatchesSeriesOracle) {
  for (double d1 : {1.0, 2.0, 3.0, 6.0, 12.0, 24.0})
    for (double d2 : {1.0, 4.0, 10.0, 30.0, 175.0})
      for (double f : {0.05, 0.3, 0.9, 1.0, 1.7, 3.0, 8.0, 25.0})
        EXPECT_NEAR(f_distribution_sf(f, d1, d2), static_cast<double>(oracle::f_sf(f, d1, d2)), 1e-12)
            << f << " " << d1 << " " << d2;
}

TEST(FDistribution, EdgesAndMonotonicity) {
  EXPECT_EQ(f_distribution_sf(0.0, 3, 10), 1.0);
  EXPECT_EQ(f_distribution_sf(-1.0, 3, 10), 1.0);
  EXPECT_EQ(f_distribution_sf(std::numeric_limits<double>::infinity(), 3, 10), 0.0);
  EXPECT_THROW(f_distribution_sf(1.0, 0, 10), PreconditionError);
  double prev = 1.0;
  for (double f = 0.01; f < 30; f *= 1.3) {
    double p = f_distribution_sf(f, 4, 40);
    EXPECT_LE(p, prev);
    prev = p;
  }
  EXPECT_NEAR(regularized_incomplete_beta(2, 3, 0.4), 0.5248, 1e-12);  // 1 - 0.6^4 - 4*0.4*0.6^3
}

// ---------------------------------------------------------------------------
// Granger causality
// ---------------------------------------------------------------------------

TEST(Granger, DetectsSimulatedCause) {
  auto d = sim::ar_with_cause(200, 0.8, 7);
  auto g = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 2);
  EXPECT_LT(g.p_value, 0.01);
  EXPECT_EQ(g.n_effective, 198u);
  EXPECT_EQ(g.cause, "x");
  EXPECT_EQ(g.effect, "y");
}

TEST(Granger, DetectsDelayedCauseAtLagTwelve) {
  auto d = sim::delayed_cause(200, 0.9, 3, 1);
  auto g = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 12);
  EXPECT_LT(g.p_value, 0.01);
  EXPECT_EQ(g.n_effective, 188u);
  auto control = sim::delayed_cause(200, 0.0, 3, 1);
  EXPECT_GT(granger_test(sim::to_series(control.x, "x"), sim::to_series(control.y, "y"), 12).p_value, 0.05);
}

// Under the null the 5% test should reject about 5% of independent pairs.
TEST(Granger, SizeUnderNullNearNominal) {
  int rejected = 0;
  constexpr int kTrials = 400;
  for (std::uint64_t seed = 1; seed <= kTrials; ++seed) {
    auto c = sim::delayed_cause(200, 0.0, 3, seed);
    rejected += granger_test(sim::to_series(c.x, "x"), sim::to_series(c.y, "y"), 12).p_value < 0.05;
  }
  const double rate = static_cast<double>(rejected) / kTrials;
  EXPECT_GT(rate, 0.017);  // 3 binomial standard deviations around 0.05
  EXPECT_LT(rate, 0.083);
}

TEST(Granger, IndependentControlNotRejected) {
  auto d = sim::ar_with_cause(200, 0.0, 7);
  auto g = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 2);
  EXPECT_GT(g.p_value, 0.05);
}

TEST(Granger, FMatchesNormalEquationOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u})
    for (int L : {1, 2, 4}) {
      auto d = sim::ar_with_cause(150, seed % 2 ? 0.4 : 0.0, seed);
      auto g = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), L);
      const double ref = static_cast<double>(oracle::granger_f(d.x, d.y, L));
      EXPECT_NEAR(g.f_value, ref, 1e-8 * std::max(1.0, std::abs(ref))) << seed << " L=" << L;
      EXPECT_NEAR(g.p_value, static_cast<double>(oracle::f_sf(ref, L, 150.0 - L - 2.0 * L - 1.0)), 1e-8);
    }
}

TEST(Granger, OwnLagProcessWithIndependentCauseHasSmallF) {
  auto d = sim::ar_with_cause(200, 0.0, 11);
  auto g = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 1);
  EXPECT_LT(g.f_value, 3.0);
  EXPECT_GE(g.f_value, 0.0);
  EXPECT_GE(g.ssr_restricted, g.ssr_unrestricted);
}

TEST(Granger, InvariantToScalingAndShift) {
  auto d = sim::ar_with_cause(120, 0.5, 13);
  auto base = granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 3);
  std::vector<double> x2, y2;
  for (double v : d.x) x2.push_back(1000.0 * v - 7.0);
  for (double v : d.y) y2.push_back(0.01 * v + 3.0);
  auto scaled = granger_test(sim::to_series(x2, "x"), sim::to_series(y2, "y"), 3);
  EXPECT_NEAR(scaled.f_value, base.f_value, 1e-8 * base.f_value);
}

TEST(Granger, GapsDropRows) {
  auto d = sim::ar_with_cause(60, 0.5, 17);
  auto x = sim::to_series(d.x, "x");
  TimeSeries y("y");
  for (std::size_t i = 0; i < d.y.size(); ++i)
    if (i != 30) y.insert(YearMonth(2000, 1) + static_cast<int>(i), d.y[i]);
  auto g = granger_test(x, y, 2);
  EXPECT_EQ(g.n_effective, 58u - 3u);  // month 30 is missing as target and as lag for the next two
}

TEST(Granger, InsufficientAndSingular) {
  auto d = sim::ar_with_cause(7, 0.5, 19);
  EXPECT_THROW(granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 2), InsufficientData);
  EXPECT_THROW(granger_test(sim::to_series(d.x, "x"), sim::to_series(d.y, "y"), 0), PreconditionError);
  auto e = sim::ar_with_cause(80, 0.5, 23);
  std::vector<double> constant(e.x.size(), 4.0);
  EXPECT_THROW(granger_test(sim::to_series(constant, "c"), sim::to_series(e.y, "y"), 2), SingularDesign);
  EXPECT_THROW(granger_test(sim::to_series(e.y, "same"), sim::to_series(e.y, "y"), 2), SingularDesign);
}
