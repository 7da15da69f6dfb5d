#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"

namespace psi {

struct InsufficientData : Error {
  using Error::Error;
};

struct ZeroVariance : Error {
  using Error::Error;
};

/// Monthly series with strictly increasing months. Gaps are allowed.
class TimeSeries {
 public:
  TimeSeries() = default;
  explicit TimeSeries(std::string name) : name_(std::move(name)) {}

  TimeSeries(std::string name, const std::vector<std::pair<YearMonth, double>>& points) : name_(std::move(name)) {
    for (const auto& [m, v] : points) insert(m, v);
  }

  void insert(YearMonth m, double v) {
    if (!std::isfinite(v)) throw ValidationError("series " + name_ + ": non-finite value at " + m.str());
    if (!points_.emplace(m, v).second) throw ValidationError("series " + name_ + ": duplicate month " + m.str());
  }

  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  std::optional<double> at(YearMonth m) const {
    if (auto it = points_.find(m); it != points_.end()) return it->second;
    return std::nullopt;
  }

  const std::map<YearMonth, double>& points() const { return points_; }

  bool operator==(const TimeSeries&) const = default;

 private:
  std::string name_;
  std::map<YearMonth, double> points_;
};

/// CSV `month,value`. Blank values are skipped; duplicate months are an error.
inline TimeSeries load_series(const fs::path& path, std::string name = {}) {
  auto csv = read_csv(path);
  auto cm = csv.column("month"), cv = csv.column("value");
  if (cm == CsvTable::npos || cv == CsvTable::npos)
    throw ParseError(path.filename().string() + ": header must contain month,value", 1);
  TimeSeries s(name.empty() ? path.stem().string() : std::move(name));
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    try {
      auto v = trim(csv.rows[r][cv]);
      if (v.empty()) continue;
      double x = 0.0;
      auto res = std::from_chars(v.data(), v.data() + v.size(), x);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw ValidationError("invalid value \"" + std::string(v) + "\"");
      s.insert(YearMonth::parse(trim(csv.rows[r][cm])), x);
    } catch (const ValidationError& e) {
      throw ParseError(path.filename().string() + ": " + e.what(), csv.row_lines[r]);
    }
  }
  return s;
}

inline std::string series_csv(const TimeSeries& s) {
  std::string out = "month,value\n";
  for (const auto& [m, v] : s.points()) out += m.str() + "," + format_double(v) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

enum class SeriesTransform { Level, YoyPct, MomPct };

inline std::string to_string(SeriesTransform t) {
  switch (t) {
    case SeriesTransform::Level: return "level";
    case SeriesTransform::YoyPct: return "yoy_pct";
    case SeriesTransform::MomPct: return "mom_pct";
  }
  return "?";
}

inline SeriesTransform parse_transform(std::string_view s) {
  auto k = to_lower_ascii(trim(s));
  if (k == "level") return SeriesTransform::Level;
  if (k == "yoy_pct" || k == "yoy") return SeriesTransform::YoyPct;
  if (k == "mom_pct" || k == "mom") return SeriesTransform::MomPct;
  throw ConfigError("unknown series transform \"" + std::string(s) + "\"");
}

/// yoy_pct(t) = 100 * (x_t / x_{t-12} - 1); mom_pct uses t-1. Points without a
/// base month are omitted; a zero base is an error.
inline TimeSeries transform_series(const TimeSeries& s, SeriesTransform mode) {
  if (mode == SeriesTransform::Level) return s;
  const int lag = mode == SeriesTransform::YoyPct ? 12 : 1;
  TimeSeries out(s.name());
  for (const auto& [m, v] : s.points()) {
    auto base = s.at(m - lag);
    if (!base) continue;
    if (*base == 0.0) throw ValidationError("series " + s.name() + ": zero base value at " + (m - lag).str());
    out.insert(m, 100.0 * (v / *base - 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Product-moment correlation, two-pass for accuracy.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw PreconditionError("pearson: length mismatch");
  if (x.size() < 2) throw InsufficientData("pearson: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ZeroVariance("pearson: zero variance");
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

struct LagCorrelationResult {
  std::map<int, double> per_lag;
  std::map<int, std::size_t> n_overlap;
  int best_lag = 0;
  double best_r = 0.0;
};

/// r(k) = Pearson(a_t, b_{t+k}) over months where both exist, so k > 0 means
/// `a` leads `b`. Lags with fewer than `min_overlap` pairs are skipped. The
/// best lag maximizes r; ties go to the smallest |k|, then to positive k.
inline LagCorrelationResult lagged_correlation(const TimeSeries& a, const TimeSeries& b, int lag_min, int lag_max,
                                               std::size_t min_overlap) {
  if (lag_min > lag_max) throw PreconditionError("lagged_correlation: lag_min > lag_max");
  LagCorrelationResult res;
  std::vector<double> xs, ys;
  for (int k = lag_min; k <= lag_max; ++k) {
    xs.clear();
    ys.clear();
    for (const auto& [m, v] : a.points()) {
      if (auto w = b.at(m + k)) {
        xs.push_back(v);
        ys.push_back(*w);
      }
    }
    if (xs.size() < std::max<std::size_t>(min_overlap, 2)) continue;
    try {
      res.per_lag[k] = pearson(xs, ys);
    } catch (const ZeroVariance&) {
      throw ZeroVariance("lagged_correlation: zero variance in overlap window at lag " + std::to_string(k));
    }
    res.n_overlap[k] = xs.size();
  }
  if (res.per_lag.empty()) throw InsufficientData("lagged_correlation: no lag has sufficient overlap");

  bool first = true;
  for (const auto& [k, r] : res.per_lag) {
    auto better = [&] {
      if (first || r > res.best_r) return true;
      if (r < res.best_r) return false;
      if (std::abs(k) != std::abs(res.best_lag)) return std::abs(k) < std::abs(res.best_lag);
      return k > res.best_lag;
    };
    if (better()) {
      res.best_lag = k;
      res.best_r = r;
      first = false;
    }
  }
  return res;
}

}  // namespace psi
