#ifndef EFFMASS_COMPARE_HPP
#define EFFMASS_COMPARE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "effmass/csv.hpp"
#include "effmass/errors.hpp"
#include "effmass/spectral.hpp"

namespace effmass {

/// Differences `second - first` between two series on a common time grid.
/// Velocities are in units of v_R, accelerations in units of the force.
struct Deviation
{
  std::size_t samples = 0;
  double max_velocity = 0.0;
  double rms_velocity = 0.0;
  double max_acceleration = 0.0;
  double rms_acceleration = 0.0;
  double force = 0.0;
  std::optional<SpectralPeak> velocity_peak;  // of the velocity deviation trace
  std::vector<double> t, dv, da;
};

namespace detail {

inline double interpolate(const std::vector<double>& x, const std::vector<double>& y, double at)
{
  auto it = std::upper_bound(x.begin(), x.end(), at);
  if (it == x.begin())
    return y.front();
  if (it == x.end())
    return y.back();
  const auto i = static_cast<std::size_t>(it - x.begin());
  const double w = (at - x[i - 1]) / (x[i] - x[i - 1]);
  return (1.0 - w) * y[i - 1] + w * y[i];
}

} // namespace detail

inline Deviation compare_series(const SeriesFile& first, const SeriesFile& second, bool resample = false)
{
  const auto& t1 = first.column("t_scaled");
  const auto& t2 = second.column("t_scaled");
  const auto& v1 = first.column("v_scaled");
  const auto& v2 = second.column("v_scaled");
  const auto& a1 = first.column("a_scaled");
  const auto& a2 = second.column("a_scaled");
  if (t1.empty() || t2.empty())
    throw IoError("compare: empty series");

  bool aligned = t1.size() == t2.size();
  for (std::size_t i = 0; aligned && i < t1.size(); ++i)
    aligned = std::abs(t1[i] - t2[i]) <= 1e-9 * std::max(1.0, std::abs(t1[i]));
  if (!aligned && !resample)
    throw ConfigError("compare: time grids differ; pass --resample to interpolate the second series");

  Deviation d;
  d.force = first.meta_number("force");
  const double scale = d.force != 0.0 ? 1.0 / d.force : 1.0;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    double vb = 0.0;
    double ab = 0.0;
    if (aligned) {
      vb = v2[i];
      ab = a2[i];
    }
    else {
      if (t1[i] < t2.front() || t1[i] > t2.back())
        continue;
      vb = detail::interpolate(t2, v2, t1[i]);
      ab = detail::interpolate(t2, a2, t1[i]);
    }
    const double dv = vb - v1[i];
    const double da = (ab - a1[i]) * scale;
    if (std::isnan(dv) || std::isnan(da))
      continue;
    d.t.push_back(t1[i]);
    d.dv.push_back(dv);
    d.da.push_back(da);
  }
  d.samples = d.t.size();
  if (d.samples == 0)
    throw IoError("compare: series share no samples");

  double sv = 0.0;
  double sa = 0.0;
  for (std::size_t i = 0; i < d.samples; ++i) {
    d.max_velocity = std::max(d.max_velocity, std::abs(d.dv[i]));
    d.max_acceleration = std::max(d.max_acceleration, std::abs(d.da[i]));
    sv += d.dv[i] * d.dv[i];
    sa += d.da[i] * d.da[i];
  }
  d.rms_velocity = std::sqrt(sv / static_cast<double>(d.samples));
  d.rms_acceleration = std::sqrt(sa / static_cast<double>(d.samples));
  if (d.samples >= 4 && d.max_velocity > 0)
    d.velocity_peak = dominant_frequency(d.t, d.dv);
  return d;
}

} // namespace effmass

#endif
