#ifndef EFFMASS_TIMESERIES_HPP
#define EFFMASS_TIMESERIES_HPP

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

/** @file effmass/timeseries.hpp
    @brief Sampled response of a wavepacket, common to all engines.
 */

namespace effmass {

enum class Provenance { first_order, full_numeric, baseline };

inline const char* to_string(Provenance p) noexcept
{
  switch (p) {
  case Provenance::first_order: return "firstorder";
  case Provenance::full_numeric: return "splitstep";
  case Provenance::baseline: return "baseline";
  }
  return "unknown";
}

/// Time-dependent effective mass is reported only where the acceleration
/// exceeds this fraction of the force.
inline constexpr double mass_floor = 1e-3;

struct TimeSeries
{
  Provenance provenance = Provenance::first_order;
  std::vector<double> t;           // units of hbar/E_R
  std::vector<double> a;           // acceleration, units of E_R v_R / hbar
  std::vector<double> v;           // velocity, units of v_R
  std::vector<double> mstar;       // m*(t)/m, NaN where undefined
  std::vector<double> a_baseline;  // band effective-mass prediction
  std::vector<double> v_baseline;
  std::vector<std::vector<double>> populations;  // [band][sample], empty when not computed
  std::vector<std::pair<std::string, std::string>> metadata;

  std::size_t size() const noexcept { return t.size(); }

  void annotate(std::string key, std::string value) { metadata.emplace_back(std::move(key), std::move(value)); }

  const std::string* find(const std::string& key) const
  {
    for (const auto& [k, v] : metadata)
      if (k == key)
        return &v;
    return nullptr;
  }

  void fill_effective_mass(double force)
  {
    mstar.assign(a.size(), std::numeric_limits<double>::quiet_NaN());
    if (force == 0.0)
      return;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i]) >= mass_floor * std::abs(force))
        mstar[i] = force / a[i];
  }
};

/// Cumulative trapezoid of `y` over the uniform or non-uniform samples `t`.
inline std::vector<double> cumulative_trapezoid(const std::vector<double>& t, const std::vector<double>& y)
{
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t i = 1; i < y.size(); ++i)
    out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
  return out;
}

} // namespace effmass

#endif
