#ifndef EFFMASS_CSV_HPP
#define EFFMASS_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "effmass/bands.hpp"
#include "effmass/errors.hpp"
#include "effmass/scenario.hpp"
#include "effmass/timeseries.hpp"

/** @file effmass/csv.hpp
    @brief Series and band-structure files.

    Layout: comment lines `# key = value` (the resolved configuration, scaled
    parameters and engine metadata), one header row, then data rows. Numbers
    are written with 17 significant digits so they read back bit-exactly;
    absent values are written as `nan`.
 */

namespace effmass {

inline std::string format_number(double x)
{
  if (std::isnan(x))
    return "nan";
  if (std::isinf(x))
    return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_number(std::string_view text)
{
  if (text == "nan" || text == "-nan")
    return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf")
    return std::numeric_limits<double>::infinity();
  if (text == "-inf")
    return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end)
    throw IoError("malformed number '" + std::string(text) + "'");
  return v;
}

/// Unit information written alongside a series.
struct SeriesContext
{
  std::string echo;           // resolved configuration, key = value per line
  ScaledParams scaled;
};

inline void write_series_csv(std::ostream& os, const TimeSeries& ts, const SeriesContext& ctx)
{
  const auto& sp = ctx.scaled;
  os << "# effmass series\n";
  os << "# provenance = " << to_string(ts.provenance) << '\n';
  std::istringstream echo(ctx.echo);
  for (std::string line; std::getline(echo, line);)
    if (!line.empty())
      os << "# " << line << '\n';
  os << "# force = " << format_number(sp.force) << '\n'
     << "# recoil_energy_J = " << format_number(sp.recoil_energy) << '\n'
     << "# recoil_velocity_m_per_s = " << format_number(sp.recoil_velocity) << '\n'
     << "# time_unit_s = " << format_number(sp.time_unit) << '\n'
     << "# bloch_period_s = " << format_number(sp.bloch_period.value_or(std::numeric_limits<double>::quiet_NaN()))
     << '\n';
  for (const auto& [k, v] : ts.metadata)
    os << "# " << k << " = " << v << '\n';

  os << "t_scaled,t_SI,a_scaled,v_scaled,v_over_vR,a_baseline,v_baseline,mstar_over_m";
  for (std::size_t b = 0; b < ts.populations.size(); ++b)
    os << ",pop_" << b;
  os << '\n';

  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto at = [nan](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : nan; };
  std::string line;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    line.clear();
    line += format_number(ts.t[i]);
    line += ',';
    line += format_number(ts.t[i] * sp.time_unit);
    line += ',';
    line += format_number(at(ts.a, i));
    line += ',';
    line += format_number(at(ts.v, i));
    line += ',';
    line += format_number(at(ts.v, i));
    line += ',';
    line += format_number(at(ts.a_baseline, i));
    line += ',';
    line += format_number(at(ts.v_baseline, i));
    line += ',';
    line += format_number(at(ts.mstar, i));
    for (const auto& pop : ts.populations) {
      line += ',';
      line += format_number(at(pop, i));
    }
    line += '\n';
    os << line;
  }
}

/// A CSV file read back: metadata, header names and columns.
struct SeriesFile
{
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  const std::string* meta(std::string_view key) const
  {
    for (const auto& [k, v] : metadata)
      if (k == key)
        return &v;
    return nullptr;
  }

  double meta_number(std::string_view key) const
  {
    const auto* v = meta(key);
    if (!v)
      throw IoError("missing metadata '" + std::string(key) + "'");
    return parse_number(*v);
  }

  bool has(std::string_view name) const
  {
    for (const auto& n : names)
      if (n == name)
        return true;
    return false;
  }

  const std::vector<double>& column(std::string_view name) const
  {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name)
        return columns[i];
    throw IoError("missing column '" + std::string(name) + "'");
  }

  std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
};

inline SeriesFile read_series_csv(std::istream& is)
{
  SeriesFile f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (line[0] == '#') {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos)
        f.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
      continue;
    }
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos)
        break;
      rest.remove_prefix(comma + 1);
    }
    if (f.names.empty()) {
      for (auto field : fields)
        f.names.emplace_back(field);
      f.columns.resize(f.names.size());
      continue;
    }
    if (fields.size() != f.names.size())
      throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(f.names.size())
                    + " fields, found " + std::to_string(fields.size()));
    for (std::size_t i = 0; i < fields.size(); ++i)
      f.columns[i].push_back(parse_number(fields[i]));
  }
  if (f.names.empty())
    throw IoError("no header row found");
  return f;
}

/// Band energies along a k path: columns k_scaled, E_0..E_{n-1}.
inline void write_band_csv(std::ostream& os, const LatticeSpec& spec, double k_lo, double k_hi, std::size_t points,
                           std::size_t bands)
{
  if (points < 2)
    throw ConfigError("band dump needs at least two k points");
  if (bands == 0 || bands > static_cast<std::size_t>(spec.n_bands))
    throw ConfigError("band dump: band count must lie in [1, n_bands]");
  os << "# effmass bands\n"
     << "# s = " << format_number(spec.s) << '\n'
     << "# cutoff = " << spec.cutoff << '\n'
     << "k_scaled";
  for (std::size_t b = 0; b < bands; ++b)
    os << ",E_" << b;
  os << '\n';
  for (std::size_t i = 0; i < points; ++i) {
    const double k = k_lo + (k_hi - k_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    const BlochSolution sol = solve_bloch(spec, k);
    os << format_number(k);
    for (std::size_t b = 0; b < bands; ++b)
      os << ',' << format_number(sol.energy(b));
    os << '\n';
  }
}

} // namespace effmass

#endif
