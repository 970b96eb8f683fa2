#ifndef EFFMASS_SCENARIO_HPP
#define EFFMASS_SCENARIO_HPP

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "effmass/constants.hpp"
#include "effmass/errors.hpp"
#include "effmass/numeric.hpp"

/** @file effmass/scenario.hpp
    @brief Physical inputs, their conversion to lattice units, the preset
           catalog and the key = value run configuration format.

    Lattice units: lengths in 1/k_L with k_L = pi/b, energies in the recoil
    energy E_R = hbar^2 k_L^2 / 2m, times in hbar/E_R, velocities in the recoil
    velocity v_R = hbar k_L / m. The force enters only through
    F = b F_phys / (pi E_R), the energy drop over one cell in units of pi E_R.
 */

namespace effmass {

struct PhysicalParams
{
  std::string name = "custom";
  double particle_mass = 0.0;         // kg
  double lattice_constant = 0.0;      // m
  double s = 0.0;                     // potential depth in units of E_R
  double lattice_acceleration = 0.0;  // m/s^2, force = mass * acceleration
  int band = 0;                       // initially occupied band
  double sigma = 0.2;                 // momentum width in units of k_L
  double duration = 1.0;              // run length in Bloch periods
};

struct ScaledParams
{
  double s = 0.0;
  double force = 0.0;                      // dimensionless force
  double sigma = 0.0;
  int band = 0;
  double recoil_energy = 0.0;              // J
  double lattice_wavenumber = 0.0;         // k_L, 1/m
  double recoil_velocity = 0.0;            // m/s
  double time_unit = 0.0;                  // hbar / E_R, s
  std::optional<double> bloch_period;      // s, absent without force
  std::optional<double> bloch_period_scaled;
};

/// Lattice-unit conversion. Pure function of its input.
inline ScaledParams scale(const PhysicalParams& p)
{
  using namespace constants;
  if (!(p.particle_mass > 0) || !std::isfinite(p.particle_mass))
    throw DomainError("particle_mass", "must be finite and > 0");
  if (!(p.lattice_constant > 0) || !std::isfinite(p.lattice_constant))
    throw DomainError("lattice_constant", "must be finite and > 0");
  if (!(p.lattice_acceleration >= 0) || !std::isfinite(p.lattice_acceleration))
    throw DomainError("lattice_acceleration", "must be finite and >= 0");
  if (!(p.s >= 0) || !std::isfinite(p.s))
    throw DomainError("s", "must be finite and >= 0");
  if (!(p.sigma > 0 && p.sigma < 1))
    throw DomainError("sigma", "must lie in (0, 1)");
  if (p.band < 0)
    throw DomainError("band", "must be >= 0");

  const double m = p.particle_mass;
  const double b = p.lattice_constant;
  ScaledParams out;
  out.s = p.s;
  out.sigma = p.sigma;
  out.band = p.band;
  out.lattice_wavenumber = pi / b;
  out.recoil_energy = hbar * hbar * out.lattice_wavenumber * out.lattice_wavenumber / (2.0 * m);
  out.recoil_velocity = hbar * out.lattice_wavenumber / m;
  out.time_unit = hbar / out.recoil_energy;
  // the acceleration multiplies last so that the force is exactly linear in it
  const double coefficient = 2.0 * m * m * b * b * b / (pi * pi * pi * hbar * hbar);
  out.force = coefficient * p.lattice_acceleration;
  if (out.force > 0) {
    out.bloch_period = planck / ((b * m) * p.lattice_acceleration);
    out.bloch_period_scaled = 2.0 / out.force;
  }
  return out;
}

/// Acceleration produced by an electric field on a charge e of mass `mass`.
inline double field_acceleration(double field_V_per_m, double mass)
{
  return constants::elementary_charge * field_V_per_m / mass;
}

struct PresetInfo
{
  std::string_view name;
  std::string_view description;
};

inline constexpr std::array<PresetInfo, 8> preset_catalog{{
  {"electron-s10-N2", "electron, b = 0.5 nm, s = 10, field 1.7e7 V/m, band 2, sigma 0.2"},
  {"electron-s10-N0", "electron, b = 0.5 nm, s = 10, field 1.7e7 V/m, band 0, sigma 0.2"},
  {"rb-s7", "Rb-87, b = 390 nm, s = 7, a_L = 24.2 m/s^2, band 0, sigma 0.2"},
  {"rb-s7-strong", "Rb-87, b = 390 nm, s = 7, a_L = 72.6 m/s^2, band 0, sigma 0.2"},
  {"rb-s13", "Rb-87, b = 390 nm, s = 13, a_L = 24.2 m/s^2, band 0, sigma 0.2"},
  {"na-s7-narrow", "Na-23, b = 295 nm, s = 7, a_L = 800 m/s^2, band 0, sigma 0.004"},
  {"na-s13-N1", "Na-23, b = 295 nm, s = 13, a_L = 800 m/s^2, band 1, sigma 0.01"},
  {"na-s14", "Na-23, b = 295 nm, s = 14, a_L = 1700 m/s^2, band 0, sigma 0.01"},
}};

inline std::string preset_names()
{
  std::string out;
  for (const auto& p : preset_catalog) {
    if (!out.empty())
      out += ", ";
    out += p.name;
  }
  return out;
}

inline PhysicalParams preset(std::string_view name)
{
  using namespace constants;
  const double rb = rb87_mass_amu * atomic_mass_unit;
  const double na = na23_mass_amu * atomic_mass_unit;
  const double electron_field = 1.7e7;

  auto make = [&](double mass, double b_nm, double s, double accel, int band, double sigma, double duration) {
    PhysicalParams p;
    p.name = std::string(name);
    p.particle_mass = mass;
    p.lattice_constant = b_nm * 1e-9;
    p.s = s;
    p.lattice_acceleration = accel;
    p.band = band;
    p.sigma = sigma;
    p.duration = duration;
    return p;
  };

  if (name == "electron-s10-N2")
    return make(electron_mass, 0.5, 10, field_acceleration(electron_field, electron_mass), 2, 0.2, 0.05);
  if (name == "electron-s10-N0")
    return make(electron_mass, 0.5, 10, field_acceleration(electron_field, electron_mass), 0, 0.2, 0.05);
  if (name == "rb-s7")
    return make(rb, 390, 7, 24.2, 0, 0.2, 1.0);
  if (name == "rb-s7-strong")
    return make(rb, 390, 7, 72.6, 0, 0.2, 1.0);
  if (name == "rb-s13")
    return make(rb, 390, 13, 24.2, 0, 0.2, 1.0);
  if (name == "na-s7-narrow")
    return make(na, 295, 7, 800, 0, 0.004, 1.0);
  if (name == "na-s13-N1")
    return make(na, 295, 13, 800, 1, 0.01, 1.0);
  if (name == "na-s14")
    return make(na, 295, 14, 1700, 0, 0.01, 1.0);
  throw ConfigError("unknown preset '" + std::string(name) + "'; valid names: " + preset_names());
}

/// Numerical settings shared by the engines.
struct SolverSettings
{
  int cutoff = 32;                    // plane waves j = -cutoff..cutoff
  int n_bands = 16;                   // bands kept in the band solver
  std::size_t samples = 4096;         // minimum number of output time samples
  std::size_t grid_cells = 0;         // split-step box size in cells; 0 picks from sigma
  std::size_t pts_per_cell = 32;
  double dt = 1e-3;                   // split-step time step, units of hbar/E_R
  int projection_bands = 8;           // bands used for split-step populations
  double max_duration = 1.25;         // Bloch periods
  bool convergence_gate = true;       // rerun split-step at 2 dt and compare
  std::optional<double> duration_scaled;  // run length in hbar/E_R; overrides duration
};

struct RunConfig
{
  PhysicalParams physical;
  SolverSettings settings;
};

/// Run length in units of hbar/E_R.
inline double horizon(const ScaledParams& sp, const PhysicalParams& p, const SolverSettings& settings)
{
  if (settings.duration_scaled)
    return *settings.duration_scaled;
  if (!sp.bloch_period_scaled)
    throw ConfigError("without a force the run length must be given as duration_scaled");
  return p.duration * *sp.bloch_period_scaled;
}

/// Range checks shared by presets and configuration files.
inline void validate(const RunConfig& cfg)
{
  const auto& p = cfg.physical;
  const auto& st = cfg.settings;
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(p.particle_mass > 0)) fail("mass must be > 0");
  if (!(p.lattice_constant > 0)) fail("lattice_nm must be > 0");
  if (!(p.s >= 0) || !std::isfinite(p.s)) fail("s must be >= 0");
  if (!(p.lattice_acceleration >= 0) || !std::isfinite(p.lattice_acceleration)) fail("accel must be >= 0");
  if (!(p.sigma > 0 && p.sigma < 1)) fail("sigma must lie in (0, 1)");
  if (st.cutoff < 1) fail("cutoff must be >= 1");
  if (st.n_bands < 6 || st.n_bands > 2 * st.cutoff + 1) fail("n_bands must lie in [6, 2*cutoff+1]");
  if (p.band < 0 || p.band > st.n_bands - 6) fail("band must lie in [0, n_bands-6]");
  if (!(p.duration > 0 && p.duration <= st.max_duration))
    fail("duration_bloch must lie in (0, " + std::to_string(st.max_duration) + "]");
  if (st.duration_scaled && !(*st.duration_scaled > 0)) fail("duration_scaled must be > 0");
  if (st.samples < 16) fail("samples must be >= 16");
  if (st.grid_cells != 0 && (!is_power_of_two(st.grid_cells) || st.grid_cells < 4))
    fail("grid_cells must be a power of two >= 4 (or 0 for automatic)");
  if (!is_power_of_two(st.pts_per_cell) || st.pts_per_cell < 4) fail("pts_per_cell must be a power of two >= 4");
  if (!(st.dt > 0) || !std::isfinite(st.dt)) fail("dt must be > 0");
  if (st.projection_bands < 1 || st.projection_bands > st.n_bands) fail("projection_bands must lie in [1, n_bands]");
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(std::string_view text, std::string_view key, int line)
{
  double value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value))
    throw ConfigError("line " + std::to_string(line) + ": '" + std::string(key) + "' expects a number, got '"
                      + std::string(text) + "'");
  return value;
}

inline long long parse_integer(std::string_view text, std::string_view key, int line)
{
  long long value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("line " + std::to_string(line) + ": '" + std::string(key) + "' expects an integer, got '"
                      + std::string(text) + "'");
  return value;
}

inline std::string format_real(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace detail

/// Parses a `key = value` document. Blank lines and text after '#' are ignored.
///
/// Physical keys: mass_amu | mass_me, lattice_nm, s, accel | field_V_per_m,
/// band, sigma, duration_bloch | duration_scaled, name.
/// Solver keys: samples, cutoff, n_bands, projection_bands, grid_cells,
/// pts_per_cell, dt, gate.
inline RunConfig load_config(std::string_view text)
{
  RunConfig cfg;
  std::optional<double> mass_amu, mass_me, lattice_nm, s, accel, field;
  std::vector<std::string> seen;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    for (const auto& k : seen)
      if (k == key)
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    seen.emplace_back(key);

    auto real = [&] { return detail::parse_real(value, key, line_no); };
    auto integer = [&] { return detail::parse_integer(value, key, line_no); };
    auto count = [&] {
      const long long v = integer();
      if (v < 0)
        throw ConfigError("line " + std::to_string(line_no) + ": " + std::string(key) + " must be >= 0");
      return static_cast<std::size_t>(v);
    };

    if (key == "name") cfg.physical.name = std::string(value);
    else if (key == "mass_amu") mass_amu = real();
    else if (key == "mass_me") mass_me = real();
    else if (key == "lattice_nm") lattice_nm = real();
    else if (key == "s") s = real();
    else if (key == "accel") accel = real();
    else if (key == "field_V_per_m") field = real();
    else if (key == "band") cfg.physical.band = static_cast<int>(integer());
    else if (key == "sigma") cfg.physical.sigma = real();
    else if (key == "duration_bloch") cfg.physical.duration = real();
    else if (key == "duration_scaled") cfg.settings.duration_scaled = real();
    else if (key == "samples") cfg.settings.samples = count();
    else if (key == "cutoff") cfg.settings.cutoff = static_cast<int>(integer());
    else if (key == "n_bands") cfg.settings.n_bands = static_cast<int>(integer());
    else if (key == "projection_bands") cfg.settings.projection_bands = static_cast<int>(integer());
    else if (key == "grid_cells") cfg.settings.grid_cells = count();
    else if (key == "pts_per_cell") cfg.settings.pts_per_cell = count();
    else if (key == "dt") cfg.settings.dt = real();
    else if (key == "gate") cfg.settings.convergence_gate = integer() != 0;
    else
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }

  if (mass_amu && mass_me)
    throw ConfigError("give either mass_amu or mass_me, not both");
  if (!mass_amu && !mass_me)
    throw ConfigError("mass_amu required");
  if (!lattice_nm)
    throw ConfigError("lattice_nm required");
  if (!s)
    throw ConfigError("s required");
  if (accel && field)
    throw ConfigError("give either accel or field_V_per_m, not both");

  if (mass_amu && !(*mass_amu > 0)) throw ConfigError("mass_amu must be > 0");
  if (mass_me && !(*mass_me > 0)) throw ConfigError("mass_me must be > 0");
  if (!(*lattice_nm > 0)) throw ConfigError("lattice_nm must be > 0");
  if (!(*s >= 0)) throw ConfigError("s must be >= 0");
  if (accel && !(*accel >= 0)) throw ConfigError("accel must be >= 0");
  if (field && !(*field >= 0)) throw ConfigError("field_V_per_m must be >= 0");

  auto& p = cfg.physical;
  p.particle_mass = mass_amu ? *mass_amu * constants::atomic_mass_unit : *mass_me * constants::electron_mass;
  p.lattice_constant = *lattice_nm * 1e-9;
  p.s = *s;
  p.lattice_acceleration = field ? field_acceleration(*field, p.particle_mass) : accel.value_or(0.0);
  validate(cfg);
  return cfg;
}

/// Fully resolved configuration, one `key = value` per line, in a form that
/// `load_config` accepts back.
inline std::string echo(const RunConfig& cfg)
{
  using detail::format_real;
  const auto& p = cfg.physical;
  const auto& st = cfg.settings;
  std::ostringstream os;
  os << "name = " << p.name << '\n'
     << "mass_amu = " << format_real(p.particle_mass / constants::atomic_mass_unit) << '\n'
     << "lattice_nm = " << format_real(p.lattice_constant * 1e9) << '\n'
     << "s = " << format_real(p.s) << '\n'
     << "accel = " << format_real(p.lattice_acceleration) << '\n'
     << "band = " << p.band << '\n'
     << "sigma = " << format_real(p.sigma) << '\n'
     << "duration_bloch = " << format_real(p.duration) << '\n';
  if (st.duration_scaled)
    os << "duration_scaled = " << format_real(*st.duration_scaled) << '\n';
  os << "samples = " << st.samples << '\n'
     << "cutoff = " << st.cutoff << '\n'
     << "n_bands = " << st.n_bands << '\n'
     << "projection_bands = " << st.projection_bands << '\n'
     << "grid_cells = " << st.grid_cells << '\n'
     << "pts_per_cell = " << st.pts_per_cell << '\n'
     << "dt = " << format_real(st.dt) << '\n'
     << "gate = " << (st.convergence_gate ? 1 : 0) << '\n';
  return os.str();
}

inline RunConfig preset_config(std::string_view name)
{
  RunConfig cfg;
  cfg.physical = preset(name);
  validate(cfg);
  return cfg;
}

} // namespace effmass

#endif
