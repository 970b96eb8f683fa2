#ifndef EFFMASS_RUNNER_HPP
#define EFFMASS_RUNNER_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "effmass/csv.hpp"
#include "effmass/errors.hpp"
#include "effmass/firstorder.hpp"
#include "effmass/scenario.hpp"
#include "effmass/splitstep.hpp"

/** @file effmass/runner.hpp
    @brief One scenario, several engines, files on disk.
 */

namespace effmass {

enum class Engine { first_order, split_step, baseline };

inline const char* engine_name(Engine e) noexcept
{
  switch (e) {
  case Engine::first_order: return "firstorder";
  case Engine::split_step: return "splitstep";
  case Engine::baseline: return "baseline";
  }
  return "unknown";
}

inline Engine parse_engine(std::string_view name)
{
  if (name == "firstorder") return Engine::first_order;
  if (name == "splitstep") return Engine::split_step;
  if (name == "baseline") return Engine::baseline;
  throw ConfigError("unknown engine '" + std::string(name) + "'; valid engines: firstorder, splitstep, baseline");
}

/// Comma-separated engine list, duplicates removed, order preserved.
inline std::vector<Engine> parse_engines(std::string_view list)
{
  std::vector<Engine> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto item = detail::trim(list.substr(0, comma));
    if (!item.empty()) {
      const Engine e = parse_engine(item);
      if (std::find(out.begin(), out.end(), e) == out.end())
        out.push_back(e);
    }
    if (comma == std::string_view::npos)
      break;
    list.remove_prefix(comma + 1);
  }
  if (out.empty())
    throw ConfigError("at least one engine is required");
  return out;
}

struct RunRequest
{
  RunConfig config;
  std::vector<Engine> engines{Engine::first_order};
  std::filesystem::path out_dir = ".";
  bool populations = false;
  bool gnuplot = false;
};

struct EngineResult
{
  Engine engine;
  TimeSeries series;
  std::filesystem::path file;
};

struct RunOutcome
{
  ScaledParams scaled;
  Timescales scales;
  std::vector<EngineResult> results;
  std::vector<std::pair<std::string, std::string>> summary;
  std::filesystem::path summary_file;
  std::optional<std::filesystem::path> gnuplot_file;

  const TimeSeries* find(Engine e) const
  {
    for (const auto& r : results)
      if (r.engine == e)
        return &r.series;
    return nullptr;
  }
};

/// Output samples: at least `min_samples`, and at least `per_period` per
/// initial oscillation period.
inline std::vector<double> output_times(const Dynamics& dyn, const Timescales& ts, std::size_t min_samples,
                                        double per_period = 40.0)
{
  std::size_t count = std::max<std::size_t>(min_samples, 2);
  if (dyn.horizon > 0)
    count = std::max(count, static_cast<std::size_t>(std::ceil(per_period * dyn.horizon / ts.oscillation) + 1));
  std::vector<double> t(count);
  for (std::size_t i = 0; i < count; ++i)
    t[i] = dyn.horizon * static_cast<double>(i) / static_cast<double>(count - 1);
  return t;
}

/// Largest summed population outside `band`, over rows where it is known.
inline double max_leakage(const std::vector<std::vector<double>>& populations, std::size_t band)
{
  double worst = 0.0;
  if (populations.empty())
    return worst;
  for (std::size_t i = 0; i < populations.front().size(); ++i) {
    double sum = 0.0;
    bool known = true;
    for (std::size_t b = 0; b < populations.size(); ++b) {
      if (b == band)
        continue;
      if (std::isnan(populations[b][i])) {
        known = false;
        break;
      }
      sum += populations[b][i];
    }
    if (known)
      worst = std::max(worst, sum);
  }
  return worst;
}

inline double max_abs_difference(const std::vector<double>& a, const std::vector<double>& b)
{
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (!std::isnan(a[i]) && !std::isnan(b[i]))
      worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  f.close();
  if (!f)
    throw IoError("write to '" + path.string() + "' failed");
}

inline std::string gnuplot_script(const RunOutcome& out, const std::string& name)
{
  std::ostringstream os;
  os << "# gnuplot script for " << name << "\n"
     << "set datafile separator ','\n"
     << "set datafile missing 'nan'\n"
     << "set key autotitle columnhead\n"
     << "set multiplot layout 2,1\n"
     << "set xlabel 't / tau_B'\n";
  const double tb = out.scales.bloch.value_or(1.0);
  auto plot = [&](const char* column, const char* label) {
    os << "set ylabel '" << label << "'\n" << "plot ";
    bool first = true;
    for (const auto& r : out.results) {
      os << (first ? "" : ", ") << "'" << r.file.filename().string() << "' using ($1/" << format_number(tb)
         << "):\"" << column << "\" with lines title '" << engine_name(r.engine) << "'";
      first = false;
    }
    os << "\n";
  };
  plot("a_scaled", "a / (E_R v_R / hbar)");
  plot("v_scaled", "v / v_R");
  os << "unset multiplot\n";
  return os.str();
}

} // namespace detail

/// Runs the requested engines and writes `<name>_<engine>.csv` plus
/// `<name>_summary.txt` into the output directory.
inline RunOutcome execute(const RunRequest& req)
{
  validate(req.config);
  if (req.engines.empty())
    throw ConfigError("at least one engine is required");
  const auto& phys = req.config.physical;
  const auto& st = req.config.settings;

  RunOutcome out;
  out.scaled = scale(phys);
  const Dynamics dyn = make_dynamics(out.scaled, horizon(out.scaled, phys, st));
  const LatticeSpec spec{dyn.s, st.cutoff, st.n_bands};
  spec.validate();
  out.scales = timescales(spec, dyn);
  const auto times = output_times(dyn, out.scales, st.samples);

  std::error_code ec;
  std::filesystem::create_directories(req.out_dir, ec);
  if (!std::filesystem::is_directory(req.out_dir))
    throw IoError("output directory '" + req.out_dir.string() + "' cannot be created");

  auto wants = [&](Engine e) { return std::find(req.engines.begin(), req.engines.end(), e) != req.engines.end(); };

  // the split-step run is independent of the first-order one; run them side by side
  std::future<TimeSeries> split;
  if (wants(Engine::split_step)) {
    SplitStepOptions opt = splitstep_options(st, dyn.sigma);
    opt.populations = req.populations;
    split = std::async(std::launch::async, [dyn, opt, n = times.size()] { return run_splitstep(dyn, n, opt); });
  }

  // the first-order engine also provides the baseline columns for every series
  FirstOrderOptions fo;
  fo.cutoff = st.cutoff;
  fo.n_bands = st.n_bands;
  std::optional<FirstOrderResult> first;
  try {
    FirstOrderEngine engine(dyn, fo);
    first = engine.run(times, req.populations && wants(Engine::first_order));
  } catch (...) {
    if (split.valid())
      split.wait();
    throw;
  }

  for (Engine e : req.engines) {
    EngineResult r{e, {}, {}};
    if (e == Engine::first_order)
      r.series = first->series;
    else if (e == Engine::baseline)
      r.series = first->baseline;
    else {
      r.series = split.get();
      attach_baseline(r.series, first->series);
    }
    out.results.push_back(std::move(r));
  }

  const SeriesContext ctx{echo(req.config), out.scaled};
  for (auto& r : out.results) {
    r.file = req.out_dir / (phys.name + "_" + engine_name(r.engine) + ".csv");
    std::ostringstream os;
    write_series_csv(os, r.series, ctx);
    detail::write_text(r.file, os.str());
  }

  // summary
  using detail::format_real;
  auto& sum = out.summary;
  const auto& sc = out.scales;
  const double unit = out.scaled.time_unit;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto put = [&](std::string k, double v) { sum.emplace_back(std::move(k), format_number(v)); };
  sum.emplace_back("name", phys.name);
  put("s", dyn.s);
  put("force", dyn.force);
  put("sigma", dyn.sigma);
  sum.emplace_back("band", std::to_string(dyn.band));
  sum.emplace_back("partner_band", std::to_string(sc.partner));
  put("recoil_velocity_m_per_s", out.scaled.recoil_velocity);
  put("horizon_scaled", dyn.horizon);
  put("tau_B_scaled", sc.bloch.value_or(nan));
  put("tau_B_s", sc.bloch ? *sc.bloch * unit : nan);
  put("tau_osc_scaled", sc.oscillation);
  put("tau_osc_s", sc.oscillation * unit);
  put("tau_osc_over_tau_B", sc.oscillation_over_bloch.value_or(nan));
  put("reduced_mass", sc.reduced_mass.value_or(nan));
  put("tau_decay_scaled", sc.decay.value_or(nan));
  put("tau_decay_s", sc.decay ? *sc.decay * unit : nan);
  put("tau_decay_over_tau_B", sc.decay_over_bloch.value_or(nan));
  for (const auto& r : out.results) {
    const std::string prefix = std::string(engine_name(r.engine)) + ".";
    const auto& ts = r.series;
    put(prefix + "a0_over_F", dyn.force != 0.0 ? ts.a.front() / dyn.force : nan);
    put(prefix + "final_v", ts.v.back());
    put(prefix + "max_abs_v_minus_baseline", max_abs_difference(ts.v, ts.v_baseline));
    if (!ts.populations.empty())
      put(prefix + "max_population_leakage", max_leakage(ts.populations, static_cast<std::size_t>(dyn.band)));
  }
  if (const auto *a = out.find(Engine::first_order), *b = out.find(Engine::split_step); a && b)
    put("max_abs_v_firstorder_minus_splitstep", max_abs_difference(a->v, b->v));

  std::ostringstream os;
  for (const auto& [k, v] : sum)
    os << k << " = " << v << '\n';
  out.summary_file = req.out_dir / (phys.name + "_summary.txt");
  detail::write_text(out.summary_file, os.str());

  if (req.gnuplot) {
    out.gnuplot_file = req.out_dir / (phys.name + ".gp");
    detail::write_text(*out.gnuplot_file, detail::gnuplot_script(out, phys.name));
  }
  return out;
}

} // namespace effmass

#endif
