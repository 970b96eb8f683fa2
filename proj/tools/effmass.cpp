// effmass: run lattice wavepacket scenarios from the command line.
//
// Exit codes: 0 success, 1 usage, 2 configuration, 3 numerical failure, 4 I/O.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "effmass/effmass.hpp"

namespace {

enum ExitCode { ok = 0, usage = 1, config = 2, numerical = 3, io = 4 };

std::filesystem::path default_output_dir()
{
  if (const char* env = std::getenv("EFFMASS_OUTPUT_DIR"); env && *env)
    return env;
  return ".";
}

effmass::RunConfig read_config_file(const std::string& path)
{
  std::ifstream f(path);
  if (!f)
    throw effmass::ConfigError("cannot read configuration '" + path + "'");
  std::ostringstream text;
  text << f.rdbuf();
  try {
    return effmass::load_config(text.str());
  } catch (const effmass::ConfigError& e) {
    throw effmass::ConfigError(path + ": " + e.what());
  }
}

void print_deviation(const effmass::Deviation& d, std::ostream& os)
{
  using effmass::format_number;
  os << "samples = " << d.samples << '\n'
     << "max_abs_dv_over_vR = " << format_number(d.max_velocity) << '\n'
     << "rms_dv_over_vR = " << format_number(d.rms_velocity) << '\n'
     << "max_abs_da_over_F = " << format_number(d.max_acceleration) << '\n'
     << "rms_da_over_F = " << format_number(d.rms_acceleration) << '\n';
  if (d.velocity_peak) {
    const auto& p = *d.velocity_peak;
    os << "dv_dominant_angular_frequency = " << format_number(p.angular_frequency) << '\n'
       << "dv_dominant_period = " << format_number(2.0 * std::numbers::pi / p.angular_frequency) << '\n'
       << "dv_frequency_bin_width = " << format_number(p.bin_width) << '\n';
  }
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Transient effective-mass dynamics of a wavepacket in a driven optical lattice"};
  app.require_subcommand(1);

  auto* presets_cmd = app.add_subcommand("presets", "List the built-in scenarios");

  auto* bands_cmd = app.add_subcommand("bands", "Band energies along a quasimomentum path as CSV");
  double band_s = 10.0;
  int band_cutoff = 32;
  std::size_t band_count = 4;
  std::size_t band_points = 201;
  double k_min = -1.0;
  double k_max = 1.0;
  std::string band_out = "-";
  bands_cmd->add_option("-s,--s", band_s, "Lattice depth in recoil energies")->check(CLI::NonNegativeNumber);
  bands_cmd->add_option("--cutoff", band_cutoff, "Plane waves j = -cutoff..cutoff")->check(CLI::PositiveNumber);
  bands_cmd->add_option("--count", band_count, "Number of bands")->check(CLI::PositiveNumber);
  bands_cmd->add_option("--points", band_points, "Number of k points")->check(CLI::Range(2, 1000000));
  bands_cmd->add_option("--k-min", k_min, "First k in units of k_L");
  bands_cmd->add_option("--k-max", k_max, "Last k in units of k_L");
  bands_cmd->add_option("-o,--out", band_out, "Output file, '-' for stdout");

  auto* run_cmd = app.add_subcommand("run", "Run a preset or configuration file");
  std::string preset_name;
  std::string config_path;
  std::string engines = "firstorder,baseline";
  std::string out_dir;
  bool populations = false;
  bool gnuplot = false;
  bool emit_bands = false;
  std::optional<std::size_t> grid_cells, pts_per_cell, samples;
  std::optional<double> dt, duration;
  run_cmd->add_option("preset", preset_name, "Preset name (see 'presets')");
  run_cmd->add_option("-c,--config", config_path, "Configuration file of key = value lines");
  run_cmd->add_option("-e,--engines", engines, "Comma-separated subset of firstorder,splitstep,baseline")
      ->capture_default_str();
  run_cmd->add_option("-o,--out", out_dir, "Output directory (default $EFFMASS_OUTPUT_DIR or .)");
  run_cmd->add_flag("-p,--populations", populations, "Compute band populations");
  run_cmd->add_flag("--gnuplot", gnuplot, "Also write a gnuplot script");
  run_cmd->add_flag("--bands", emit_bands, "Also write the band structure of the lattice");
  run_cmd->add_option("--grid-cells", grid_cells, "Split-step box size in lattice cells (power of two)");
  run_cmd->add_option("--pts-per-cell", pts_per_cell, "Split-step grid points per cell (power of two)");
  run_cmd->add_option("--dt", dt, "Split-step time step in units of hbar/E_R");
  run_cmd->add_option("--duration", duration, "Run length in Bloch periods");
  run_cmd->add_option("--samples", samples, "Minimum number of output samples");

  auto* compare_cmd = app.add_subcommand("compare", "Deviation between two series files");
  std::string first_file, second_file;
  bool resample = false;
  compare_cmd->add_option("first", first_file, "Reference series CSV")->required();
  compare_cmd->add_option("second", second_file, "Series CSV compared against the reference")->required();
  compare_cmd->add_flag("--resample", resample, "Interpolate the second series onto the first time grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    if (presets_cmd->parsed()) {
      for (const auto& p : effmass::preset_catalog)
        std::cout << p.name << "\t" << p.description << '\n';
      return ok;
    }

    if (bands_cmd->parsed()) {
      effmass::LatticeSpec spec{band_s, band_cutoff, 2 * band_cutoff + 1};
      spec.validate();
      if (band_out == "-") {
        effmass::write_band_csv(std::cout, spec, k_min, k_max, band_points, band_count);
        return ok;
      }
      std::ostringstream os;
      effmass::write_band_csv(os, spec, k_min, k_max, band_points, band_count);
      effmass::detail::write_text(band_out, os.str());
      std::cout << band_out << '\n';
      return ok;
    }

    if (compare_cmd->parsed()) {
      auto read = [](const std::string& path) {
        std::ifstream f(path);
        if (!f)
          throw effmass::IoError("cannot read '" + path + "'");
        try {
          return effmass::read_series_csv(f);
        } catch (const effmass::IoError& e) {
          throw effmass::IoError(path + ": " + e.what());
        }
      };
      const auto a = read(first_file);
      const auto b = read(second_file);
      print_deviation(effmass::compare_series(a, b, resample), std::cout);
      return ok;
    }

    if (run_cmd->parsed()) {
      if (preset_name.empty() == config_path.empty()) {
        std::cerr << "run: give either a preset name or --config\n";
        return usage;
      }
      effmass::RunRequest req;
      req.config = config_path.empty() ? effmass::preset_config(preset_name) : read_config_file(config_path);
      auto& st = req.config.settings;
      if (grid_cells) st.grid_cells = *grid_cells;
      if (pts_per_cell) st.pts_per_cell = *pts_per_cell;
      if (dt) st.dt = *dt;
      if (samples) st.samples = *samples;
      if (duration) {
        req.config.physical.duration = *duration;
        st.duration_scaled.reset();
      }
      req.engines = effmass::parse_engines(engines);
      req.out_dir = out_dir.empty() ? default_output_dir() : std::filesystem::path(out_dir);
      req.populations = populations;
      req.gnuplot = gnuplot;

      const auto outcome = effmass::execute(req);
      for (const auto& r : outcome.results) {
        std::cout << r.file.string() << '\n';
        if (const auto* w = r.series.find("warning"))
          std::cerr << "warning (" << effmass::engine_name(r.engine) << "): " << *w << '\n';
      }
      std::cout << outcome.summary_file.string() << '\n';
      if (outcome.gnuplot_file)
        std::cout << outcome.gnuplot_file->string() << '\n';
      if (emit_bands) {
        const auto& st2 = req.config.settings;
        effmass::LatticeSpec spec{req.config.physical.s, st2.cutoff, st2.n_bands};
        const auto path = req.out_dir / (req.config.physical.name + "_bands.csv");
        std::ostringstream os;
        effmass::write_band_csv(os, spec, -1.0, 1.0, 201, std::min<std::size_t>(8, spec.n_bands));
        effmass::detail::write_text(path, os.str());
        std::cout << path.string() << '\n';
      }
      for (const auto& [k, v] : outcome.summary)
        std::cout << "  " << k << " = " << v << '\n';
      return ok;
    }
  } catch (const effmass::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return config;
  } catch (const effmass::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return numerical;
  } catch (const effmass::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return io;
  }
  return usage;
}
