#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cavspdc/circuit.hpp"
#include "cavspdc/config.hpp"
#include "cavspdc/error.hpp"
#include "cavspdc/io.hpp"
#include "cavspdc/metrics.hpp"
#include "cavspdc/resonances.hpp"
#include "cavspdc/spdc.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

// Artifact names inside an output directory.
namespace artifact {
inline constexpr const char* spectrum = "spectrum.csv";
inline constexpr const char* resonances = "resonances.json";
inline constexpr const char* jsa = "jsa.jsag";
inline constexpr const char* jsa_csv = "jsa.csv";
inline constexpr const char* report_json = "report.json";
inline constexpr const char* report_text = "report.txt";
inline constexpr const char* schmidt_modes = "schmidt_modes.csv";
inline constexpr const char* sweep = "sweep.csv";
}  // namespace artifact

namespace detail {

// Re-raises a library error with the stage name in front of its message.
template <typename F>
auto in_stage(const std::string& stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    std::string message = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    if (message.starts_with(prefix)) message.erase(0, prefix.size());
    if (message.starts_with("stage '")) throw;
    fail(e.kind(), "stage '" + stage + "': " + message);
  }
}

inline std::vector<double> uniform(double lo, double hi, double step) {
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = lo + step * static_cast<double>(k);
  return w;
}

inline AxisCavity cavity_on(const DeviceConfig& cfg, const Axis& axis) {
  const auto w = axis.values();
  return sample_axis(assemble_loop(cfg.netlist, cfg.band_models(), w));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline io::Spectrum simulate_spectrum(const DeviceConfig& cfg) {
  return detail::in_stage("spectrum", [&] {
    io::Spectrum s;
    s.omega = detail::uniform(cfg.grids.band_min, cfg.grids.band_max, cfg.grids.spectrum_step);
    s.power = transmission_spectrum(cfg.netlist, cfg.band_models(), s.omega);
    return s;
  });
}

inline ResonanceSet fit_resonances(const DeviceConfig& cfg, const io::Spectrum& spectrum) {
  return detail::in_stage("fit", [&] {
    auto set = fit_spectrum(spectrum.omega, spectrum.power, cfg.detect);
    if (set.resonances.empty() && set.dropped > 0) {
      fail(ErrorKind::FitDiverged, "every resonance fit diverged (" + std::to_string(set.dropped) + " dropped)");
    }
    return set;
  });
}

// Square axis centred on half the pump, as wide as the band allows.
inline Axis jsa_axis(const DeviceConfig& cfg, std::size_t points) {
  const double half = 0.5 * cfg.pump.omega0;
  const double reach = std::min(half - cfg.grids.band_min, cfg.grids.band_max - half);
  return Axis::spanning(half - reach, half + reach, points);
}

inline JSAGrid compute_jsa(const DeviceConfig& cfg, const Axis& signal, const Axis& idler, Provenance provenance) {
  const auto section = cfg.section();
  JsaRequest req;
  req.signal = signal;
  req.idler = idler;
  req.provenance = provenance;
  req.threads = cfg.grids.threads;
  AxisCavity sc, ic;
  if (provenance != Provenance::waveguide_J) {
    sc = detail::cavity_on(cfg, signal);
    ic = detail::cavity_on(cfg, idler);
    req.signal_cavity = &sc;
    req.idler_cavity = &ic;
  }
  return jsa_grid(section, cfg.pump, req);
}

inline JSAGrid jsa_stage(const DeviceConfig& cfg, std::size_t points, Provenance provenance) {
  return detail::in_stage("jsa", [&] {
    const auto axis = jsa_axis(cfg, points);
    return compute_jsa(cfg, axis, axis, provenance);
  });
}

struct MetricsOptions {
  bool global_schmidt = true;
};

// Per-island numbers come from island_points^2 grids evaluated over each
// window; the global Schmidt number and the out-of-island residual come from
// the full grid.
inline SourceReport metrics_stage(const DeviceConfig& cfg, const JSAGrid& grid, const ResonanceSet& set,
                                  MetricsOptions options = {}) {
  return detail::in_stage("metrics", [&] {
    SourceReport report;
    report.warnings = set.warnings;
    report.fsr_mean_ghz = units::rad_to_ghz(set.fsr_mean);

    // Phase of bends built from anisotropic segments carries interface
    // reflections; flag it once.
    const auto probe = assemble_loop(cfg.netlist, cfg.band_models(), std::vector<double>{grid.signal.at(0), grid.signal.end()});
    report.phase_trusted = probe.phase_trusted;
    if (!report.phase_trusted) report.warnings.push_back("PhaseUntrusted: bend interfaces add reflections to the round-trip phase");

    const std::vector<IslandWindow> windows = set.resonances.empty() ? std::vector<IslandWindow>{} : partition_islands(grid, set, cfg.pump);
    const double avg_mw = cfg.pump.average_power() * 1e3;
    std::vector<double> weights;
    double island_sum_on_grid = 0.0;
    bool zero_seen = false;
    for (const auto& w : windows) {
      const auto sa = Axis::spanning(w.signal_lo, w.signal_hi, cfg.grids.island_points);
      const auto ia = Axis::spanning(w.idler_lo, w.idler_hi, cfg.grids.island_points);
      const auto ext = compute_jsa(cfg, sa, ia, Provenance::cavity_j);
      const auto internal = compute_jsa(cfg, sa, ia, Provenance::cavity_internal_j);
      IslandReport isl;
      isl.index = w.index;
      isl.signal_thz = units::rad_to_thz(w.signal_center);
      isl.idler_thz = units::rad_to_thz(w.idler_center);
      isl.p_external = total_pair_probability(ext);
      isl.p_internal = total_pair_probability(internal);
      isl.pgr_external = cfg.pump.rep_rate * isl.p_external / avg_mw;
      isl.pgr_internal = cfg.pump.rep_rate * isl.p_internal / avg_mw;
      try {
        isl.purity = 1.0 / schmidt_decompose(ext).K;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroGrid) throw;
        isl.purity = 0.0;
        zero_seen = true;
      }
      weights.push_back(isl.p_internal);
      island_sum_on_grid += island_pgr(grid, w, 1.0).probability;
      report.islands.push_back(isl);
    }
    if (zero_seen) report.warnings.push_back("ZeroGrid: island amplitudes vanish; purity reported as 0");

    totals_and_brightness(report, units::rad_to_hz(set.mean_gamma()), cfg.pump.average_power());
    report.residual_probability = total_pair_probability(grid) - island_sum_on_grid;

    if (!windows.empty()) {
      double total = 0.0, sum_sq = 0.0;
      for (double p : weights) total += p;
      if (total > 0.0) {
        for (double p : weights) sum_sq += (p / total) * (p / total);
        report.K_island_weights = 1.0 / sum_sq;
        const auto split = wavelength_split_metrics(windows, weights);
        report.accessible_island_count = split.accessible_count;
        report.K_split = split.K_split;
      } else {
        report.accessible_island_count = windows.size() / 2;
      }
    }

    if (options.global_schmidt) {
      try {
        const auto s = schmidt_decompose(grid);
        report.K = s.K;
        report.entropy_nats = s.entropy_nats;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroGrid) throw;
        report.warnings.push_back("ZeroGrid: the joint spectrum is identically zero; no Schmidt decomposition");
      }
    }
    return report;
  });
}

// ---------------------------------------------------------------------------
// Orchestration

struct PipelineOptions {
  std::optional<std::size_t> grid_points;  // overrides grids.jsa_points
  bool internal = false;                   // write the j' grid instead of j
  bool global_schmidt = true;
};

struct PipelineResult {
  ResonanceSet resonances;
  SourceReport report;
  std::filesystem::path out_dir;
};

inline void write_report(const std::filesystem::path& dir, const SourceReport& report) {
  io::write_json(dir / artifact::report_json, io::to_json(report));
  auto os = io::detail::open_out(dir / artifact::report_text);
  os << io::report_text(report);
  io::detail::finish(os, dir / artifact::report_text);
}

// Every stage persists its artifact and the next stage reads it back.
inline PipelineResult run_pipeline(const DeviceConfig& cfg, const std::filesystem::path& out_dir, PipelineOptions options = {}) {
  PipelineResult result;
  result.out_dir = out_dir;
  io::write_spectrum_csv(out_dir / artifact::spectrum, simulate_spectrum(cfg));

  const auto spectrum = io::read_spectrum_csv(out_dir / artifact::spectrum);
  io::write_json(out_dir / artifact::resonances, io::to_json(fit_resonances(cfg, spectrum)));

  const std::size_t points = options.grid_points.value_or(cfg.grids.jsa_points);
  const auto provenance = options.internal ? Provenance::cavity_internal_j : Provenance::cavity_j;
  {
    const auto grid = jsa_stage(cfg, points, provenance);
    io::write_jsag(out_dir / artifact::jsa, grid);
    io::write_jsa_csv(out_dir / artifact::jsa_csv, grid);
  }

  result.resonances = io::resonances_from_json(io::read_json(out_dir / artifact::resonances));
  auto grid = io::read_jsag(out_dir / artifact::jsa);
  grid.provenance = provenance;
  result.report = metrics_stage(cfg, grid, result.resonances, {options.global_schmidt});
  write_report(out_dir, result.report);
  return result;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  double value = 0.0;
  std::vector<double> outputs;
};

namespace detail {

// Mean fitted Q over a few resonances around the band centre, from a spectrum
// sampled finely enough for the expected linewidth.
inline double fitted_q(const DeviceConfig& cfg) {
  const double centre = 0.5 * (cfg.grids.band_min + cfg.grids.band_max);
  const auto loop = assemble_loop(cfg.netlist, cfg.band_models(), std::vector<double>{centre});
  const double n_g = group_index(*cfg.telecom, centre);
  const double T = n_g * cfg.netlist.loop_length() / constants::speed_of_light;
  const double fsr = 2.0 * constants::pi / T;
  const double gamma = analytic_fwhm(loop.coupling(0), T);
  const double step = std::min(gamma / 40.0, fsr / 400.0);
  const double lo = std::max(centre - 2.5 * fsr, cfg.telecom->omega_min());
  const double hi = std::min(centre + 2.5 * fsr, cfg.telecom->omega_max());
  const auto w = uniform(lo, hi, step);
  const auto p = transmission_spectrum(cfg.netlist, cfg.band_models(), w);
  const auto set = fit_spectrum(w, p, cfg.detect);
  if (set.resonances.empty()) fail(ErrorKind::FitDiverged, "no resonance could be fitted");
  double q = 0.0;
  for (const auto& r : set.resonances) q += r.q;
  return q / static_cast<double>(set.resonances.size());
}

inline CavityCoupling centre_coupling(const DeviceConfig& cfg) {
  const double centre = 0.5 * (cfg.grids.band_min + cfg.grids.band_max);
  return assemble_loop(cfg.netlist, cfg.band_models(), std::vector<double>{centre}).coupling(0);
}

}  // namespace detail

inline std::vector<SweepRow> run_sweep(const DeviceConfig& cfg, const SweepSpec& spec) {
  return detail::in_stage("sweep", [&] {
    std::vector<SweepRow> rows;
    if (spec.parameter == SweepParameter::pump_detuning_fsr) {
      const auto sweep = pump_buildup_sweep(cfg.pump_kappa_power, cfg.pump_loop_eta(), spec.values);
      for (const auto& p : sweep.points) rows.push_back({p.detuning_fraction, {p.relative_pgr}});
      return rows;
    }
    const auto base = detail::centre_coupling(cfg);
    const double T = 1.0;  // cancels in the ratio
    const double base_p = closed_form_pcav(base, T, 1.0);
    for (double v : spec.values) {
      DeviceConfig local = cfg;
      local.netlist.bus_kappa_table.clear();
      local.netlist.bus_kappa_power = v;
      const auto c = detail::centre_coupling(local);
      SweepRow row{v, {}};
      for (auto o : spec.outputs) {
        switch (o) {
          case SweepOutput::Q: row.outputs.push_back(detail::fitted_q(local)); break;
          case SweepOutput::fraction_outcoupled:
            // Coupler share of the round-trip amplitude decay.
            row.outputs.push_back(std::log(c.sigma) / std::log(c.loop_gain()));
            break;
          case SweepOutput::PGR_relative: row.outputs.push_back(closed_form_pcav(c, T, 1.0) / base_p); break;
        }
      }
      rows.push_back(std::move(row));
    }
    return rows;
  });
}

inline io::Table sweep_table(const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  io::Table t;
  t.header.push_back(spec.parameter_path);
  for (auto o : spec.outputs) t.header.push_back(to_string(o));
  for (const auto& r : rows) {
    std::vector<double> line{r.value};
    line.insert(line.end(), r.outputs.begin(), r.outputs.end());
    t.rows.push_back(std::move(line));
  }
  return t;
}

}  // namespace cavspdc
