#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cavspdc/config.hpp"
#include "cavspdc/io.hpp"
#include "cavspdc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cavspdc;

namespace {

enum Exit { ok = 0, validation = 2, numeric = 3, input_output = 4 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IOError: return input_output;
    case ErrorKind::ParseError:
    case ErrorKind::ValidationError:
    case ErrorKind::MalformedNetlist:
    case ErrorKind::OutOfRange:
    case ErrorKind::DomainError:
    case ErrorKind::Ambiguous: return validation;
    default: return numeric;
  }
}

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::size_t> grid_points;
  bool internal = false;
  std::string format = "json";
};

void emit_report(const SourceReport& r, const std::string& format) {
  if (format == "text") std::cout << io::report_text(r);
  else std::cout << io::to_json(r).dump(2) << '\n';
}

SweepSpec sweep_from_flags(const std::string& parameter, const std::vector<double>& values, const std::vector<std::string>& outputs) {
  io::Json doc;
  doc["parameter"] = parameter;
  doc["values"] = values;
  if (!outputs.empty()) doc["outputs"] = outputs;
  return parse_sweep(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cavity-enhanced SPDC source modelling: spectrum, resonance fit, joint spectrum and source metrics"};
  app.require_subcommand(1);
  Common c;

  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", c.config, "device configuration (JSON)")->required()->check(CLI::ExistingFile); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", c.out, "artifact directory")->capture_default_str(); };
  auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", c.format, "report format on stdout")->check(CLI::IsMember({"json", "text"}))->capture_default_str();
  };

  auto* spectrum = app.add_subcommand("spectrum", "simulate the bus transmission over the band");
  add_config(spectrum);
  add_out(spectrum);

  auto* fit = app.add_subcommand("fit", "fit Lorentzian dips in a spectrum CSV");
  add_config(fit);
  add_out(fit);
  std::string spectrum_path;
  fit->add_option("--spectrum", spectrum_path, "spectrum CSV (default: <out>/spectrum.csv)");

  auto* jsa = app.add_subcommand("jsa", "evaluate the joint spectral amplitude grid");
  add_config(jsa);
  add_out(jsa);
  jsa->add_option("--grid-points", c.grid_points, "points per axis")->check(CLI::Range(64, 1 << 16));
  jsa->add_flag("--internal", c.internal, "write the intracavity grid j' = j / kappa");

  auto* metrics = app.add_subcommand("metrics", "source metrics from a JSA container");
  add_config(metrics);
  add_out(metrics);
  add_format(metrics);
  std::string jsa_path;
  metrics->add_option("--jsa", jsa_path, "JSA container (default: <out>/jsa.jsag)");

  auto* schmidt = app.add_subcommand("schmidt", "Schmidt decomposition of a JSA container");
  add_out(schmidt);
  schmidt->add_option("--jsa", jsa_path, "JSA container (default: <out>/jsa.jsag)");
  std::size_t modes = 4;
  schmidt->add_option("--modes", modes, "leading modes written to CSV")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "parameter sweep table");
  add_config(sweep);
  add_out(sweep);
  std::string sweep_file, parameter;
  std::vector<double> values;
  std::vector<std::string> outputs;
  sweep->add_option("--sweep", sweep_file, "sweep specification (JSON)")->check(CLI::ExistingFile);
  sweep->add_option("--parameter", parameter, "couplers.signal_kappa2 or pump.detuning_fsr");
  sweep->add_option("--values", values, "sweep values")->delimiter(',');
  sweep->add_option("--outputs", outputs, "Q, fraction_outcoupled, PGR_relative")->delimiter(',');

  auto* run = app.add_subcommand("run", "full pipeline: spectrum, fit, jsa, metrics, report");
  add_config(run);
  add_out(run);
  add_format(run);
  run->add_option("--grid-points", c.grid_points, "points per axis of the full JSA grid")->check(CLI::Range(64, 1 << 16));
  run->add_flag("--internal", c.internal, "store the intracavity grid j' = j / kappa");

  auto* report = app.add_subcommand("report", "print a stored report");
  add_out(report);
  add_format(report);
  std::string report_out;
  report->add_option("--output", report_out, "write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  const fs::path out = c.out;
  try {
    if (*spectrum) {
      const auto cfg = load_config(c.config);
      io::write_spectrum_csv(out / artifact::spectrum, simulate_spectrum(cfg));
    } else if (*fit) {
      const auto cfg = load_config(c.config);
      const auto s = io::read_spectrum_csv(spectrum_path.empty() ? out / artifact::spectrum : fs::path(spectrum_path));
      const auto set = fit_resonances(cfg, s);
      io::write_json(out / artifact::resonances, io::to_json(set));
      std::cout << set.resonances.size() << " resonances, mean FSR " << units::rad_to_ghz(set.fsr_mean) << " GHz, mean FWHM "
                << units::rad_to_ghz(set.mean_gamma()) << " GHz\n";
    } else if (*jsa) {
      const auto cfg = load_config(c.config);
      const auto grid = jsa_stage(cfg, c.grid_points.value_or(cfg.grids.jsa_points),
                                  c.internal ? Provenance::cavity_internal_j : Provenance::cavity_j);
      io::write_jsag(out / artifact::jsa, grid);
      io::write_jsa_csv(out / artifact::jsa_csv, grid);
    } else if (*metrics) {
      const auto cfg = load_config(c.config);
      const auto grid = io::read_jsag(jsa_path.empty() ? out / artifact::jsa : fs::path(jsa_path));
      const auto set = io::resonances_from_json(io::read_json(out / artifact::resonances));
      const auto r = metrics_stage(cfg, grid, set);
      write_report(out, r);
      emit_report(r, c.format);
    } else if (*schmidt) {
      const auto grid = io::read_jsag(jsa_path.empty() ? out / artifact::jsa : fs::path(jsa_path));
      const auto r = schmidt_decompose(grid, modes);
      io::write_schmidt_modes_csv(out / artifact::schmidt_modes, grid, r);
      io::Json doc{{"K", r.K}, {"entropy_nats", r.entropy_nats}, {"entropy_bits", r.entropy_bits()}};
      std::cout << doc.dump(2) << '\n';
    } else if (*sweep) {
      const auto cfg = load_config(c.config);
      if (sweep_file.empty() == parameter.empty()) fail(ErrorKind::ValidationError, "give either --sweep or --parameter with --values");
      const auto spec = sweep_file.empty() ? sweep_from_flags(parameter, values, outputs) : parse_sweep(io::read_json(sweep_file));
      io::write_csv(out / artifact::sweep, sweep_table(spec, run_sweep(cfg, spec)));
    } else if (*run) {
      const auto cfg = load_config(c.config);
      PipelineOptions options;
      options.grid_points = c.grid_points;
      options.internal = c.internal;
      emit_report(run_pipeline(cfg, out, options).report, c.format);
    } else if (*report) {
      const auto r = io::report_from_json(io::read_json(out / artifact::report_json));
      if (report_out.empty()) {
        emit_report(r, c.format);
      } else {
        std::ostringstream os;
        if (c.format == "text") os << io::report_text(r);
        else os << io::to_json(r).dump(2) << '\n';
        auto f = io::detail::open_out(report_out);
        f << os.str();
        io::detail::finish(f, report_out);
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return input_output;
  }
  return ok;
}
