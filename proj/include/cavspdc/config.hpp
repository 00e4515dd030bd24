#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspdc/circuit.hpp"
#include "cavspdc/dispersion.hpp"
#include "cavspdc/error.hpp"
#include "cavspdc/io.hpp"
#include "cavspdc/spdc.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

struct GridSettings {
  double band_min = 0.0;  // rad/s
  double band_max = 0.0;
  double spectrum_step = 0.0;  // rad/s
  std::size_t jsa_points = 4096;
  std::size_t island_points = 256;
  unsigned threads = 0;
};

struct DeviceConfig {
  std::filesystem::path source;

  std::optional<DispersionModel> telecom;
  std::optional<DispersionModel> pump_band;
  std::optional<DispersionModel> bend_axis_n1;
  std::optional<DispersionModel> bend_axis_n2;

  Netlist netlist;
  double pump_kappa_power = 0.0;
  double pump_propagation_db_per_m = 0.0;

  double poled_length = 0.0;  // m, from the poled component
  std::optional<double> poling_period;  // m; derived at degeneracy when absent
  double chi2 = 0.0;                    // m/V
  double overlap = 0.0;                 // 1/m
  QpmConvention convention = QpmConvention::pi_over_lambda;
  bool heisenberg_factor_two = false;

  PumpPulse pump;
  GridSettings grids;
  DetectOptions detect;

  BandModels band_models() const { return {&*telecom, bend_axis_n1 ? &*bend_axis_n1 : nullptr, bend_axis_n2 ? &*bend_axis_n2 : nullptr}; }

  double period() const {
    if (poling_period) return *poling_period;
    const double half = 0.5 * pump.omega0;
    return qpm_period_for(*pump_band, *telecom, half, half, convention);
  }

  NonlinearSection section() const {
    NonlinearSection s;
    s.length = poled_length;
    s.period = period();
    s.chi2 = chi2;
    s.overlap = overlap;
    s.signal = &*telecom;
    s.pump = &*pump_band;
    s.convention = convention;
    s.heisenberg_factor_two = heisenberg_factor_two;
    return s;
  }

  // Round-trip amplitude survival of the pump from its propagation loss.
  double pump_loop_eta() const { return std::pow(10.0, -pump_propagation_db_per_m * netlist.loop_length() / 20.0); }
};

namespace detail {

using Json = nlohmann::ordered_json;

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) invalid(path_.empty() ? "configuration root" : path_, "must be an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key); }

  [[noreturn]] static void invalid(const std::string& where, const std::string& what) {
    fail(ErrorKind::ValidationError, where + ": " + what);
  }

  const Json& raw(const std::string& key) {
    if (!node_.contains(key)) invalid(key_path(key), "is required");
    used_.insert(key);
    return node_.at(key);
  }

  double number(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number()) invalid(key_path(key), "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) invalid(key_path(key), "must be finite");
    return d;
  }
  std::optional<double> number_opt(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return number(key);
  }
  double positive(const std::string& key) {
    const double d = number(key);
    if (!(d > 0.0)) invalid(key_path(key), "must be positive");
    return d;
  }
  double non_negative(const std::string& key) {
    const double d = number(key);
    if (d < 0.0) invalid(key_path(key), "must not be negative");
    return d;
  }
  double fraction(const std::string& key) {
    const double d = number(key);
    if (!(d >= 0.0 && d <= 1.0)) invalid(key_path(key), "must lie in [0, 1]");
    return d;
  }
  std::size_t count(const std::string& key, std::size_t minimum) {
    const auto& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(minimum)) {
      invalid(key_path(key), "must be an integer of at least " + std::to_string(minimum));
    }
    return v.get<std::size_t>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (!v.is_boolean()) invalid(key_path(key), "must be true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) invalid(key_path(key), "must be a string");
    return v.get<std::string>();
  }
  Section child(const std::string& key) { return Section(raw(key), key_path(key)); }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!used_.contains(key)) invalid(key_path(key), "unknown key");
    }
  }

 private:
  const Json& node_;
  std::string path_;
  std::set<std::string> used_;
};

inline DispersionModel read_dispersion(Section s, Band band, const std::filesystem::path& base) {
  DispersionModel model = [&] {
    if (s.has("table")) {
      const auto file = base / s.text("table");
      std::vector<double> omega, index;
      try {
        for (const auto& row : io::read_table(file, 2)) {
          omega.push_back(units::thz_to_rad(row[0]));
          index.push_back(row[1]);
        }
        return DispersionModel::tabulated(band, omega, index);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::IOError) throw;
        Section::invalid(s.key_path("table"), e.what());
      }
    }
    TaylorIndex t;
    t.center = units::thz_to_rad(s.positive("center_THz"));
    t.n0 = s.positive("n0");
    t.n1 = s.number_opt("n1").value_or(0.0);
    t.n2 = s.number_opt("n2").value_or(0.0);
    const double lo = s.positive("min_THz");
    const double hi = s.positive("max_THz");
    if (!(hi > lo)) Section::invalid(s.key_path("max_THz"), "must exceed min_THz");
    try {
      return DispersionModel::taylor(band, t, units::thz_to_rad(lo), units::thz_to_rad(hi));
    } catch (const Error& e) {
      Section::invalid(s.key_path("n0"), e.what());
    }
  }();
  s.finish();
  return model;
}

inline NetlistComponent read_component(Section s) {
  NetlistComponent c;
  c.name = s.has("name") ? s.text("name") : s.key_path("");
  const std::string kind = s.text("kind");
  if (kind == "waveguide") {
    c.kind = ComponentKind::waveguide;
    c.length = s.positive("length_mm") * 1e-3;
    c.loss_db_per_m = s.has("loss_dB_per_m") ? s.non_negative("loss_dB_per_m") : 0.0;
    c.nonlinear = s.boolean("poled", false);
  } else if (kind == "bend") {
    c.kind = ComponentKind::bend;
    c.bend_radius = s.positive("radius_um") * 1e-6;
    c.bend_start_angle = (s.has("start_angle_deg") ? s.number("start_angle_deg") : 0.0) * constants::pi / 180.0;
    c.bend_sweep = s.positive("sweep_deg") * constants::pi / 180.0;
    c.bend_segments = s.count("segments", 1);
    c.loss_db_per_m = s.has("loss_dB_per_m") ? s.non_negative("loss_dB_per_m") : 0.0;
  } else if (kind == "loss") {
    c.kind = ComponentKind::loss;
    c.loss_db = s.non_negative("loss_dB");
  } else if (kind == "tap") {
    c.kind = ComponentKind::tap;
    c.kappa_power = s.fraction("kappa2");
    if (!(c.kappa_power < 1.0)) Section::invalid(s.key_path("kappa2"), "must be below 1");
  } else {
    Section::invalid(s.key_path("kind"), "must be one of waveguide, bend, loss, tap (got '" + kind + "')");
  }
  s.finish();
  return c;
}

}  // namespace detail

inline DeviceConfig parse_config(const nlohmann::ordered_json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::Section;
  DeviceConfig cfg;
  Section root(doc, "");

  {
    auto d = root.child("dispersion");
    cfg.telecom = detail::read_dispersion(d.child("telecom"), Band::telecom, base_dir);
    cfg.pump_band = detail::read_dispersion(d.child("pump"), Band::pump, base_dir);
    if (d.has("bend_axes")) {
      auto b = d.child("bend_axes");
      cfg.bend_axis_n1 = detail::read_dispersion(b.child("n1"), Band::telecom, base_dir);
      cfg.bend_axis_n2 = detail::read_dispersion(b.child("n2"), Band::telecom, base_dir);
      b.finish();
    }
    d.finish();
  }

  {
    auto r = root.child("racetrack");
    const auto& list = r.raw("components");
    if (!list.is_array() || list.empty()) Section::invalid(r.key_path("components"), "must be a non-empty array");
    int poled = 0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      auto c = detail::read_component(Section(list[k], r.key_path("components") + "[" + std::to_string(k) + "]"));
      if (c.nonlinear) {
        ++poled;
        cfg.poled_length = c.length;
      }
      cfg.netlist.loop.push_back(std::move(c));
    }
    if (poled != 1) Section::invalid(r.key_path("components"), "exactly one waveguide must be marked poled");
    if (r.has("poling_period_um")) cfg.poling_period = r.positive("poling_period_um") * 1e-6;
    r.finish();
  }

  {
    auto c = root.child("couplers");
    const bool flat = c.has("signal_kappa2");
    const bool table = c.has("signal_kappa2_table");
    if (flat == table) Section::invalid(c.key_path("signal_kappa2"), "give exactly one of signal_kappa2 and signal_kappa2_table");
    if (flat) {
      cfg.netlist.bus_kappa_power = c.fraction("signal_kappa2");
    } else {
      const auto& t = c.raw("signal_kappa2_table");
      const std::string where = c.key_path("signal_kappa2_table");
      if (!t.is_array() || t.size() < 2) Section::invalid(where, "must list at least two [frequency_THz, kappa2] pairs");
      for (const auto& row : t) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
          Section::invalid(where, "entries must be [frequency_THz, kappa2] pairs");
        }
        const double k2 = row[1].get<double>();
        if (!(k2 >= 0.0 && k2 <= 1.0)) Section::invalid(where, "kappa2 entries must lie in [0, 1]");
        cfg.netlist.bus_kappa_table.emplace_back(units::thz_to_rad(row[0].get<double>()), k2);
      }
      for (std::size_t k = 0; k + 1 < cfg.netlist.bus_kappa_table.size(); ++k) {
        if (!(cfg.netlist.bus_kappa_table[k + 1].first > cfg.netlist.bus_kappa_table[k].first)) {
          Section::invalid(where, "frequencies must increase");
        }
      }
    }
    cfg.pump_kappa_power = c.fraction("pump_kappa2");
    c.finish();
  }

  if (root.has("losses")) {
    auto l = root.child("losses");
    cfg.pump_propagation_db_per_m = l.non_negative("pump_propagation_dB_per_m");
    l.finish();
  }

  {
    auto n = root.child("nonlinear");
    cfg.chi2 = n.non_negative("chi2_pm_per_V") * 1e-12;
    cfg.overlap = n.positive("overlap_per_m");
    if (n.has("qpm_convention")) {
      const auto conv = n.text("qpm_convention");
      if (conv == "pi_over_lambda") cfg.convention = QpmConvention::pi_over_lambda;
      else if (conv == "two_pi_over_lambda") cfg.convention = QpmConvention::two_pi_over_lambda;
      else Section::invalid(n.key_path("qpm_convention"), "must be pi_over_lambda or two_pi_over_lambda");
    }
    cfg.heisenberg_factor_two = n.boolean("heisenberg_factor_two", false);
    n.finish();
  }

  {
    auto p = root.child("pump");
    const bool by_freq = p.has("center_THz");
    const bool by_wl = p.has("wavelength_nm");
    if (by_freq == by_wl) Section::invalid(p.key_path("center_THz"), "give exactly one of center_THz and wavelength_nm");
    cfg.pump.omega0 = by_freq ? units::thz_to_rad(p.positive("center_THz")) : units::nm_to_rad(p.positive("wavelength_nm"));
    cfg.pump.fwhm_hz = p.positive("fwhm_GHz") * 1e9;
    cfg.pump.energy = p.positive("energy_pJ") * 1e-12;
    cfg.pump.rep_rate = p.positive("rep_rate_MHz") * 1e6;
    p.finish();
  }

  {
    auto g = root.child("grids");
    cfg.grids.band_min = units::thz_to_rad(g.positive("band_min_THz"));
    cfg.grids.band_max = units::thz_to_rad(g.positive("band_max_THz"));
    if (!(cfg.grids.band_max > cfg.grids.band_min)) Section::invalid(g.key_path("band_max_THz"), "must exceed band_min_THz");
    cfg.grids.spectrum_step = units::ghz_to_rad(g.positive("spectrum_step_GHz"));
    if (g.has("jsa_points")) cfg.grids.jsa_points = g.count("jsa_points", 64);
    if (g.has("island_points")) cfg.grids.island_points = g.count("island_points", 64);
    if (g.has("threads")) cfg.grids.threads = static_cast<unsigned>(g.count("threads", 0));
    g.finish();
  }

  if (root.has("fit")) {
    auto f = root.child("fit");
    cfg.detect.prominence_threshold = f.positive("prominence");
    f.finish();
  }
  root.finish();

  // Cross-field checks that need the assembled pieces.
  if (!cfg.telecom->contains(cfg.grids.band_min) || !cfg.telecom->contains(cfg.grids.band_max)) {
    Section::invalid("grids.band_min_THz", "band lies outside the telecom dispersion range");
  }
  const double half = 0.5 * cfg.pump.omega0;
  if (!(half > cfg.grids.band_min && half < cfg.grids.band_max)) {
    Section::invalid("pump.center_THz", "half the pump frequency must fall inside the band");
  }
  if (!cfg.pump_band->contains(2.0 * cfg.grids.band_min) || !cfg.pump_band->contains(2.0 * cfg.grids.band_max)) {
    Section::invalid("dispersion.pump", "pump dispersion range must cover twice the band edges");
  }
  for (const auto& c : cfg.netlist.loop) {
    if (c.kind == ComponentKind::bend && !cfg.bend_axis_n1) Section::invalid("dispersion.bend_axes", "bends need the in-plane axis index models");
  }
  try {
    validate_netlist(cfg.netlist);
    cfg.pump.validate();
    (void)cfg.period();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NoSolution) Section::invalid("racetrack.poling_period_um", e.what());
    Section::invalid("racetrack", e.what());
  }
  return cfg;
}

inline DeviceConfig load_config(const std::filesystem::path& path) {
  const auto doc = io::read_json(path);
  auto cfg = parse_config(doc, path.parent_path());
  cfg.source = path;
  return cfg;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParameter { signal_kappa2, pump_detuning_fsr };
enum class SweepOutput { Q, fraction_outcoupled, PGR_relative };

inline std::string to_string(SweepOutput o) {
  switch (o) {
    case SweepOutput::Q: return "Q";
    case SweepOutput::fraction_outcoupled: return "fraction_outcoupled";
    case SweepOutput::PGR_relative: return "PGR_relative";
  }
  return "?";
}

struct SweepSpec {
  SweepParameter parameter = SweepParameter::signal_kappa2;
  std::string parameter_path;
  std::vector<double> values;
  std::vector<SweepOutput> outputs;
};

// {"parameter": "couplers.signal_kappa2" | "pump.detuning_fsr",
//  "values": [...] or "range": {"start", "stop", "count", "log"},
//  "outputs": ["Q", "fraction_outcoupled", "PGR_relative"]}
inline SweepSpec parse_sweep(const nlohmann::ordered_json& doc) {
  using detail::Section;
  Section s(doc, "");
  SweepSpec spec;
  spec.parameter_path = s.text("parameter");
  if (spec.parameter_path == "couplers.signal_kappa2") spec.parameter = SweepParameter::signal_kappa2;
  else if (spec.parameter_path == "pump.detuning_fsr") spec.parameter = SweepParameter::pump_detuning_fsr;
  else Section::invalid("parameter", "does not name a sweepable setting: '" + spec.parameter_path + "'");

  if (s.has("values") == s.has("range")) Section::invalid("values", "give exactly one of values and range");
  if (s.has("values")) {
    const auto& v = s.raw("values");
    if (!v.is_array()) Section::invalid("values", "must be an array");
    for (const auto& x : v) {
      if (!x.is_number()) Section::invalid("values", "entries must be numbers");
      spec.values.push_back(x.get<double>());
    }
  } else {
    auto r = s.child("range");
    const double a = r.number("start"), b = r.number("stop");
    const std::size_t n = r.count("count", 2);
    const bool log = r.boolean("log", false);
    if (log && !(a > 0.0 && b > 0.0)) Section::invalid("range.start", "a logarithmic range needs positive ends");
    for (std::size_t k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(n - 1);
      spec.values.push_back(log ? a * std::pow(b / a, t) : a + (b - a) * t);
    }
    r.finish();
  }
  if (spec.values.size() < 2) Section::invalid("values", "a sweep needs at least two points");

  if (s.has("outputs")) {
    const auto& o = s.raw("outputs");
    if (!o.is_array() || o.empty()) Section::invalid("outputs", "must be a non-empty array");
    for (const auto& x : o) {
      const auto name = x.is_string() ? x.get<std::string>() : std::string{};
      if (name == "Q") spec.outputs.push_back(SweepOutput::Q);
      else if (name == "fraction_outcoupled") spec.outputs.push_back(SweepOutput::fraction_outcoupled);
      else if (name == "PGR_relative") spec.outputs.push_back(SweepOutput::PGR_relative);
      else Section::invalid("outputs", "unknown output '" + name + "'");
    }
  } else if (spec.parameter == SweepParameter::signal_kappa2) {
    spec.outputs = {SweepOutput::Q, SweepOutput::fraction_outcoupled, SweepOutput::PGR_relative};
  } else {
    spec.outputs = {SweepOutput::PGR_relative};
  }
  s.finish();

  for (double v : spec.values) {
    if (spec.parameter == SweepParameter::signal_kappa2 && !(v > 0.0 && v < 1.0)) {
      Section::invalid("values", "coupler cross-coupling must lie in (0, 1)");
    }
    if (!std::isfinite(v)) Section::invalid("values", "entries must be finite");
  }
  if (spec.parameter == SweepParameter::pump_detuning_fsr) {
    for (auto o : spec.outputs) {
      if (o != SweepOutput::PGR_relative) Section::invalid("outputs", "a pump detuning sweep only yields PGR_relative");
    }
  }
  return spec;
}

}  // namespace cavspdc
