#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cavspdc/error.hpp"
#include "cavspdc/metrics.hpp"
#include "cavspdc/resonances.hpp"
#include "cavspdc/spdc.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc::io {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) fail(ErrorKind::IOError, "cannot open '" + path.string() + "' for writing");
  os.imbue(std::locale::classic());
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) fail(ErrorKind::IOError, "cannot open '" + path.string() + "'");
  is.imbue(std::locale::classic());
  return is;
}

inline void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) fail(ErrorKind::IOError, "write to '" + path.string() + "' failed");
}

template <typename T>
void put_le(std::ostream& os, T value) {
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    fail(ErrorKind::ParseError, "'" + path.string() + "' ends before its header or data is complete");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) {
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? std::string{} : field.substr(a, b - a + 1));
  }
  return out;
}

inline double to_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
  std::istringstream is(text);
  is.imbue(std::locale::classic());
  double v = 0.0;
  is >> v;
  if (is.fail() || !is.eof()) {
    fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(line) + ": '" + text + "' is not a number");
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary JSA container: "JSAG", u16 version, u32 signal and idler counts,
// f64 start/step per axis (rad/s), then row-major interleaved re/im f64.
// Everything little-endian.

inline constexpr std::uint16_t jsag_version = 1;

inline void write_jsag(const std::filesystem::path& path, const JSAGrid& grid) {
  grid.validate();
  auto os = detail::open_out(path, true);
  os.write("JSAG", 4);
  detail::put_le<std::uint16_t>(os, jsag_version);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.signal.count));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.idler.count));
  detail::put_le(os, grid.signal.start);
  detail::put_le(os, grid.signal.step);
  detail::put_le(os, grid.idler.start);
  detail::put_le(os, grid.idler.step);
  for (const auto& v : grid.values) {
    detail::put_le(os, v.real());
    detail::put_le(os, v.imag());
  }
  detail::finish(os, path);
}

inline JSAGrid read_jsag(const std::filesystem::path& path) {
  auto is = detail::open_in(path, true);
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "JSAG", 4) != 0) fail(ErrorKind::ParseError, "'" + path.string() + "' is not a JSAG container");
  const auto version = detail::get_le<std::uint16_t>(is, path);
  if (version != jsag_version) fail(ErrorKind::ParseError, "unsupported JSAG version " + std::to_string(version));
  JSAGrid g;
  g.signal.count = detail::get_le<std::uint32_t>(is, path);
  g.idler.count = detail::get_le<std::uint32_t>(is, path);
  g.signal.start = detail::get_le<double>(is, path);
  g.signal.step = detail::get_le<double>(is, path);
  g.idler.start = detail::get_le<double>(is, path);
  g.idler.step = detail::get_le<double>(is, path);
  g.values.resize(g.signal.count * g.idler.count);
  for (auto& v : g.values) {
    const double re = detail::get_le<double>(is, path);
    const double im = detail::get_le<double>(is, path);
    v = {re, im};
  }
  if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::ParseError, "'" + path.string() + "' has trailing bytes");
  g.validate();
  return g;
}

// Plot export: |j|^2 and the complex value on a strided subset of at most
// max_points nodes per axis.
inline void write_jsa_csv(const std::filesystem::path& path, const JSAGrid& grid, std::size_t max_points = 512) {
  grid.validate();
  auto os = detail::open_out(path);
  const std::size_t si = std::max<std::size_t>(1, (grid.rows() + max_points - 1) / max_points);
  const std::size_t sj = std::max<std::size_t>(1, (grid.cols() + max_points - 1) / max_points);
  os << "signal_THz,idler_THz,re,im,abs2\n";
  for (std::size_t i = 0; i < grid.rows(); i += si) {
    for (std::size_t j = 0; j < grid.cols(); j += sj) {
      const auto v = grid.at(i, j);
      os << detail::fmt(units::rad_to_thz(grid.signal.at(i))) << ',' << detail::fmt(units::rad_to_thz(grid.idler.at(j))) << ','
         << detail::fmt(v.real()) << ',' << detail::fmt(v.imag()) << ',' << detail::fmt(std::norm(v)) << '\n';
    }
  }
  detail::finish(os, path);
}

// ---------------------------------------------------------------------------
// CSV tables

struct Spectrum {
  std::vector<double> omega;  // rad/s
  std::vector<double> power;
};

inline void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
  if (s.omega.size() != s.power.size()) fail(ErrorKind::GridMismatch, "spectrum columns differ in length");
  auto os = detail::open_out(path);
  os << "frequency_THz,power_transmission\n";
  for (std::size_t k = 0; k < s.omega.size(); ++k) os << detail::fmt(units::rad_to_thz(s.omega[k])) << ',' << detail::fmt(s.power[k]) << '\n';
  detail::finish(os, path);
}

// Numeric rows of a comma- or whitespace-separated table; '#' starts a
// comment and a non-numeric first line is taken as a header.
inline std::vector<std::vector<double>> read_table(const std::filesystem::path& path, std::size_t columns) {
  auto is = detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t number = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string normalized = line;
    if (normalized.find(',') == std::string::npos) {
      std::istringstream ws(normalized);
      std::string tok, joined;
      while (ws >> tok) joined += (joined.empty() ? "" : ",") + tok;
      normalized = joined;
    }
    const auto fields = detail::split_fields(normalized);
    if (first) {
      first = false;
      const bool header = std::any_of(fields.begin(), fields.end(), [](const std::string& f) {
        return !f.empty() && (std::isalpha(static_cast<unsigned char>(f.front())) || f.front() == '_');
      });
      if (header) continue;
    }
    if (fields.size() != columns) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(columns) + " columns");
    }
    std::vector<double> row;
    for (const auto& f : fields) row.push_back(detail::to_number(f, path, number));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Spectrum read_spectrum_csv(const std::filesystem::path& path) {
  Spectrum s;
  for (const auto& row : read_table(path, 2)) {
    s.omega.push_back(units::thz_to_rad(row[0]));
    s.power.push_back(row[1]);
  }
  if (s.omega.empty()) fail(ErrorKind::ParseError, "'" + path.string() + "' holds no spectrum samples");
  return s;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::filesystem::path& path, const Table& table) {
  auto os = detail::open_out(path);
  for (std::size_t k = 0; k < table.header.size(); ++k) os << (k ? "," : "") << table.header[k];
  os << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) fail(ErrorKind::GridMismatch, "table row width differs from its header");
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << detail::fmt(row[k]);
    os << '\n';
  }
  detail::finish(os, path);
}

// Leading Schmidt modes as columns: axis frequency then |u|, |v| per mode.
inline void write_schmidt_modes_csv(const std::filesystem::path& path, const JSAGrid& grid, const SchmidtResult& r) {
  Table t;
  t.header = {"index", "signal_THz", "idler_THz"};
  for (std::size_t q = 0; q < r.signal_modes.size(); ++q) {
    t.header.push_back("lambda_" + std::to_string(q));
    t.header.push_back("signal_mode_abs_" + std::to_string(q));
    t.header.push_back("idler_mode_abs_" + std::to_string(q));
  }
  const std::size_t n = std::max(grid.rows(), grid.cols());
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> row{static_cast<double>(k), k < grid.rows() ? units::rad_to_thz(grid.signal.at(k)) : NAN,
                            k < grid.cols() ? units::rad_to_thz(grid.idler.at(k)) : NAN};
    for (std::size_t q = 0; q < r.signal_modes.size(); ++q) {
      row.push_back(r.coefficients[q]);
      row.push_back(k < r.signal_modes[q].size() ? std::abs(r.signal_modes[q][k]) : NAN);
      row.push_back(k < r.idler_modes[q].size() ? std::abs(r.idler_modes[q][k]) : NAN);
    }
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

// ---------------------------------------------------------------------------
// JSON documents

inline void write_json(const std::filesystem::path& path, const Json& doc) {
  auto os = detail::open_out(path);
  os << doc.dump(2) << '\n';
  detail::finish(os, path);
}

inline Json read_json(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, "'" + path.string() + "': " + e.what());
  }
}

inline Json to_json(const ResonanceSet& set) {
  Json doc;
  doc["resonances"] = Json::array();
  for (const auto& r : set.resonances) {
    doc["resonances"].push_back({{"f0_THz", units::rad_to_thz(r.omega0)},
                                 {"fwhm_GHz", units::rad_to_ghz(r.gamma)},
                                 {"Q", r.q},
                                 {"depth", r.depth},
                                 {"residual", r.fit_residual}});
  }
  doc["fsr_mean_GHz"] = units::rad_to_ghz(set.fsr_mean);
  doc["warnings"] = set.warnings;
  return doc;
}

inline ResonanceSet resonances_from_json(const Json& doc) {
  ResonanceSet set;
  try {
    for (const auto& r : doc.at("resonances")) {
      set.resonances.push_back(make_resonance(units::thz_to_rad(r.at("f0_THz").get<double>()),
                                              units::ghz_to_rad(r.at("fwhm_GHz").get<double>()), r.at("depth").get<double>(),
                                              r.value("residual", 0.0)));
    }
    if (doc.contains("warnings")) set.warnings = doc.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("resonance document: ") + e.what());
  }
  finalize(set);
  return set;
}

namespace detail {

inline Json stats_json(const Stats& s) { return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}}; }

inline Stats stats_from(const Json& j) {
  return {j.at("mean").get<double>(), j.at("stddev").get<double>(), j.at("min").get<double>(), j.at("max").get<double>()};
}

}  // namespace detail

inline Json to_json(const SourceReport& r) {
  Json doc;
  doc["island_count"] = r.island_count;
  doc["accessible_island_count"] = r.accessible_island_count;
  doc["average_pump_power_mW"] = r.average_pump_power_mw;
  doc["mean_fwhm_GHz"] = r.mean_fwhm_ghz;
  doc["fsr_mean_GHz"] = r.fsr_mean_ghz;
  doc["totals"] = {{"pgr_internal_Hz_per_mW", r.total_pgr_internal},
                   {"pgr_external_Hz_per_mW", r.total_pgr_external},
                   {"external_to_internal", r.external_to_internal}};
  doc["brightness_Hz_per_mW_per_GHz"] = {{"per_island_internal", r.brightness_per_island_internal},
                                         {"per_island_external", r.brightness_per_island_external},
                                         {"total_internal", r.brightness_total_internal},
                                         {"total_external", r.brightness_total_external}};
  doc["per_island_stats"] = {{"pgr_internal_Hz_per_mW", detail::stats_json(r.pgr_internal_stats)},
                             {"pgr_external_Hz_per_mW", detail::stats_json(r.pgr_external_stats)},
                             {"purity", detail::stats_json(r.purity_stats)},
                             {"p_internal_per_pulse", detail::stats_json(r.p_internal_stats)}};
  doc["schmidt"] = {{"K", r.K ? Json(*r.K) : Json(nullptr)},
                    {"entropy_nats", r.entropy_nats ? Json(*r.entropy_nats) : Json(nullptr)},
                    {"K_split", r.K_split},
                    {"K_island_weights", r.K_island_weights}};
  doc["residual_probability"] = r.residual_probability;
  doc["phase_trusted"] = r.phase_trusted;
  doc["warnings"] = r.warnings;
  doc["islands"] = Json::array();
  for (const auto& isl : r.islands) {
    doc["islands"].push_back({{"index", isl.index},
                              {"signal_THz", isl.signal_thz},
                              {"idler_THz", isl.idler_thz},
                              {"p_internal", isl.p_internal},
                              {"p_external", isl.p_external},
                              {"pgr_internal_Hz_per_mW", isl.pgr_internal},
                              {"pgr_external_Hz_per_mW", isl.pgr_external},
                              {"purity", isl.purity}});
  }
  return doc;
}

inline SourceReport report_from_json(const Json& doc) {
  SourceReport r;
  try {
    r.island_count = doc.at("island_count").get<std::size_t>();
    r.accessible_island_count = doc.at("accessible_island_count").get<std::size_t>();
    r.average_pump_power_mw = doc.at("average_pump_power_mW").get<double>();
    r.mean_fwhm_ghz = doc.at("mean_fwhm_GHz").get<double>();
    r.fsr_mean_ghz = doc.at("fsr_mean_GHz").get<double>();
    const auto& t = doc.at("totals");
    r.total_pgr_internal = t.at("pgr_internal_Hz_per_mW").get<double>();
    r.total_pgr_external = t.at("pgr_external_Hz_per_mW").get<double>();
    r.external_to_internal = t.at("external_to_internal").get<double>();
    const auto& b = doc.at("brightness_Hz_per_mW_per_GHz");
    r.brightness_per_island_internal = b.at("per_island_internal").get<double>();
    r.brightness_per_island_external = b.at("per_island_external").get<double>();
    r.brightness_total_internal = b.at("total_internal").get<double>();
    r.brightness_total_external = b.at("total_external").get<double>();
    const auto& s = doc.at("per_island_stats");
    r.pgr_internal_stats = detail::stats_from(s.at("pgr_internal_Hz_per_mW"));
    r.pgr_external_stats = detail::stats_from(s.at("pgr_external_Hz_per_mW"));
    r.purity_stats = detail::stats_from(s.at("purity"));
    r.p_internal_stats = detail::stats_from(s.at("p_internal_per_pulse"));
    const auto& k = doc.at("schmidt");
    if (!k.at("K").is_null()) r.K = k.at("K").get<double>();
    if (!k.at("entropy_nats").is_null()) r.entropy_nats = k.at("entropy_nats").get<double>();
    r.K_split = k.at("K_split").get<double>();
    r.K_island_weights = k.at("K_island_weights").get<double>();
    r.residual_probability = doc.at("residual_probability").get<double>();
    r.phase_trusted = doc.at("phase_trusted").get<bool>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    for (const auto& i : doc.at("islands")) {
      IslandReport isl;
      isl.index = i.at("index").get<int>();
      isl.signal_thz = i.at("signal_THz").get<double>();
      isl.idler_thz = i.at("idler_THz").get<double>();
      isl.p_internal = i.at("p_internal").get<double>();
      isl.p_external = i.at("p_external").get<double>();
      isl.pgr_internal = i.at("pgr_internal_Hz_per_mW").get<double>();
      isl.pgr_external = i.at("pgr_external_Hz_per_mW").get<double>();
      isl.purity = i.at("purity").get<double>();
      r.islands.push_back(isl);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("report document: ") + e.what());
  }
  return r;
}

inline std::string report_text(const SourceReport& r) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  auto line = [&](const std::string& label, const std::string& value) { os << std::left << std::setw(44) << label << value << '\n'; };
  auto num = [](double v, int digits = 4) {
    std::ostringstream s;
    s.imbue(std::locale::classic());
    s << std::setprecision(digits) << v;
    return s.str();
  };
  os << "Cavity SPDC source report\n\n";
  line("islands", std::to_string(r.island_count));
  line("accessible islands (wavelength split)", std::to_string(r.accessible_island_count));
  line("average pump power", num(r.average_pump_power_mw) + " mW");
  line("mean resonance FWHM", num(r.mean_fwhm_ghz) + " GHz");
  line("mean FSR", num(r.fsr_mean_ghz) + " GHz");
  os << '\n';
  line("total internal PGR", num(r.total_pgr_internal * 1e-9) + " GHz/mW");
  line("total external PGR", num(r.total_pgr_external * 1e-6) + " MHz/mW");
  line("external / internal", num(r.external_to_internal, 6));
  line("per-island internal PGR (mean)", num(r.pgr_internal_stats.mean * 1e-6) + " MHz/mW");
  line("per-island internal PGR (stddev)", num(r.pgr_internal_stats.stddev * 1e-6) + " MHz/mW");
  line("per-island external PGR (mean)", num(r.pgr_external_stats.mean * 1e-6) + " MHz/mW");
  line("per-island pairs per pulse (internal)", num(r.p_internal_stats.mean));
  line("brightness, per island, internal", num(r.brightness_per_island_internal * 1e-6) + " MHz/mW/GHz");
  line("brightness, per island, external", num(r.brightness_per_island_external * 1e-6) + " MHz/mW/GHz");
  line("brightness, total, internal", num(r.brightness_total_internal * 1e-6) + " MHz/mW/GHz");
  line("brightness, total, external", num(r.brightness_total_external * 1e-6) + " MHz/mW/GHz");
  os << '\n';
  line("island purity (mean)", num(r.purity_stats.mean));
  line("island purity (stddev)", num(r.purity_stats.stddev));
  line("Schmidt number K", r.K ? num(*r.K) : std::string("n/a"));
  line("entanglement entropy", r.entropy_nats ? num(*r.entropy_nats) + " nats" : std::string("n/a"));
  line("K after wavelength split", num(r.K_split));
  line("K from island weights", num(r.K_island_weights));
  line("probability outside islands", num(r.residual_probability));
  line("round-trip phase trusted", r.phase_trusted ? "yes" : "no");
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace cavspdc::io
