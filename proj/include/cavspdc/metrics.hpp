#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <lapacke.h>

#include "cavspdc/error.hpp"
#include "cavspdc/resonances.hpp"
#include "cavspdc/spdc.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

namespace detail {

// Trapezoid weight of node k on an axis of n nodes.
inline double trap(std::size_t k, std::size_t n) { return (k == 0 || k + 1 == n) ? 0.5 : 1.0; }

inline double measure(const JSAGrid& g) {
  return g.signal.step * g.idler.step / (4.0 * constants::pi * constants::pi);
}

}  // namespace detail

struct Marginal {
  std::vector<double> omega;
  std::vector<double> density;  // <n(w)>, photons per unit (w / 2 pi)
};

// <n(w)> = int dw'/2pi |j(w, w')|^2 along each signal row.
inline Marginal marginal_density(const JSAGrid& grid) {
  grid.validate();
  Marginal m;
  m.omega = grid.signal.values();
  m.density.assign(grid.rows(), 0.0);
  const double h = grid.idler.step / (2.0 * constants::pi);
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < grid.cols(); ++j) s += detail::trap(j, grid.cols()) * std::norm(grid.at(i, j));
    m.density[i] = s * h;
  }
  return m;
}

// Mean pair number per pulse over the whole grid: int int |j|^2 / 2.
inline double total_pair_probability(const JSAGrid& grid) {
  grid.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    const double wi = detail::trap(i, grid.rows());
    for (std::size_t j = 0; j < grid.cols(); ++j) s += wi * detail::trap(j, grid.cols()) * std::norm(grid.at(i, j));
  }
  return 0.5 * s * detail::measure(grid);
}

// ---------------------------------------------------------------------------
// Islands

struct IslandWindow {
  int index = 0;
  std::size_t signal_resonance = 0;  // indices into the ResonanceSet
  std::size_t idler_resonance = 0;
  double signal_center = 0.0;  // rad/s
  double idler_center = 0.0;
  double signal_lo = 0.0, signal_hi = 0.0;
  double idler_lo = 0.0, idler_hi = 0.0;
};

struct PartitionOptions {
  double pump_envelope_fwhms = 4.0;
};

namespace detail {

// Cell edges halfway between neighbouring resonances; the outermost cells
// are symmetric about their resonance.
inline std::vector<std::pair<double, double>> resonance_cells(const ResonanceSet& set) {
  const auto& r = set.resonances;
  std::vector<std::pair<double, double>> cells(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double left = k > 0 ? 0.5 * (r[k - 1].omega0 + r[k].omega0) : std::numeric_limits<double>::quiet_NaN();
    const double right = k + 1 < r.size() ? 0.5 * (r[k].omega0 + r[k + 1].omega0) : std::numeric_limits<double>::quiet_NaN();
    const double lo = k > 0 ? left : r[k].omega0 - (right - r[k].omega0);
    const double hi = k + 1 < r.size() ? right : r[k].omega0 + (r[k].omega0 - left);
    cells[k] = {lo, hi};
  }
  return cells;
}

}  // namespace detail

// One window per ordered resonance pair whose sum lies within the pump
// envelope and whose cell lies fully inside the grid. Windows of mirrored
// pairs both appear.
inline std::vector<IslandWindow> partition_islands(const JSAGrid& grid, const ResonanceSet& set, const PumpPulse& pump,
                                                   PartitionOptions options = {}) {
  if (set.resonances.empty()) fail(ErrorKind::DomainError, "island partition needs at least one resonance");
  if (set.resonances.size() < 2) return {};
  const auto cells = detail::resonance_cells(set);
  const double tolerance = options.pump_envelope_fwhms * pump.fwhm_omega();
  const double s_lo = grid.signal.start, s_hi = grid.signal.end();
  const double i_lo = grid.idler.start, i_hi = grid.idler.end();
  const double slack = 1e-9 * std::max(grid.signal.step, grid.idler.step);

  std::vector<IslandWindow> out;
  const auto& r = set.resonances;
  for (std::size_t a = 0; a < r.size(); ++a) {
    if (cells[a].first < s_lo - slack || cells[a].second > s_hi + slack) continue;
    for (std::size_t b = 0; b < r.size(); ++b) {
      if (cells[b].first < i_lo - slack || cells[b].second > i_hi + slack) continue;
      if (std::abs(r[a].omega0 + r[b].omega0 - pump.omega0) > tolerance) continue;
      IslandWindow w;
      w.index = static_cast<int>(out.size());
      w.signal_resonance = a;
      w.idler_resonance = b;
      w.signal_center = r[a].omega0;
      w.idler_center = r[b].omega0;
      w.signal_lo = cells[a].first;
      w.signal_hi = cells[a].second;
      w.idler_lo = cells[b].first;
      w.idler_hi = cells[b].second;
      out.push_back(w);
    }
  }
  return out;
}

namespace detail {

struct IndexRange {
  std::size_t begin = 0, end = 0;  // half-open
};

// Nodes with lo <= w < hi, the last node of the axis included at hi.
inline IndexRange nodes_in(const Axis& axis, double lo, double hi) {
  const double slack = 1e-9 * axis.step;
  if (lo < axis.start - slack || hi > axis.end() + slack) fail(ErrorKind::WindowOutOfGrid, "island window extends past the grid");
  auto first = static_cast<std::ptrdiff_t>(std::ceil((lo - axis.start) / axis.step - 1e-9));
  auto last = static_cast<std::ptrdiff_t>(std::ceil((hi - axis.start) / axis.step - 1e-9));
  if (hi >= axis.end() - slack) last = static_cast<std::ptrdiff_t>(axis.count);
  first = std::clamp<std::ptrdiff_t>(first, 0, static_cast<std::ptrdiff_t>(axis.count));
  last = std::clamp<std::ptrdiff_t>(last, first, static_cast<std::ptrdiff_t>(axis.count));
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

}  // namespace detail

// Writes each window's index into the grid's per-cell island labels.
inline void label_islands(JSAGrid& grid, const std::vector<IslandWindow>& windows) {
  grid.island_index.assign(grid.values.size(), -1);
  for (const auto& w : windows) {
    const auto rs = detail::nodes_in(grid.signal, w.signal_lo, w.signal_hi);
    const auto ri = detail::nodes_in(grid.idler, w.idler_lo, w.idler_hi);
    for (std::size_t i = rs.begin; i < rs.end; ++i) {
      for (std::size_t j = ri.begin; j < ri.end; ++j) grid.island_index[i * grid.cols() + j] = w.index;
    }
  }
}

struct IslandRate {
  double probability = 0.0;  // mean pairs per pulse
  double rate = 0.0;         // Hz
};

// Trapezoid quadrature of |j|^2/2 over the window's nodes, using the weights
// of the full grid so adjacent windows add up to the grid total.
inline IslandRate island_pgr(const JSAGrid& grid, const IslandWindow& window, double rep_rate) {
  grid.validate();
  if (!(rep_rate > 0.0)) fail(ErrorKind::DomainError, "repetition rate must be positive");
  const auto rs = detail::nodes_in(grid.signal, window.signal_lo, window.signal_hi);
  const auto ri = detail::nodes_in(grid.idler, window.idler_lo, window.idler_hi);
  double s = 0.0;
  for (std::size_t i = rs.begin; i < rs.end; ++i) {
    const double wi = detail::trap(i, grid.rows());
    for (std::size_t j = ri.begin; j < ri.end; ++j) s += wi * detail::trap(j, grid.cols()) * std::norm(grid.at(i, j));
  }
  IslandRate out;
  out.probability = 0.5 * s * detail::measure(grid);
  out.rate = rep_rate * out.probability;
  return out;
}

// Window covering an entire grid, for grids sampled over one island.
inline IslandWindow whole_grid_window(const JSAGrid& grid) {
  IslandWindow w;
  w.signal_lo = grid.signal.start;
  w.signal_hi = grid.signal.end();
  w.idler_lo = grid.idler.start;
  w.idler_hi = grid.idler.end();
  w.signal_center = 0.5 * (w.signal_lo + w.signal_hi);
  w.idler_center = 0.5 * (w.idler_lo + w.idler_hi);
  return w;
}

// ---------------------------------------------------------------------------
// Schmidt decomposition

struct SchmidtResult {
  std::vector<double> singular_values;  // descending
  std::vector<double> coefficients;     // lambda_n, summing to one
  double K = 0.0;
  double entropy_nats = 0.0;
  // Leading modes as unit vectors over the signal and idler axes; filled only
  // when requested.
  std::vector<std::vector<Complex>> signal_modes;
  std::vector<std::vector<Complex>> idler_modes;

  double entropy_bits() const { return entropy_nats / std::log(2.0); }
  double purity() const { return 1.0 / K; }
};

namespace detail {

inline SchmidtResult schmidt_from_values(std::vector<double> s) {
  SchmidtResult out;
  double total = 0.0;
  for (double v : s) total += v * v;
  if (!(total > 0.0) || !std::isfinite(total)) fail(ErrorKind::ZeroGrid, "Schmidt decomposition of an all-zero grid");
  out.coefficients.reserve(s.size());
  double sum_sq = 0.0;
  for (double v : s) {
    const double lambda = v * v / total;
    out.coefficients.push_back(lambda);
    sum_sq += lambda * lambda;
    if (lambda > 0.0) out.entropy_nats -= lambda * std::log(lambda);
  }
  out.K = 1.0 / sum_sq;
  out.singular_values = std::move(s);
  return out;
}

// SVD of a row-major m x n block; modes > 0 also returns that many leading
// singular vectors.
inline SchmidtResult svd_block(std::vector<Complex> a, std::size_t m, std::size_t n, double weight, std::size_t modes) {
  for (auto& v : a) v *= weight;
  const auto mm = static_cast<lapack_int>(m);
  const auto nn = static_cast<lapack_int>(n);
  const std::size_t k = std::min(m, n);
  std::vector<double> s(k);
  lapack_int info = 0;
  std::vector<Complex> u, vt;
  if (modes == 0) {
    info = LAPACKE_zgesdd(LAPACK_ROW_MAJOR, 'N', mm, nn, reinterpret_cast<lapack_complex_double*>(a.data()), nn, s.data(),
                          nullptr, mm, nullptr, nn);  // row-major wrapper checks ld even for jobz N
  } else {
    u.resize(m * k);
    vt.resize(k * n);
    info = LAPACKE_zgesdd(LAPACK_ROW_MAJOR, 'S', mm, nn, reinterpret_cast<lapack_complex_double*>(a.data()), nn, s.data(),
                          reinterpret_cast<lapack_complex_double*>(u.data()), static_cast<lapack_int>(k),
                          reinterpret_cast<lapack_complex_double*>(vt.data()), nn);
  }
  if (info < 0) fail(ErrorKind::NumericFailure, "SVD rejected argument " + std::to_string(-info));
  if (info > 0) fail(ErrorKind::NumericFailure, "SVD did not converge");
  SchmidtResult out = schmidt_from_values(std::move(s));
  for (std::size_t q = 0; q < std::min(modes, k); ++q) {
    std::vector<Complex> sig(m), idl(n);
    for (std::size_t i = 0; i < m; ++i) sig[i] = u[i * k + q];
    for (std::size_t j = 0; j < n; ++j) idl[j] = vt[q * n + j];
    out.signal_modes.push_back(std::move(sig));
    out.idler_modes.push_back(std::move(idl));
  }
  return out;
}

}  // namespace detail

// SVD of the amplitude array with every cell weighted by sqrt(dws dwi)/2pi.
inline SchmidtResult schmidt_decompose(const JSAGrid& grid, std::size_t modes = 0) {
  grid.validate();
  const double weight = std::sqrt(grid.signal.step * grid.idler.step) / (2.0 * constants::pi);
  return detail::svd_block(grid.values, grid.rows(), grid.cols(), weight, modes);
}

// Purity of the window's sub-grid, sum of lambda_n^2.
inline double island_purity(const JSAGrid& grid, const IslandWindow& window) {
  grid.validate();
  const auto rs = detail::nodes_in(grid.signal, window.signal_lo, window.signal_hi);
  const auto ri = detail::nodes_in(grid.idler, window.idler_lo, window.idler_hi);
  const std::size_t m = rs.end - rs.begin;
  const std::size_t n = ri.end - ri.begin;
  if (m == 0 || n == 0) fail(ErrorKind::WindowOutOfGrid, "island window contains no grid nodes");
  std::vector<Complex> block(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) block[i * n + j] = grid.at(rs.begin + i, ri.begin + j);
  }
  const double weight = std::sqrt(grid.signal.step * grid.idler.step) / (2.0 * constants::pi);
  return 1.0 / detail::svd_block(std::move(block), m, n, weight, 0).K;
}

// ---------------------------------------------------------------------------
// Wavelength splitting

struct SplitMetrics {
  std::size_t accessible_count = 0;
  double K_split = 0.0;
  std::vector<double> folded_weights;  // normalized, one per retained island
};

// Folds each island onto its mirror across w_s = w_i, adding their
// probabilities, and evaluates the Schmidt number of the folded weights.
inline SplitMetrics wavelength_split_metrics(const std::vector<IslandWindow>& windows, const std::vector<double>& weights) {
  if (windows.size() != weights.size()) fail(ErrorKind::GridMismatch, "one weight per island window is required");
  SplitMetrics out;
  if (windows.empty()) return out;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> lookup;
  for (std::size_t k = 0; k < windows.size(); ++k) lookup[{windows[k].signal_resonance, windows[k].idler_resonance}] = k;
  std::vector<bool> used(windows.size(), false);
  std::vector<double> folded;
  for (std::size_t k = 0; k < windows.size(); ++k) {
    if (used[k]) continue;
    const auto it = lookup.find({windows[k].idler_resonance, windows[k].signal_resonance});
    if (it == lookup.end()) fail(ErrorKind::AsymmetricWindows, "island " + std::to_string(windows[k].index) + " has no mirror image");
    used[k] = true;
    double w = weights[k];
    if (it->second != k) {
      used[it->second] = true;
      w += weights[it->second];
    }
    folded.push_back(w);
  }
  const double total = std::accumulate(folded.begin(), folded.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorKind::ZeroGrid, "island weights are all zero");
  double sum_sq = 0.0;
  for (auto& w : folded) {
    w /= total;
    sum_sq += w * w;
  }
  out.accessible_count = folded.size();
  out.K_split = 1.0 / sum_sq;
  out.folded_weights = std::move(folded);
  return out;
}

inline SplitMetrics wavelength_split_metrics(const JSAGrid& grid, const std::vector<IslandWindow>& windows) {
  std::vector<double> weights;
  weights.reserve(windows.size());
  for (const auto& w : windows) weights.push_back(island_pgr(grid, w, 1.0).probability);
  return wavelength_split_metrics(windows, weights);
}

// ---------------------------------------------------------------------------
// Report

struct Stats {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

inline Stats stats_of(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(v.size()));
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

struct IslandReport {
  int index = 0;
  double signal_thz = 0.0;
  double idler_thz = 0.0;
  double p_internal = 0.0;  // pairs per pulse
  double p_external = 0.0;
  double pgr_internal = 0.0;  // Hz/mW
  double pgr_external = 0.0;  // Hz/mW
  double purity = 0.0;
};

struct SourceReport {
  std::vector<IslandReport> islands;
  std::size_t island_count = 0;
  std::size_t accessible_island_count = 0;

  double average_pump_power_mw = 0.0;
  double mean_fwhm_ghz = 0.0;
  double fsr_mean_ghz = 0.0;

  double total_pgr_internal = 0.0;  // Hz/mW
  double total_pgr_external = 0.0;
  double external_to_internal = 0.0;
  Stats pgr_internal_stats;
  Stats pgr_external_stats;
  Stats purity_stats;
  Stats p_internal_stats;

  // Hz/mW/GHz. Per-island: mean island rate over the mean linewidth.
  // Total: summed rate over the mean linewidth.
  double brightness_per_island_internal = 0.0;
  double brightness_per_island_external = 0.0;
  double brightness_total_internal = 0.0;
  double brightness_total_external = 0.0;

  std::optional<double> K;
  std::optional<double> entropy_nats;
  double K_split = 0.0;
  double K_island_weights = 0.0;  // 1/sum p^2 over island probabilities; diagnostic
  double residual_probability = 0.0;  // pair probability outside all islands
  bool phase_trusted = true;
  std::vector<std::string> warnings;
};

// Sums island rates and derives brightness in both conventions.
inline void totals_and_brightness(SourceReport& report, double mean_fwhm_hz, double average_power_w) {
  report.island_count = report.islands.size();
  report.average_pump_power_mw = average_power_w * 1e3;
  report.mean_fwhm_ghz = mean_fwhm_hz * 1e-9;
  std::vector<double> pi, pe, pu, pp;
  report.total_pgr_internal = 0.0;
  report.total_pgr_external = 0.0;
  for (const auto& isl : report.islands) {
    pi.push_back(isl.pgr_internal);
    pe.push_back(isl.pgr_external);
    pu.push_back(isl.purity);
    pp.push_back(isl.p_internal);
    report.total_pgr_internal += isl.pgr_internal;
    report.total_pgr_external += isl.pgr_external;
  }
  report.pgr_internal_stats = stats_of(pi);
  report.pgr_external_stats = stats_of(pe);
  report.purity_stats = stats_of(pu);
  report.p_internal_stats = stats_of(pp);
  report.external_to_internal = report.total_pgr_internal > 0.0 ? report.total_pgr_external / report.total_pgr_internal : 0.0;
  if (report.mean_fwhm_ghz > 0.0 && !report.islands.empty()) {
    report.brightness_per_island_internal = report.pgr_internal_stats.mean / report.mean_fwhm_ghz;
    report.brightness_per_island_external = report.pgr_external_stats.mean / report.mean_fwhm_ghz;
    report.brightness_total_internal = report.total_pgr_internal / report.mean_fwhm_ghz;
    report.brightness_total_external = report.total_pgr_external / report.mean_fwhm_ghz;
  }
}

}  // namespace cavspdc
