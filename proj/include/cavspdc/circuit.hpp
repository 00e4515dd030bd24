#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cavspdc/dispersion.hpp"
#include "cavspdc/error.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

using Complex = std::complex<double>;

inline double db_to_amplitude(double loss_db) { return std::pow(10.0, -loss_db / 20.0); }

// 2x2 scattering matrix at one frequency. Port 1 is the input side, port 2 the
// output side; s21 is forward transmission.
struct SMatrix2 {
  Complex s11{0.0, 0.0};
  Complex s12{0.0, 0.0};
  Complex s21{0.0, 0.0};
  Complex s22{0.0, 0.0};
};

struct SParamBlock {
  std::vector<double> omega;  // rad/s, strictly increasing
  std::vector<SMatrix2> s;
  bool reciprocal = true;
  bool lossless = false;
  // Cleared for blocks whose phase comes from the segmented-bend
  // approximation; only their amplitudes are reliable.
  bool phase_trusted = true;

  static constexpr int n_ports = 2;

  std::size_t size() const { return omega.size(); }
};

inline void check_grid(std::span<const double> omega) {
  if (omega.empty()) fail(ErrorKind::DomainError, "frequency grid is empty");
  for (std::size_t k = 0; k + 1 < omega.size(); ++k) {
    if (!(omega[k + 1] > omega[k])) fail(ErrorKind::DomainError, "frequency grid must be strictly increasing");
  }
}

// Largest deviation from S^dagger S = I and S = S^T across the grid.
struct BlockDefects {
  double unitarity = 0.0;
  double reciprocity = 0.0;
};

inline BlockDefects block_defects(const SParamBlock& block) {
  BlockDefects d;
  for (const auto& m : block.s) {
    const Complex g11 = std::conj(m.s11) * m.s11 + std::conj(m.s21) * m.s21;
    const Complex g22 = std::conj(m.s12) * m.s12 + std::conj(m.s22) * m.s22;
    const Complex g12 = std::conj(m.s11) * m.s12 + std::conj(m.s21) * m.s22;
    d.unitarity = std::max({d.unitarity, std::abs(g11 - 1.0), std::abs(g22 - 1.0), std::abs(g12)});
    d.reciprocity = std::max(d.reciprocity, std::abs(m.s12 - m.s21));
  }
  return d;
}

// Directional coupler in through/cross form: through = sigma, cross = i kappa.
inline SParamBlock coupler_block(double kappa_power, std::span<const double> omega) {
  if (!(kappa_power >= 0.0 && kappa_power <= 1.0)) fail(ErrorKind::DomainError, "coupler power cross-coupling must lie in [0, 1]");
  check_grid(omega);
  const double sigma = std::sqrt(1.0 - kappa_power);
  const Complex cross{0.0, std::sqrt(kappa_power)};
  SParamBlock block;
  block.omega.assign(omega.begin(), omega.end());
  block.s.assign(omega.size(), SMatrix2{sigma, cross, cross, sigma});
  block.lossless = true;
  return block;
}

inline SParamBlock waveguide_block(double length, const DispersionModel& model, double loss_db_per_m,
                                   std::span<const double> omega) {
  if (!(length > 0.0)) fail(ErrorKind::DomainError, "waveguide length must be positive");
  if (loss_db_per_m < 0.0) fail(ErrorKind::DomainError, "propagation loss must be non-negative");
  check_grid(omega);
  const double amplitude = db_to_amplitude(loss_db_per_m * length);
  SParamBlock block;
  block.omega.assign(omega.begin(), omega.end());
  block.s.reserve(omega.size());
  for (double w : omega) {
    const Complex t = amplitude * std::polar(1.0, beta(model, w) * length);
    block.s.push_back({0.0, t, t, 0.0});
  }
  block.lossless = loss_db_per_m == 0.0;
  return block;
}

// Frequency-flat lumped element: power transmission 10^{-dB/10}, no phase.
inline SParamBlock loss_block(double loss_db, std::span<const double> omega) {
  if (loss_db < 0.0) fail(ErrorKind::DomainError, "lumped loss must be non-negative");
  check_grid(omega);
  const Complex t = db_to_amplitude(loss_db);
  SParamBlock block;
  block.omega.assign(omega.begin(), omega.end());
  block.s.assign(omega.size(), SMatrix2{0.0, t, t, 0.0});
  block.lossless = loss_db == 0.0;
  return block;
}

namespace detail {

// Redheffer star product of two 2-ports: port 2 of a feeds port 1 of b.
inline SMatrix2 star(const SMatrix2& a, const SMatrix2& b) {
  const Complex denom = 1.0 - a.s22 * b.s11;
  if (std::abs(denom) < 1e-300) fail(ErrorKind::NumericFailure, "resonant cascade with unit loop gain");
  SMatrix2 out;
  out.s11 = a.s11 + a.s12 * b.s11 * a.s21 / denom;
  out.s12 = a.s12 * b.s12 / denom;
  out.s21 = b.s21 * a.s21 / denom;
  out.s22 = b.s22 + b.s21 * a.s22 * b.s12 / denom;
  return out;
}

inline bool same_grid(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::abs(a[k] - b[k]) > 1e-12 * std::abs(a[k])) return false;
  }
  return true;
}

}  // namespace detail

// Cascade of transmission 2-ports in the given order.
inline SParamBlock cascade(std::span<const SParamBlock> blocks) {
  if (blocks.empty()) fail(ErrorKind::DomainError, "cascade needs at least one block");
  SParamBlock out = blocks.front();
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    const auto& next = blocks[b];
    if (!detail::same_grid(out.omega, next.omega)) fail(ErrorKind::GridMismatch, "cascaded blocks use different frequency grids");
    for (std::size_t k = 0; k < out.size(); ++k) out.s[k] = detail::star(out.s[k], next.s[k]);
    out.reciprocal = out.reciprocal && next.reciprocal;
    out.lossless = out.lossless && next.lossless;
    out.phase_trusted = out.phase_trusted && next.phase_trusted;
  }
  return out;
}

inline SParamBlock cascade(std::initializer_list<SParamBlock> blocks) {
  return cascade(std::span<const SParamBlock>(blocks.begin(), blocks.size()));
}

struct BendOptions {
  double loss_db_per_m = 0.0;
  // Fresnel-type reflection at the index step between neighbouring segments,
  // the dominant error of a staircase approximation to a smooth bend.
  bool interface_reflections = true;
};

// Staircase approximation of a bend: each segment becomes a straight guide
// whose index is interpolated between the in-plane axes at the segment's
// tangent angle. Phase is flagged untrusted.
inline SParamBlock segmented_bend_block(std::span<const BendSegment> segments, const DispersionModel& n1_model,
                                        const DispersionModel& n2_model, std::span<const double> omega,
                                        BendOptions options = {}) {
  if (segments.empty()) fail(ErrorKind::DomainError, "segmented bend needs at least one segment");
  check_grid(omega);
  for (const auto& seg : segments) validate(seg);

  const std::size_t nw = omega.size();
  std::vector<double> n1(nw), n2(nw);
  for (std::size_t k = 0; k < nw; ++k) {
    n1[k] = n1_model.n_eff(omega[k]);
    n2[k] = n2_model.n_eff(omega[k]);
  }

  SParamBlock total;
  total.omega.assign(omega.begin(), omega.end());
  total.s.assign(nw, SMatrix2{0.0, 1.0, 1.0, 0.0});
  std::vector<double> previous_index;
  for (const auto& seg : segments) {
    const double amplitude = db_to_amplitude(options.loss_db_per_m * seg.length);
    std::vector<double> index(nw);
    for (std::size_t k = 0; k < nw; ++k) index[k] = angle_interpolated_index(n1[k], n2[k], seg.tangent_angle);
    for (std::size_t k = 0; k < nw; ++k) {
      if (options.interface_reflections && !previous_index.empty()) {
        const double r = (previous_index[k] - index[k]) / (previous_index[k] + index[k]);
        const double t = std::sqrt(1.0 - r * r);
        total.s[k] = detail::star(total.s[k], SMatrix2{r, t, t, -r});
      }
      const Complex prop = amplitude * std::polar(1.0, index[k] * omega[k] * seg.length / constants::speed_of_light);
      total.s[k] = detail::star(total.s[k], SMatrix2{0.0, prop, prop, 0.0});
    }
    previous_index = std::move(index);
  }
  total.lossless = options.loss_db_per_m == 0.0;
  total.phase_trusted = false;
  return total;
}

// Coupler reflectivity/transmissivity and the round-trip amplitude survival
// split into the nonlinear section and the rest of the cavity.
struct CavityCoupling {
  double sigma = 0.0;
  double kappa = 1.0;
  double eta_nl = 1.0;
  double eta_cav = 1.0;

  static CavityCoupling from_sigma(double sigma, double eta_nl = 1.0, double eta_cav = 1.0) {
    CavityCoupling c{sigma, std::sqrt(std::max(0.0, 1.0 - sigma * sigma)), eta_nl, eta_cav};
    c.validate();
    return c;
  }
  static CavityCoupling from_kappa_power(double kappa_power, double eta_nl = 1.0, double eta_cav = 1.0) {
    if (!(kappa_power >= 0.0 && kappa_power <= 1.0)) fail(ErrorKind::DomainError, "power coupling must lie in [0, 1]");
    return from_sigma(std::sqrt(1.0 - kappa_power), eta_nl, eta_cav);
  }

  double eta() const { return eta_nl * eta_cav; }
  // sigma * eta, the round-trip feedback magnitude.
  double loop_gain() const { return sigma * eta(); }

  void validate() const {
    if (!(sigma >= 0.0 && sigma <= 1.0)) fail(ErrorKind::DomainError, "coupler reflectivity must lie in [0, 1]");
    if (std::abs(kappa - std::sqrt(1.0 - sigma * sigma)) > 1e-12) fail(ErrorKind::DomainError, "kappa must equal sqrt(1 - sigma^2)");
    if (!(eta_nl > 0.0 && eta_nl <= 1.0) || !(eta_cav > 0.0 && eta_cav <= 1.0)) {
      fail(ErrorKind::DomainError, "round-trip survival factors must lie in (0, 1]");
    }
  }
};

// All-pass response of the single-bus racetrack.
inline Complex racetrack_h(const CavityCoupling& c, double phase) {
  const Complex e = std::polar(1.0, phase);
  const double eta = c.eta();
  return -e * (eta - c.sigma * std::conj(e)) / (1.0 - c.sigma * eta * e);
}

inline std::vector<Complex> racetrack_h(const CavityCoupling& c, std::span<const double> phase) {
  c.validate();
  std::vector<Complex> out(phase.size());
  for (std::size_t k = 0; k < phase.size(); ++k) out[k] = racetrack_h(c, phase[k]);
  return out;
}

inline double buildup_factor(const CavityCoupling& c, double phase) {
  return 1.0 / std::norm(1.0 - c.loop_gain() * std::polar(1.0, phase));
}

inline std::vector<double> buildup_factor(const CavityCoupling& c, std::span<const double> phase) {
  if (!(c.loop_gain() < 1.0)) fail(ErrorKind::DomainError, "buildup factor requires sigma * eta < 1");
  std::vector<double> out(phase.size());
  for (std::size_t k = 0; k < phase.size(); ++k) out[k] = buildup_factor(c, phase[k]);
  return out;
}

// Same filter written with the finesse: 1/(1-x)^2 / (1 + (2F/pi)^2 sin^2(phase/2)).
inline double buildup_factor_finesse_form(const CavityCoupling& c, double phase) {
  const double x = c.loop_gain();
  const double finesse = constants::pi * std::sqrt(x) / (1.0 - x);
  const double coeff = 2.0 * finesse / constants::pi;
  const double s = std::sin(0.5 * phase);
  return 1.0 / ((1.0 - x) * (1.0 - x)) / (1.0 + coeff * coeff * s * s);
}

// |h|^2 of a dispersionless racetrack whose round-trip phase is w T.
inline std::vector<double> allpass_transmission(const CavityCoupling& c, double round_trip_time,
                                                std::span<const double> omega) {
  c.validate();
  std::vector<double> out(omega.size());
  for (std::size_t k = 0; k < omega.size(); ++k) out[k] = std::norm(racetrack_h(c, omega[k] * round_trip_time));
  return out;
}

// ---------------------------------------------------------------------------
// Racetrack netlist: one bus coupler closing a loop of 2-port components.

enum class ComponentKind { waveguide, bend, loss, tap };

struct NetlistComponent {
  std::string name;
  ComponentKind kind = ComponentKind::waveguide;
  double length = 0.0;          // m (waveguide)
  double loss_db_per_m = 0.0;   // waveguide / bend
  double loss_db = 0.0;         // lumped loss element
  double kappa_power = 0.0;     // tap: power dropped out of the loop
  bool nonlinear = false;       // marks the poled section
  // bend: discretized geometry; uses the anisotropic axis models
  double bend_radius = 0.0;
  double bend_start_angle = 0.0;
  double bend_sweep = 0.0;
  std::size_t bend_segments = 0;
};

struct Netlist {
  // Bus coupler power cross-coupling, either flat or tabulated against
  // frequency (rad/s, linear interpolation, clamped at the table ends).
  double bus_kappa_power = 0.0;
  std::vector<std::pair<double, double>> bus_kappa_table;
  std::vector<NetlistComponent> loop;

  double bus_kappa_power_at(double omega) const {
    if (bus_kappa_table.empty()) return bus_kappa_power;
    if (omega <= bus_kappa_table.front().first) return bus_kappa_table.front().second;
    if (omega >= bus_kappa_table.back().first) return bus_kappa_table.back().second;
    auto it = std::lower_bound(bus_kappa_table.begin(), bus_kappa_table.end(), omega,
                               [](const auto& p, double w) { return p.first < w; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double t = (omega - lo.first) / (hi.first - lo.first);
    return lo.second + t * (hi.second - lo.second);
  }

  double loop_length() const {
    double total = 0.0;
    for (const auto& c : loop) {
      if (c.kind == ComponentKind::waveguide) total += c.length;
      if (c.kind == ComponentKind::bend) total += c.bend_radius * c.bend_sweep;
    }
    return total;
  }
};

// Models available to the netlist elements of one band.
struct BandModels {
  const DispersionModel* guide = nullptr;
  const DispersionModel* axis_n1 = nullptr;
  const DispersionModel* axis_n2 = nullptr;
};

// Reduction of the racetrack to the three quantities the quantum formulas use,
// sampled on a grid.
struct LoopResponse {
  std::vector<double> omega;
  std::vector<double> sigma;
  std::vector<double> eta_nl;
  std::vector<double> eta_cav;
  std::vector<double> phase;  // round-trip phase, unwrapped along the grid
  bool phase_trusted = true;

  CavityCoupling coupling(std::size_t k) const { return CavityCoupling::from_sigma(sigma[k], eta_nl[k], eta_cav[k]); }
};

inline void validate_netlist(const Netlist& netlist) {
  if (netlist.loop.empty()) fail(ErrorKind::MalformedNetlist, "racetrack loop has no components");
  if (netlist.bus_kappa_table.empty() && !(netlist.bus_kappa_power >= 0.0 && netlist.bus_kappa_power <= 1.0)) {
    fail(ErrorKind::MalformedNetlist, "bus coupler cross-coupling must lie in [0, 1]");
  }
  for (std::size_t k = 0; k + 1 < netlist.bus_kappa_table.size(); ++k) {
    if (!(netlist.bus_kappa_table[k + 1].first > netlist.bus_kappa_table[k].first)) {
      fail(ErrorKind::MalformedNetlist, "bus coupler table frequencies must increase");
    }
  }
  for (const auto& [w, k2] : netlist.bus_kappa_table) {
    if (!(k2 >= 0.0 && k2 <= 1.0)) fail(ErrorKind::MalformedNetlist, "bus coupler table entries must lie in [0, 1]");
  }
  int poled = 0;
  for (const auto& c : netlist.loop) {
    switch (c.kind) {
      case ComponentKind::waveguide:
        if (!(c.length > 0.0)) fail(ErrorKind::MalformedNetlist, "waveguide '" + c.name + "' needs a positive length");
        break;
      case ComponentKind::bend:
        if (!(c.bend_radius > 0.0) || !(c.bend_sweep > 0.0) || c.bend_segments == 0) {
          fail(ErrorKind::MalformedNetlist, "bend '" + c.name + "' needs radius, sweep and segment count");
        }
        break;
      case ComponentKind::loss:
        if (c.loss_db < 0.0) fail(ErrorKind::MalformedNetlist, "loss '" + c.name + "' must be non-negative");
        break;
      case ComponentKind::tap:
        if (!(c.kappa_power >= 0.0 && c.kappa_power < 1.0)) fail(ErrorKind::MalformedNetlist, "tap '" + c.name + "' must drop less than all power");
        break;
    }
    if (c.nonlinear) {
      if (c.kind != ComponentKind::waveguide) fail(ErrorKind::MalformedNetlist, "only a straight waveguide can be the poled section");
      ++poled;
    }
  }
  if (poled > 1) fail(ErrorKind::MalformedNetlist, "at most one poled section is supported");
}

inline SParamBlock component_block(const NetlistComponent& c, const BandModels& models, std::span<const double> omega) {
  switch (c.kind) {
    case ComponentKind::waveguide:
      if (models.guide == nullptr) fail(ErrorKind::MalformedNetlist, "no waveguide dispersion for '" + c.name + "'");
      return waveguide_block(c.length, *models.guide, c.loss_db_per_m, omega);
    case ComponentKind::bend: {
      if (models.axis_n1 == nullptr || models.axis_n2 == nullptr) {
        fail(ErrorKind::MalformedNetlist, "bend '" + c.name + "' needs in-plane axis index models");
      }
      const auto segments = discretize_arc(c.bend_radius, c.bend_start_angle, c.bend_sweep, c.bend_segments);
      return segmented_bend_block(segments, *models.axis_n1, *models.axis_n2, omega, {c.loss_db_per_m, true});
    }
    case ComponentKind::loss:
      return loss_block(c.loss_db, omega);
    case ComponentKind::tap: {
      const double t = std::sqrt(1.0 - c.kappa_power);
      SParamBlock block;
      block.omega.assign(omega.begin(), omega.end());
      block.s.assign(omega.size(), SMatrix2{0.0, t, t, 0.0});
      block.lossless = c.kappa_power == 0.0;
      return block;
    }
  }
  fail(ErrorKind::MalformedNetlist, "unknown component kind");
}

// Cascades the loop and reads off sigma, eta and the round-trip phase. The
// survival of the poled section is reported as eta_nl, everything else as
// eta_cav.
inline LoopResponse assemble_loop(const Netlist& netlist, const BandModels& models, std::span<const double> omega) {
  validate_netlist(netlist);
  check_grid(omega);
  const std::size_t n = omega.size();
  std::vector<SParamBlock> blocks;
  blocks.reserve(netlist.loop.size());
  std::vector<double> eta_nl(n, 1.0);
  for (const auto& c : netlist.loop) {
    blocks.push_back(component_block(c, models, omega));
    if (c.nonlinear) {
      for (std::size_t k = 0; k < n; ++k) eta_nl[k] = std::abs(blocks.back().s[k].s21);
    }
  }
  const SParamBlock loop = cascade(blocks);

  LoopResponse r;
  r.omega.assign(omega.begin(), omega.end());
  r.sigma.resize(n);
  r.eta_nl = std::move(eta_nl);
  r.eta_cav.resize(n);
  r.phase.resize(n);
  r.phase_trusted = loop.phase_trusted;
  double previous = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double kappa2 = netlist.bus_kappa_power_at(omega[k]);
    r.sigma[k] = std::sqrt(1.0 - kappa2);
    const double eta = std::abs(loop.s[k].s21);
    r.eta_cav[k] = std::min(1.0, eta / r.eta_nl[k]);
    double ph = std::arg(loop.s[k].s21);
    if (k > 0) {
      // Unwrap relative to the previous sample.
      ph += 2.0 * constants::pi * std::round((previous - ph) / (2.0 * constants::pi));
    }
    r.phase[k] = ph;
    previous = ph;
  }
  return r;
}

// Power transmission |h|^2 of the bus waveguide past the racetrack.
inline std::vector<double> transmission_spectrum(const Netlist& netlist, const BandModels& models,
                                                 std::span<const double> omega) {
  const LoopResponse loop = assemble_loop(netlist, models, omega);
  std::vector<double> power(omega.size());
  for (std::size_t k = 0; k < omega.size(); ++k) power[k] = std::norm(racetrack_h(loop.coupling(k), loop.phase[k]));
  return power;
}

}  // namespace cavspdc
