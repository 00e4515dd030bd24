#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cavspdc/circuit.hpp"
#include "cavspdc/dispersion.hpp"
#include "cavspdc/error.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

// ---------------------------------------------------------------------------
// Pump pulse

// Transform-limited Gaussian pulse. fwhm_hz is the FWHM of the normalized
// spectral density Gamma(w), expressed in ordinary frequency.
struct PumpPulse {
  double omega0 = 0.0;    // rad/s
  double fwhm_hz = 0.0;   // Hz
  double energy = 0.0;    // J
  double rep_rate = 0.0;  // Hz

  void validate() const {
    if (!(omega0 > 0.0)) fail(ErrorKind::DomainError, "pump center frequency must be positive");
    if (!(fwhm_hz > 0.0)) fail(ErrorKind::DomainError, "pump bandwidth must be positive");
    if (!(energy >= 0.0)) fail(ErrorKind::DomainError, "pump pulse energy must be non-negative");
    if (!(rep_rate > 0.0)) fail(ErrorKind::DomainError, "pump repetition rate must be positive");
  }

  // Gaussian standard deviation of Gamma in rad/s.
  double sigma_omega() const {
    return units::hz_to_rad(fwhm_hz) / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  }
  double fwhm_omega() const { return units::hz_to_rad(fwhm_hz); }
  // Temporal intensity FWHM; the Gaussian time-bandwidth product is 2 ln2 / pi.
  double fwhm_time() const { return 2.0 * std::log(2.0) / constants::pi / fwhm_hz; }
  double average_power() const { return energy * rep_rate; }
  double photon_number() const { return energy / (constants::hbar * omega0); }
};

// Unit-normalized spectral density, 1/(rad/s).
inline double pump_spectrum(const PumpPulse& pulse, double omega_p) {
  const double s = pulse.sigma_omega();
  const double d = (omega_p - pulse.omega0) / s;
  return std::exp(-0.5 * d * d) / (std::sqrt(2.0 * constants::pi) * s);
}

// Coherent amplitude sqrt(<n_p>) per unit angular frequency; real and
// non-negative by convention.
inline double pump_amplitude(const PumpPulse& pulse, double omega_p) {
  if (!(omega_p > 0.0)) fail(ErrorKind::DomainError, "pump frequency must be positive");
  return std::sqrt(pulse.energy * pump_spectrum(pulse, omega_p) / (constants::hbar * omega_p));
}

// ---------------------------------------------------------------------------
// Nonlinear section and coupling coefficient

inline double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

struct NonlinearSection {
  double length = 0.0;    // poled length, m
  double period = 0.0;    // poling period, m
  double chi2 = 0.0;      // effective chi2, m/V
  double overlap = 0.0;   // triple-mode overlap, 1/m
  const DispersionModel* signal = nullptr;
  const DispersionModel* pump = nullptr;
  QpmConvention convention = QpmConvention::pi_over_lambda;
  // Doubles J, matching the alternative form of the Heisenberg equation.
  bool heisenberg_factor_two = false;

  void validate() const {
    if (!(length > 0.0)) fail(ErrorKind::DomainError, "poled length must be positive");
    if (!(period > 0.0)) fail(ErrorKind::DomainError, "poling period must be positive");
    if (!(chi2 >= 0.0)) fail(ErrorKind::DomainError, "chi2 must be non-negative");
    if (!(overlap >= 0.0)) fail(ErrorKind::DomainError, "mode overlap must be non-negative");
    if (signal == nullptr || pump == nullptr) fail(ErrorKind::DomainError, "nonlinear section needs signal and pump dispersion");
  }
};

// sqrt(2) hbar^{3/2} / (pi sqrt(eps0)): the frequency-independent part of G
// before L, chi2 and the overlap are applied.
inline double coupling_prefactor() {
  return std::sqrt(2.0) * std::pow(constants::hbar, 1.5) / (constants::pi * std::sqrt(constants::epsilon0));
}

// Dimensional audit of the assembled constant. G must come out in J s^{3/2}
// so that J = G alpha_p / hbar carries seconds and J dw is a pure number.
namespace dimension_audit {
inline constexpr Dimension hbar = dim::joule * dim::second;
inline constexpr Dimension length = dim::meter;
inline constexpr Dimension overlap = dim::dimensionless / dim::meter;
inline constexpr Dimension chi2 = dim::meter / dim::volt;
inline constexpr Dimension freq_over_velocity_cubed =
    pow_half(dim::angular_frequency * dim::angular_frequency * dim::angular_frequency /
                 (dim::velocity * dim::velocity * dim::velocity), 1);
inline constexpr Dimension coupling_G = pow_half(hbar, 3) * length / pow_half(dim::farad / dim::meter, 1) *
                                         freq_over_velocity_cubed * overlap * chi2;
inline constexpr Dimension pump_amplitude = pow_half(dim::second, 1);  // sqrt(1/(rad/s))
inline constexpr Dimension jsa_J = coupling_G * pump_amplitude / hbar;
inline constexpr Dimension jsa_measure = jsa_J * dim::angular_frequency;

static_assert(coupling_G == pow_half(dim::joule, 2) * pow_half(dim::second, 3));
static_assert(jsa_J == dim::second);
static_assert(jsa_measure == dim::dimensionless);
}  // namespace dimension_audit

namespace detail {

// Per-frequency factors of G that depend on one photon only.
struct PhotonFactors {
  double beta = 0.0;
  double root = 0.0;     // sqrt(w / v_g)
  double inv_n2 = 0.0;   // 1 / n^2
};

inline PhotonFactors photon_factors(const DispersionModel& model, double omega) {
  const double n = model.n_eff(omega);
  const double vg = group_velocity(model, omega);
  return {n * omega / constants::speed_of_light, std::sqrt(omega / vg), 1.0 / (n * n)};
}

inline Complex coupling_from_factors(const NonlinearSection& s, const PhotonFactors& a, const PhotonFactors& b,
                                     const PhotonFactors& p) {
  const double dbeta = p.beta - a.beta - b.beta - qpm_wavenumber(s.period, s.convention);
  const double magnitude = coupling_prefactor() * s.length * a.root * b.root * p.root * s.overlap * s.chi2 * a.inv_n2 *
                           b.inv_n2 * p.inv_n2 * sinc(0.5 * dbeta * s.length);
  return {0.0, magnitude};
}

}  // namespace detail

// Nonlinear coupling coefficient G(w, w', w + w') in J s^{3/2}.
inline Complex coupling_G(const NonlinearSection& section, double omega, double omega_prime) {
  section.validate();
  const auto a = detail::photon_factors(*section.signal, omega);
  const auto b = detail::photon_factors(*section.signal, omega_prime);
  const auto p = detail::photon_factors(*section.pump, omega + omega_prime);
  return detail::coupling_from_factors(section, a, b, p);
}

// Straight-waveguide JSA J = (i/hbar) G alpha_p, in seconds.
inline Complex waveguide_J(const NonlinearSection& section, const PumpPulse& pulse, double omega, double omega_prime) {
  const double factor = section.heisenberg_factor_two ? 2.0 : 1.0;
  return Complex{0.0, factor / constants::hbar} * coupling_G(section, omega, omega_prime) *
         pump_amplitude(pulse, omega + omega_prime);
}

// ---------------------------------------------------------------------------
// Mode-profile overlap

// Transverse field on a uniform rectangular grid, row-major in (x, y).
struct ModeProfile {
  std::vector<double> x;  // m
  std::vector<double> y;  // m
  std::vector<Complex> field;
  std::vector<double> weight;  // F/m

  double cell_area() const {
    if (x.size() < 2 || y.size() < 2) fail(ErrorKind::DomainError, "mode grid needs at least two points per axis");
    return (x[1] - x[0]) * (y[1] - y[0]);
  }

  void check_shape() const {
    if (field.size() != x.size() * y.size() || weight.size() != field.size()) {
      fail(ErrorKind::GridMismatch, "mode samples do not match the transverse grid");
    }
  }

  double norm() const {
    check_shape();
    double s = 0.0;
    for (std::size_t k = 0; k < field.size(); ++k) s += weight[k] * std::norm(field[k]);
    return s * cell_area();
  }

  void normalize() {
    const double n = norm();
    if (!(n > 0.0)) fail(ErrorKind::DomainError, "mode has zero norm");
    const double scale = 1.0 / std::sqrt(n);
    for (auto& f : field) f *= scale;
  }

  void validate() const {
    if (std::abs(norm() - 1.0) > 1e-6) fail(ErrorKind::DomainError, "mode profile is not normalized under its weight");
  }
};

// Triple overlap of weight-normalized modes, returned in 1/m. The factor
// eps0^{3/2} converts from F/m weighting to fields normalized against the
// relative weight rho/eps0.
inline Complex mode_overlap(const ModeProfile& signal, const ModeProfile& idler, const ModeProfile& pump) {
  signal.validate();
  idler.validate();
  pump.validate();
  if (signal.x != idler.x || signal.x != pump.x || signal.y != idler.y || signal.y != pump.y) {
    fail(ErrorKind::GridMismatch, "mode profiles must share one transverse grid");
  }
  Complex s{0.0, 0.0};
  for (std::size_t k = 0; k < signal.field.size(); ++k) {
    s += std::conj(signal.field[k]) * std::conj(idler.field[k]) * pump.field[k];
  }
  return s * signal.cell_area() * std::pow(constants::epsilon0, 1.5);
}

// ---------------------------------------------------------------------------
// Cavity JSA

// j = kappa^2 eta J / ((1 - x e^{i phi}) (1 - x e^{-i phi'})). Frequency
// dependent couplers enter as kappa_s kappa_i and sqrt(eta_s eta_i).
inline Complex cavity_j(Complex J, const CavityCoupling& cs, double phase_s, const CavityCoupling& ci, double phase_i) {
  const Complex ds = 1.0 - cs.loop_gain() * std::polar(1.0, phase_s);
  const Complex di = 1.0 - ci.loop_gain() * std::polar(1.0, -phase_i);
  return cs.kappa * ci.kappa * std::sqrt(cs.eta() * ci.eta()) * J / (ds * di);
}

inline Complex cavity_j(Complex J, const CavityCoupling& c, double phase_s, double phase_i) {
  return cavity_j(J, c, phase_s, c, phase_i);
}

enum class Provenance { waveguide_J, cavity_j, cavity_internal_j };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::waveguide_J: return "waveguide_J";
    case Provenance::cavity_j: return "cavity_j";
    case Provenance::cavity_internal_j: return "cavity_internal_j";
  }
  return "unknown";
}

struct Axis {
  double start = 0.0;  // rad/s
  double step = 0.0;   // rad/s
  std::size_t count = 0;

  static Axis spanning(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) fail(ErrorKind::DomainError, "axis needs two or more points over a positive span");
    return {lo, (hi - lo) / static_cast<double>(n - 1), n};
  }
  double at(std::size_t k) const { return start + step * static_cast<double>(k); }
  double end() const { return at(count - 1); }
  std::vector<double> values() const {
    std::vector<double> v(count);
    for (std::size_t k = 0; k < count; ++k) v[k] = at(k);
    return v;
  }
};

// Complex JSA on uniform axes, row-major with the signal index on rows.
struct JSAGrid {
  Axis signal;
  Axis idler;
  std::vector<Complex> values;
  Provenance provenance = Provenance::cavity_j;
  std::vector<std::int32_t> island_index;  // per cell, -1 outside islands; optional

  std::size_t rows() const { return signal.count; }
  std::size_t cols() const { return idler.count; }
  Complex& at(std::size_t i, std::size_t j) { return values[i * idler.count + j]; }
  const Complex& at(std::size_t i, std::size_t j) const { return values[i * idler.count + j]; }

  void validate() const {
    if (signal.count < 2 || idler.count < 2) fail(ErrorKind::DomainError, "JSA axes need at least two points");
    if (!(signal.step > 0.0) || !(idler.step > 0.0)) fail(ErrorKind::DomainError, "JSA axes must increase");
    if (values.size() != signal.count * idler.count) fail(ErrorKind::GridMismatch, "JSA values do not match the axes");
    if (!island_index.empty() && island_index.size() != values.size()) {
      fail(ErrorKind::GridMismatch, "island labels do not match the JSA values");
    }
  }
};

// Cavity response sampled on one JSA axis.
struct AxisCavity {
  std::vector<CavityCoupling> coupling;
  std::vector<double> phase;  // round-trip phase, rad
};

inline AxisCavity sample_axis(const LoopResponse& loop) {
  AxisCavity out;
  out.phase = loop.phase;
  out.coupling.reserve(loop.omega.size());
  for (std::size_t k = 0; k < loop.omega.size(); ++k) out.coupling.push_back(loop.coupling(k));
  return out;
}

// Flat coupling with phase beta(w) L_rt; the closed-form reduction used when
// no netlist is involved.
inline AxisCavity uniform_axis(const CavityCoupling& c, const DispersionModel& model, double round_trip_length,
                               const Axis& axis) {
  AxisCavity out;
  out.coupling.assign(axis.count, c);
  out.phase.resize(axis.count);
  for (std::size_t k = 0; k < axis.count; ++k) out.phase[k] = beta(model, axis.at(k)) * round_trip_length;
  return out;
}

struct JsaRequest {
  Axis signal;
  Axis idler;
  Provenance provenance = Provenance::cavity_j;
  const AxisCavity* signal_cavity = nullptr;  // required unless waveguide_J
  const AxisCavity* idler_cavity = nullptr;
  unsigned threads = 0;  // 0 picks the hardware concurrency
};

namespace detail {

template <class Fn>
void parallel_rows(std::size_t rows, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, rows));
  if (threads <= 1) {
    for (std::size_t r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t r = t; r < rows; r += threads) fn(r);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Dense evaluation of J, j or j' = j/kappa. Each cell depends only on its own
// coordinates, so the result does not depend on the thread count.
inline JSAGrid jsa_grid(const NonlinearSection& section, const PumpPulse& pulse, const JsaRequest& req) {
  section.validate();
  pulse.validate();
  if (req.signal.count < 64 || req.idler.count < 64) fail(ErrorKind::DomainError, "JSA grids need at least 64 points per axis");
  const bool cavity = req.provenance != Provenance::waveguide_J;
  if (cavity) {
    if (req.signal_cavity == nullptr || req.idler_cavity == nullptr) fail(ErrorKind::DomainError, "cavity JSA needs the cavity response on both axes");
    if (req.signal_cavity->phase.size() != req.signal.count || req.idler_cavity->phase.size() != req.idler.count ||
        req.signal_cavity->coupling.size() != req.signal.count || req.idler_cavity->coupling.size() != req.idler.count) {
      fail(ErrorKind::GridMismatch, "cavity response does not match the JSA axes");
    }
  }

  const std::size_t ns = req.signal.count;
  const std::size_t ni = req.idler.count;
  std::vector<detail::PhotonFactors> fs(ns), fi(ni);
  for (std::size_t k = 0; k < ns; ++k) fs[k] = detail::photon_factors(*section.signal, req.signal.at(k));
  for (std::size_t k = 0; k < ni; ++k) fi[k] = detail::photon_factors(*section.signal, req.idler.at(k));

  // Pump-side factors depend only on w + w'. With equal steps the sums fall on
  // a lattice and are computed once per lattice point.
  const bool lattice = std::abs(req.signal.step - req.idler.step) <= 1e-12 * req.signal.step;
  std::vector<detail::PhotonFactors> fp;
  std::vector<double> alpha;
  const double j_factor = (section.heisenberg_factor_two ? 2.0 : 1.0) / constants::hbar;
  auto pump_at = [&](double wp, detail::PhotonFactors& f, double& a) {
    f = detail::photon_factors(*section.pump, wp);
    a = pump_amplitude(pulse, wp);
  };
  if (lattice) {
    fp.resize(ns + ni - 1);
    alpha.resize(ns + ni - 1);
    for (std::size_t k = 0; k < fp.size(); ++k) {
      pump_at(req.signal.start + req.idler.start + req.signal.step * static_cast<double>(k), fp[k], alpha[k]);
    }
  }

  // Cavity denominators per axis.
  std::vector<Complex> ds(ns, 1.0), di(ni, 1.0);
  std::vector<double> ks(ns, 1.0), ki(ni, 1.0), es(ns, 1.0), ei(ni, 1.0);
  if (cavity) {
    for (std::size_t k = 0; k < ns; ++k) {
      const auto& c = req.signal_cavity->coupling[k];
      ds[k] = 1.0 - c.loop_gain() * std::polar(1.0, req.signal_cavity->phase[k]);
      ks[k] = c.kappa;
      es[k] = c.eta();
    }
    for (std::size_t k = 0; k < ni; ++k) {
      const auto& c = req.idler_cavity->coupling[k];
      di[k] = 1.0 - c.loop_gain() * std::polar(1.0, -req.idler_cavity->phase[k]);
      ki[k] = c.kappa;
      ei[k] = c.eta();
    }
  }

  JSAGrid grid;
  grid.signal = req.signal;
  grid.idler = req.idler;
  grid.provenance = req.provenance;
  grid.values.assign(ns * ni, Complex{0.0, 0.0});
  detail::parallel_rows(ns, req.threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < ni; ++j) {
      detail::PhotonFactors p;
      double a = 0.0;
      if (lattice) {
        p = fp[i + j];
        a = alpha[i + j];
      } else {
        pump_at(req.signal.at(i) + req.idler.at(j), p, a);
      }
      const Complex G = detail::coupling_from_factors(section, fs[i], fi[j], p);
      Complex value = Complex{0.0, j_factor} * G * a;
      if (cavity) {
        double numerator = ks[i] * ki[j] * std::sqrt(es[i] * ei[j]);
        if (req.provenance == Provenance::cavity_internal_j) numerator /= std::sqrt(ks[i] * ki[j]);
        value = numerator * value / (ds[i] * di[j]);
      }
      grid.values[i * ni + j] = value;
    }
  });
  return grid;
}

// ---------------------------------------------------------------------------
// Closed-form enhancement algebra

inline double ibef(const CavityCoupling& c) {
  const double x = c.loop_gain();
  if (!(x < 1.0)) fail(ErrorKind::DomainError, "IBEF requires sigma * eta < 1");
  const double k2 = c.kappa * c.kappa;
  const double d = 1.0 - x;
  return c.eta_cav * c.eta_cav * k2 * k2 / (d * d * d * d);
}

inline double ibef_max(double eta_nl, double eta_cav) {
  const double e2 = eta_cav * eta_cav * eta_nl * eta_nl;
  if (!(e2 < 1.0)) fail(ErrorKind::DomainError, "IBEF_max requires a lossy round trip");
  return eta_cav * eta_cav / ((1.0 - e2) * (1.0 - e2));
}

// Peak per-island pair probability inside the cavity.
inline double closed_form_pcav(const CavityCoupling& c, double round_trip_time, double j_max) {
  if (!(round_trip_time > 0.0)) fail(ErrorKind::DomainError, "round-trip time must be positive");
  const double x = c.loop_gain();
  const double a = c.kappa * c.kappa * c.eta() / (round_trip_time * (1.0 - x * x));
  return a * a * j_max * j_max / 2.0;
}

// The same source with the cavity replaced by a matched filter on a plain guide.
inline double closed_form_pfwg(const CavityCoupling& c, double round_trip_time, double j_max) {
  if (!(round_trip_time > 0.0)) fail(ErrorKind::DomainError, "round-trip time must be positive");
  const double x = c.loop_gain();
  const double r = (1.0 - x) / (round_trip_time * (1.0 + x));
  return c.eta_nl * c.eta_nl * r * r * j_max * j_max / 2.0;
}

struct PumpSweepPoint {
  double detuning_fraction = 0.0;  // detuning over pump FSR
  double relative_pgr = 0.0;
};

struct PumpSweep {
  std::vector<PumpSweepPoint> points;
  double half_fsr_value = 0.0;  // the largest possible detuning
};

// Intracavity pump power, kappa_p^2 times the pump buildup factor, versus
// detuning from the pump resonance. A stand-in for a full resonant-pump model:
// it tracks only how much pump reaches the poled section.
inline PumpSweep pump_buildup_sweep(double kappa_p2, double eta_p, std::span<const double> detuning_fraction) {
  const auto c = CavityCoupling::from_kappa_power(kappa_p2, 1.0, eta_p);
  if (!(c.loop_gain() < 1.0)) fail(ErrorKind::DomainError, "pump cavity needs sigma * eta < 1");
  PumpSweep sweep;
  for (double d : detuning_fraction) {
    sweep.points.push_back({d, kappa_p2 * buildup_factor(c, 2.0 * constants::pi * d)});
  }
  sweep.half_fsr_value = kappa_p2 * buildup_factor(c, constants::pi);
  return sweep;
}

}  // namespace cavspdc
