#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cavspdc/circuit.hpp"
#include "cavspdc/error.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

struct Resonance {
  double omega0 = 0.0;  // rad/s
  double gamma = 0.0;   // rad/s, full width at half depth
  double q = 0.0;
  double depth = 0.0;   // on-resonance extinction 1 - |h|^2
  double fit_residual = 0.0;  // RMS residual over the fit window
};

struct ResonanceSet {
  std::vector<Resonance> resonances;
  std::vector<double> fsr_list;  // rad/s
  double fsr_mean = 0.0;         // rad/s; zero with fewer than two resonances
  std::vector<std::string> warnings;
  std::size_t dropped = 0;  // resonances whose fit diverged

  double mean_gamma() const {
    if (resonances.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : resonances) s += r.gamma;
    return s / static_cast<double>(resonances.size());
  }
};

inline Resonance make_resonance(double omega0, double gamma, double depth, double residual = 0.0) {
  if (!(gamma > 0.0)) fail(ErrorKind::DomainError, "resonance width must be positive");
  return {omega0, gamma, omega0 / gamma, depth, residual};
}

// Sorts by center and recomputes the FSR statistics.
inline void finalize(ResonanceSet& set) {
  std::sort(set.resonances.begin(), set.resonances.end(),
            [](const Resonance& a, const Resonance& b) { return a.omega0 < b.omega0; });
  set.fsr_list.clear();
  for (std::size_t k = 0; k + 1 < set.resonances.size(); ++k) {
    set.fsr_list.push_back(set.resonances[k + 1].omega0 - set.resonances[k].omega0);
  }
  set.fsr_mean = set.fsr_list.empty()
                     ? 0.0
                     : std::accumulate(set.fsr_list.begin(), set.fsr_list.end(), 0.0) /
                           static_cast<double>(set.fsr_list.size());
}

struct ResonanceCandidate {
  std::size_t index = 0;  // sample index of the minimum
  double omega0 = 0.0;
  double depth = 0.0;     // 1 - power at the minimum
  double prominence = 0.0;
  double width = 0.0;     // half-prominence full width, rad/s
};

struct DetectOptions {
  double prominence_threshold = 1e-3;
};

// Local minima whose topographic prominence exceeds the threshold and whose
// value lies below 1 - threshold. An empty result is a valid outcome.
inline std::vector<ResonanceCandidate> detect_resonances(std::span<const double> omega, std::span<const double> power,
                                                         DetectOptions options = {}) {
  const std::size_t n = omega.size();
  if (power.size() != n) fail(ErrorKind::GridMismatch, "spectrum frequency and power arrays differ in length");
  if (n < 16) fail(ErrorKind::DomainError, "resonance detection needs at least 16 samples");
  for (double p : power) {
    if (!(p >= 0.0 && p <= 1.0 + 1e-6)) fail(ErrorKind::DomainError, "power transmission must lie in [0, 1]");
  }
  check_grid(omega);

  std::vector<ResonanceCandidate> out;
  std::size_t k = 1;
  while (k + 1 < n) {
    if (!(power[k] < power[k - 1])) {
      ++k;
      continue;
    }
    // Step over a flat bottom; its middle sample is the minimum.
    std::size_t right = k;
    while (right + 1 < n && power[right + 1] == power[k]) ++right;
    if (right + 1 >= n || !(power[right + 1] > power[k])) {
      k = right + 1;
      continue;
    }
    const std::size_t m = (k + right) / 2;
    const double value = power[m];
    double left_max = value;
    for (std::size_t j = k; j-- > 0;) {
      if (power[j] < value) break;
      left_max = std::max(left_max, power[j]);
    }
    double right_max = value;
    for (std::size_t j = right + 1; j < n; ++j) {
      if (power[j] < value) break;
      right_max = std::max(right_max, power[j]);
    }
    const double prominence = std::min(left_max, right_max) - value;
    if (prominence >= options.prominence_threshold && value < 1.0 - options.prominence_threshold) {
      const double level = value + 0.5 * prominence;
      auto crossing = [&](std::size_t a, std::size_t b) {
        const double t = (level - power[a]) / (power[b] - power[a]);
        return omega[a] + t * (omega[b] - omega[a]);
      };
      std::size_t lo = m;
      while (lo > 0 && power[lo - 1] < level) --lo;
      std::size_t hi = m;
      while (hi + 1 < n && power[hi + 1] < level) ++hi;
      const double w_lo = lo > 0 ? crossing(lo, lo - 1) : omega.front();
      const double w_hi = hi + 1 < n ? crossing(hi, hi + 1) : omega.back();
      const double min_width = 0.5 * (omega[std::min(m + 1, n - 1)] - omega[m > 0 ? m - 1 : 0]);
      out.push_back({m, omega[m], 1.0 - value, prominence, std::max(w_hi - w_lo, min_width)});
    }
    k = right + 1;
  }
  return out;
}

struct FitOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double window_fraction = 0.4;      // half window as a fraction of the FSR
  double residual_warning = 1e-2;
  // Half window in linewidths when there is no neighbour to set an FSR.
  double isolated_window_widths = 25.0;
};

namespace detail {

struct GroupFit {
  std::vector<double> omega0, gamma, depth, residual;
  bool converged = false;
  bool valid = false;
};

// Damped least squares for 1 - sum_k d_k (g_k/2)^2 / ((w - w_k)^2 + (g_k/2)^2)
// over one window. Frequencies are shifted and scaled to order unity.
inline GroupFit fit_group(std::span<const double> omega, std::span<const double> power,
                          const std::vector<ResonanceCandidate>& seeds, const FitOptions& opt) {
  const std::size_t m = omega.size();
  const std::size_t r = seeds.size();
  const double center = 0.5 * (omega.front() + omega.back());
  double scale = 0.0;
  for (const auto& s : seeds) scale += s.width;
  scale /= static_cast<double>(r);

  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = (omega[i] - center) / scale;

  Eigen::VectorXd p(3 * r);
  for (std::size_t k = 0; k < r; ++k) {
    p[3 * k] = (seeds[k].omega0 - center) / scale;
    p[3 * k + 1] = seeds[k].width / scale;
    p[3 * k + 2] = std::clamp(seeds[k].depth, 1e-6, 1.0);
  }

  auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& res, Eigen::MatrixXd* jac) {
    res.resize(static_cast<Eigen::Index>(m));
    if (jac != nullptr) jac->setZero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(3 * r));
    for (std::size_t i = 0; i < m; ++i) {
      double model = 1.0;
      for (std::size_t k = 0; k < r; ++k) {
        const double dx = x[i] - q[3 * k];
        const double h = 0.5 * q[3 * k + 1];
        const double den = dx * dx + h * h;
        const double lor = h * h / den;
        model -= q[3 * k + 2] * lor;
        if (jac != nullptr) {
          const double d = q[3 * k + 2];
          (*jac)(i, 3 * k) = -d * 2.0 * h * h * dx / (den * den);
          (*jac)(i, 3 * k + 1) = -d * (h * dx * dx) / (den * den);
          (*jac)(i, 3 * k + 2) = -lor;
        }
      }
      res[i] = model - power[i];
    }
  };

  Eigen::VectorXd res;
  Eigen::MatrixXd jac;
  residuals(p, res, &jac);
  double cost = res.squaredNorm();
  double lambda = 1e-3;
  GroupFit fit;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * res;
    bool accepted = false;
    Eigen::VectorXd step;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index j = 0; j < a.rows(); ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      step = a.ldlt().solve(-grad);
      Eigen::VectorXd trial = p + step;
      bool sane = step.allFinite();
      for (std::size_t k = 0; k < r && sane; ++k) sane = trial[3 * k + 1] > 0.0 && trial[3 * k + 2] > 0.0;
      if (sane) {
        Eigen::VectorXd trial_res;
        residuals(trial, trial_res, nullptr);
        const double trial_cost = trial_res.squaredNorm();
        if (trial_cost <= cost) {
          p = trial;
          cost = trial_cost;
          lambda = std::max(lambda * 0.3, 1e-12);
          accepted = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No downhill step at any damping: a minimum to working precision.
      fit.converged = true;
      break;
    }
    residuals(p, res, &jac);
    if (step.norm() <= opt.step_tolerance * (p.norm() + opt.step_tolerance)) {
      fit.converged = true;
      break;
    }
  }

  fit.valid = p.allFinite();
  for (std::size_t k = 0; k < r; ++k) {
    const double w0 = center + p[3 * k] * scale;
    const double g = p[3 * k + 1] * scale;
    const double d = p[3 * k + 2];
    fit.valid = fit.valid && g > 0.0 && d > 0.0 && d < 1.5 && w0 >= omega.front() && w0 <= omega.back();
    fit.omega0.push_back(w0);
    fit.gamma.push_back(g);
    fit.depth.push_back(d);
  }
  // RMS residual of each resonance over its own seed half-window.
  for (std::size_t k = 0; k < r; ++k) {
    double s = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(omega[i] - fit.omega0[k]) <= 5.0 * fit.gamma[k]) {
        s += res[static_cast<Eigen::Index>(i)] * res[static_cast<Eigen::Index>(i)];
        ++cnt;
      }
    }
    fit.residual.push_back(cnt > 0 ? std::sqrt(s / static_cast<double>(cnt)) : std::sqrt(cost / static_cast<double>(m)));
  }
  return fit;
}

}  // namespace detail

// Fits every candidate inside a window of +-0.4 FSR. Candidates whose windows
// overlap are co-fit as one linear combination. Diverged fits are dropped with
// a warning rather than aborting the set.
inline ResonanceSet fit_lorentzians(std::span<const double> omega, std::span<const double> power,
                                    std::vector<ResonanceCandidate> candidates, FitOptions options = {}) {
  if (candidates.empty()) fail(ErrorKind::DomainError, "no resonance candidates to fit");
  if (omega.size() != power.size()) fail(ErrorKind::GridMismatch, "spectrum frequency and power arrays differ in length");
  std::sort(candidates.begin(), candidates.end(),
            [](const ResonanceCandidate& a, const ResonanceCandidate& b) { return a.omega0 < b.omega0; });

  // FSR estimate: median spacing of the candidates.
  double fsr = 0.0;
  if (candidates.size() > 1) {
    std::vector<double> gaps;
    for (std::size_t k = 0; k + 1 < candidates.size(); ++k) gaps.push_back(candidates[k + 1].omega0 - candidates[k].omega0);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    fsr = gaps[gaps.size() / 2];
  }
  std::vector<std::pair<double, double>> windows;
  for (const auto& c : candidates) {
    const double half = fsr > 0.0 ? options.window_fraction * fsr : options.isolated_window_widths * c.width;
    windows.emplace_back(c.omega0 - half, c.omega0 + half);
  }

  ResonanceSet set;
  std::size_t start = 0;
  while (start < candidates.size()) {
    std::size_t end = start + 1;
    double hi = windows[start].second;
    while (end < candidates.size() && windows[end].first < hi) {
      hi = std::max(hi, windows[end].second);
      ++end;
    }
    const double lo = windows[start].first;
    auto first = std::lower_bound(omega.begin(), omega.end(), lo);
    auto last = std::upper_bound(omega.begin(), omega.end(), hi);
    const auto i0 = static_cast<std::size_t>(first - omega.begin());
    const auto i1 = static_cast<std::size_t>(last - omega.begin());
    std::vector<ResonanceCandidate> group(candidates.begin() + static_cast<std::ptrdiff_t>(start),
                                          candidates.begin() + static_cast<std::ptrdiff_t>(end));
    if (i1 - i0 < 3 * group.size() + 1) {
      set.warnings.push_back("fit window too sparse near " + std::to_string(units::rad_to_thz(group.front().omega0)) + " THz; dropped");
      set.dropped += group.size();
      start = end;
      continue;
    }
    const auto fit = detail::fit_group(omega.subspan(i0, i1 - i0), power.subspan(i0, i1 - i0), group, options);
    for (std::size_t k = 0; k < group.size(); ++k) {
      const std::string where = std::to_string(units::rad_to_thz(group[k].omega0)) + " THz";
      if (!fit.valid) {
        set.warnings.push_back("FitDiverged: resonance near " + where + " dropped");
        ++set.dropped;
        continue;
      }
      if (!fit.converged) set.warnings.push_back("fit near " + where + " hit the iteration limit");
      if (fit.residual[k] > options.residual_warning) {
        set.warnings.push_back("large residual near " + where + "; lineshape may not be Lorentzian");
      }
      set.resonances.push_back(make_resonance(fit.omega0[k], fit.gamma[k], std::min(fit.depth[k], 1.0), fit.residual[k]));
    }
    start = end;
  }
  finalize(set);
  return set;
}

inline ResonanceSet fit_spectrum(std::span<const double> omega, std::span<const double> power, DetectOptions detect = {},
                                 FitOptions fit = {}) {
  auto candidates = detect_resonances(omega, power, detect);
  if (candidates.empty()) {
    ResonanceSet empty;
    empty.warnings.push_back("NoResonances: spectrum has no dips above the prominence threshold");
    return empty;
  }
  return fit_lorentzians(omega, power, std::move(candidates), fit);
}

// ---------------------------------------------------------------------------
// Closed-form linewidth relations.

inline void require_loop_gain(double x) {
  if (!(x > 0.0 && x < 1.0)) fail(ErrorKind::DomainError, "round-trip gain sigma*eta must lie in (0, 1)");
}

inline double finesse(double loop_gain) {
  require_loop_gain(loop_gain);
  return constants::pi * std::sqrt(loop_gain) / (1.0 - loop_gain);
}

inline double finesse(const CavityCoupling& c) { return finesse(c.loop_gain()); }

// Exact full width at half depth of the |h|^2 dip, rad/s.
inline double analytic_fwhm(double loop_gain, double round_trip_time) {
  require_loop_gain(loop_gain);
  if (!(round_trip_time > 0.0)) fail(ErrorKind::DomainError, "round-trip time must be positive");
  const double arg = (1.0 - loop_gain) / (2.0 * std::sqrt(loop_gain));
  if (arg > 1.0) fail(ErrorKind::DomainError, "overdamped cavity: resonance has no half-depth width");
  return 4.0 / round_trip_time * std::asin(arg);
}

inline double analytic_fwhm(const CavityCoupling& c, double round_trip_time) {
  return analytic_fwhm(c.loop_gain(), round_trip_time);
}

// Inverse of analytic_fwhm: the sigma*eta product giving width gamma.
inline double loop_gain_from_fwhm(double gamma, double round_trip_time) {
  if (!(gamma > 0.0) || !(round_trip_time > 0.0)) fail(ErrorKind::DomainError, "width and round-trip time must be positive");
  const double s = std::sin(0.25 * gamma * round_trip_time);
  if (gamma * round_trip_time >= 2.0 * constants::pi) fail(ErrorKind::DomainError, "linewidth exceeds the resonance spacing");
  const double root = -s + std::sqrt(s * s + 1.0);
  return root * root;
}

struct CouplingEstimate {
  CavityCoupling coupling;
  double loop_gain = 0.0;
  // Depth and width alone fix {sigma, eta} only as an unordered pair; these
  // are the two orderings (undercoupled: sigma > eta).
  double depth_root_high = 0.0;
  double depth_root_low = 0.0;
  bool role_ambiguous = true;
};

struct KnownCoupling {
  std::optional<double> eta;    // round-trip amplitude survival
  std::optional<double> sigma;  // coupler amplitude reflectivity
};

// Recovers the unknown of (sigma, eta) for each resonance from its fitted
// width, using the local FSR for the round-trip time. The supplied eta is
// stored as eta_cav with eta_nl = 1.
inline std::vector<CouplingEstimate> extract_coupling(const ResonanceSet& set, KnownCoupling known) {
  if (known.eta.has_value() == known.sigma.has_value()) {
    fail(ErrorKind::Ambiguous, "exactly one of eta or sigma must be supplied to split the loop gain");
  }
  if (set.resonances.size() < 2) fail(ErrorKind::DomainError, "coupling extraction needs at least two resonances for the FSR");
  const double supplied = known.eta ? *known.eta : *known.sigma;
  if (!(supplied > 0.0 && supplied <= 1.0)) fail(ErrorKind::DomainError, "supplied coupling quantity must lie in (0, 1]");

  std::vector<CouplingEstimate> out;
  const std::size_t n = set.resonances.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& res = set.resonances[k];
    double fsr = 0.0;
    if (k == 0) fsr = set.fsr_list.front();
    else if (k + 1 == n) fsr = set.fsr_list.back();
    else fsr = 0.5 * (set.fsr_list[k - 1] + set.fsr_list[k]);
    const double t_rt = 2.0 * constants::pi / fsr;
    const double x = loop_gain_from_fwhm(res.gamma, t_rt);
    if (x > supplied * (1.0 + 1e-12)) {
      fail(ErrorKind::DomainError, "supplied value is below the fitted sigma*eta product; the other factor would exceed 1");
    }
    CouplingEstimate est;
    est.loop_gain = x;
    const double other = std::min(1.0, x / supplied);
    est.coupling = known.eta ? CavityCoupling::from_sigma(other, 1.0, supplied) : CavityCoupling::from_sigma(supplied, 1.0, other);
    // eta^2 and sigma^2 solve t^2 - S t + x^2 = 0.
    const double sum = 1.0 + x * x - res.depth * (1.0 - x) * (1.0 - x);
    const double disc = std::max(0.0, sum * sum - 4.0 * x * x);
    est.depth_root_high = std::sqrt(0.5 * (sum + std::sqrt(disc)));
    est.depth_root_low = std::sqrt(std::max(0.0, 0.5 * (sum - std::sqrt(disc))));
    est.role_ambiguous = est.depth_root_high - est.depth_root_low > 1e-9;
    out.push_back(est);
  }
  return out;
}

}  // namespace cavspdc
