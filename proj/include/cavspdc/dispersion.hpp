#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cavspdc/error.hpp"
#include "cavspdc/units.hpp"

namespace cavspdc {

enum class Band { telecom, pump };

inline std::string to_string(Band band) { return band == Band::telecom ? "telecom" : "pump"; }

// Sign convention for the poling term in the phase mismatch. The default
// subtracts pi/Lambda; the alternative is the usual first-order 2*pi/Lambda.
enum class QpmConvention { pi_over_lambda, two_pi_over_lambda };

inline double qpm_wavenumber(double period, QpmConvention convention) {
  const double k = constants::pi / period;
  return convention == QpmConvention::pi_over_lambda ? k : 2.0 * k;
}

// n(w) = n0 + n1 u + n2 u^2 with u = (w - center)/center.
struct TaylorIndex {
  double center = 0.0;  // rad/s
  double n0 = 1.0;
  double n1 = 0.0;
  double n2 = 0.0;
};

namespace detail {

// Fritsch-Carlson slopes for a monotone piecewise cubic Hermite interpolant.
inline std::vector<double> monotone_slopes(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  std::vector<double> secant(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) secant[k] = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);

  std::vector<double> slope(n);
  if (n == 2) {
    slope[0] = slope[1] = secant[0];
    return slope;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double a = secant[k - 1];
    const double b = secant[k];
    if (a * b <= 0.0) {
      slope[k] = 0.0;
    } else {
      const double h0 = x[k] - x[k - 1];
      const double h1 = x[k + 1] - x[k];
      const double w0 = 2.0 * h1 + h0;
      const double w1 = h1 + 2.0 * h0;
      slope[k] = (w0 + w1) / (w0 / a + w1 / b);
    }
  }
  // One-sided three-point end slopes, clipped to preserve monotonicity.
  auto end_slope = [](double h0, double h1, double d0, double d1) {
    double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (s * d0 <= 0.0) {
      s = 0.0;
    } else if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) {
      s = 3.0 * d0;
    }
    return s;
  };
  slope[0] = end_slope(x[1] - x[0], x[2] - x[1], secant[0], secant[1]);
  slope[n - 1] = end_slope(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3], secant[n - 2], secant[n - 3]);
  return slope;
}

}  // namespace detail

// Frequency-dependent effective index of one waveguide band. Immutable after
// construction; evaluation outside [omega_min, omega_max] throws OutOfRange.
class DispersionModel {
 public:
  static DispersionModel taylor(Band band, TaylorIndex coeffs, double omega_min, double omega_max) {
    if (!(coeffs.center > 0.0)) fail(ErrorKind::ValidationError, "Taylor center frequency must be positive");
    check_range(omega_min, omega_max);
    DispersionModel model(band, omega_min, omega_max);
    model.repr_ = coeffs;
    // n(u) is quadratic: its minimum over the range is at an endpoint or the vertex.
    std::vector<double> probes{omega_min, omega_max};
    if (coeffs.n2 != 0.0) {
      const double u_vertex = -coeffs.n1 / (2.0 * coeffs.n2);
      const double w_vertex = coeffs.center * (1.0 + u_vertex);
      if (w_vertex > omega_min && w_vertex < omega_max) probes.push_back(w_vertex);
    }
    for (double w : probes) {
      if (!(model.n_eff(w) > 0.0)) fail(ErrorKind::ValidationError, "effective index must stay positive over the valid range");
    }
    return model;
  }

  static DispersionModel tabulated(Band band, std::vector<double> omega, std::vector<double> index) {
    if (omega.size() != index.size()) fail(ErrorKind::ValidationError, "frequency and index tables differ in length");
    if (omega.size() < 2) fail(ErrorKind::ValidationError, "a dispersion table needs at least two samples");
    for (std::size_t k = 0; k + 1 < omega.size(); ++k) {
      if (!(omega[k + 1] > omega[k])) fail(ErrorKind::ValidationError, "tabulated frequencies must be strictly increasing");
    }
    for (double n : index) {
      if (!(n > 0.0)) fail(ErrorKind::ValidationError, "tabulated effective index must be positive");
    }
    DispersionModel model(band, omega.front(), omega.back());
    Table table;
    table.slope = detail::monotone_slopes(omega, index);
    table.omega = std::move(omega);
    table.index = std::move(index);
    model.repr_ = std::move(table);
    return model;
  }

  Band band() const { return band_; }
  double omega_min() const { return omega_min_; }
  double omega_max() const { return omega_max_; }
  bool is_tabulated() const { return std::holds_alternative<Table>(repr_); }
  bool contains(double omega) const { return omega >= omega_min_ && omega <= omega_max_; }

  double n_eff(double omega) const {
    require_in_range(omega);
    if (const auto* t = std::get_if<TaylorIndex>(&repr_)) {
      const double u = (omega - t->center) / t->center;
      return t->n0 + u * (t->n1 + u * t->n2);
    }
    const auto& table = std::get<Table>(repr_);
    const std::size_t k = table.segment(omega);
    const double h = table.omega[k + 1] - table.omega[k];
    const double s = (omega - table.omega[k]) / h;
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2.0 * s3 - 3.0 * s2 + 1.0) * table.index[k] + (s3 - 2.0 * s2 + s) * h * table.slope[k] +
           (-2.0 * s3 + 3.0 * s2) * table.index[k + 1] + (s3 - s2) * h * table.slope[k + 1];
  }

  // Analytic for Taylor models; centered difference with step 1e-4 of the
  // local sample spacing for tables, so endpoints are not differentiable.
  double dn_domega(double omega) const {
    require_in_range(omega);
    if (const auto* t = std::get_if<TaylorIndex>(&repr_)) {
      const double u = (omega - t->center) / t->center;
      return (t->n1 + 2.0 * t->n2 * u) / t->center;
    }
    const auto& table = std::get<Table>(repr_);
    const std::size_t k = table.segment(omega);
    const double step = 1e-4 * (table.omega[k + 1] - table.omega[k]);
    if (omega - step < omega_min_ || omega + step > omega_max_) {
      fail(ErrorKind::OutOfRange, "numeric derivative needs a neighbourhood inside the table at " + describe(omega));
    }
    return (n_eff(omega + step) - n_eff(omega - step)) / (2.0 * step);
  }

 private:
  struct Table {
    std::vector<double> omega;
    std::vector<double> index;
    std::vector<double> slope;

    std::size_t segment(double w) const {
      auto it = std::upper_bound(omega.begin(), omega.end(), w);
      std::size_t k = static_cast<std::size_t>(std::distance(omega.begin(), it));
      if (k == 0) return 0;
      return std::min(k - 1, omega.size() - 2);
    }
  };

  DispersionModel(Band band, double omega_min, double omega_max)
      : band_(band), omega_min_(omega_min), omega_max_(omega_max) {}

  static void check_range(double lo, double hi) {
    if (!(lo > 0.0) || !(hi > lo)) fail(ErrorKind::ValidationError, "dispersion valid range must satisfy 0 < min < max");
  }

  static std::string describe(double omega) {
    std::ostringstream os;
    os << units::rad_to_thz(omega) << " THz";
    return os.str();
  }

  void require_in_range(double omega) const {
    if (!contains(omega)) {
      std::ostringstream os;
      os << to_string(band_) << " dispersion evaluated at " << describe(omega) << " outside ["
         << units::rad_to_thz(omega_min_) << ", " << units::rad_to_thz(omega_max_) << "] THz";
      fail(ErrorKind::OutOfRange, os.str());
    }
  }

  Band band_;
  double omega_min_;
  double omega_max_;
  std::variant<TaylorIndex, Table> repr_;
};

inline double n_eff(const DispersionModel& model, double omega) { return model.n_eff(omega); }

// Propagation constant beta = n w / c in rad/m.
inline double beta(const DispersionModel& model, double omega) {
  return model.n_eff(omega) * omega / constants::speed_of_light;
}

inline double group_index(const DispersionModel& model, double omega) {
  return model.n_eff(omega) + omega * model.dn_domega(omega);
}

inline double group_velocity(const DispersionModel& model, double omega) {
  return constants::speed_of_light / group_index(model, omega);
}

// beta_pump(w + w') - beta(w) - beta(w') - K_qpm.
inline double delta_beta(const DispersionModel& pump, const DispersionModel& signal, double omega,
                         double omega_prime, double period,
                         QpmConvention convention = QpmConvention::pi_over_lambda) {
  if (!(period > 0.0)) fail(ErrorKind::DomainError, "poling period must be positive");
  return beta(pump, omega + omega_prime) - beta(signal, omega) - beta(signal, omega_prime) -
         qpm_wavenumber(period, convention);
}

// Poling period that zeroes delta_beta at (omega_s, omega_i).
inline double qpm_period_for(const DispersionModel& pump, const DispersionModel& signal, double omega_s,
                             double omega_i, QpmConvention convention = QpmConvention::pi_over_lambda) {
  const double mismatch = beta(pump, omega_s + omega_i) - beta(signal, omega_s) - beta(signal, omega_i);
  if (!(mismatch > 0.0)) fail(ErrorKind::NoSolution, "pump wavevector does not exceed signal+idler; no poling period phase matches");
  const double factor = convention == QpmConvention::pi_over_lambda ? 1.0 : 2.0;
  return factor * constants::pi / mismatch;
}

// Index seen by a TE mode whose propagation direction makes angle phi with the
// in-plane ordinary axis.
inline double angle_interpolated_index(double n1, double n2, double phi) {
  if (!(n1 > 0.0) || !(n2 > 0.0)) fail(ErrorKind::DomainError, "axis indices must be positive");
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  return n1 * n2 / std::sqrt(n1 * n1 * c * c + n2 * n2 * s * s);
}

// One straight piece of a discretized bend.
struct BendSegment {
  double length = 0.0;                  // m
  double bend_radius = 0.0;             // m; infinity for straight pieces
  double tangent_angle = 0.0;           // rad in [0, 2 pi)
};

inline void validate(const BendSegment& seg) {
  if (!(seg.length > 0.0)) fail(ErrorKind::DomainError, "bend segment length must be positive");
  if (!(seg.tangent_angle >= 0.0 && seg.tangent_angle < 2.0 * constants::pi)) {
    fail(ErrorKind::DomainError, "bend segment tangent angle must lie in [0, 2 pi)");
  }
}

// Splits a circular arc into n equal straight pieces, each carrying the
// tangent angle at its midpoint.
inline std::vector<BendSegment> discretize_arc(double radius, double start_angle, double sweep, std::size_t n) {
  if (n == 0) fail(ErrorKind::DomainError, "arc needs at least one segment");
  if (!(radius > 0.0) || !(sweep > 0.0)) fail(ErrorKind::DomainError, "arc radius and sweep must be positive");
  std::vector<BendSegment> out;
  out.reserve(n);
  const double dtheta = sweep / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    double angle = std::fmod(start_angle + (static_cast<double>(k) + 0.5) * dtheta, 2.0 * constants::pi);
    if (angle < 0.0) angle += 2.0 * constants::pi;
    out.push_back({radius * dtheta, radius, angle});
  }
  return out;
}

}  // namespace cavspdc
