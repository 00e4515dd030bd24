#pragma once

#include <numbers>

namespace cavspdc {

// All internal frequencies are angular (rad/s). Conversions live here and
// only the I/O layers call them.
namespace constants {
inline constexpr double pi = std::numbers::pi;
inline constexpr double speed_of_light = 299792458.0;        // m/s
inline constexpr double hbar = 1.054571817e-34;              // J s
inline constexpr double epsilon0 = 8.8541878128e-12;         // F/m
}  // namespace constants

namespace units {

constexpr double hz_to_rad(double hz) { return 2.0 * constants::pi * hz; }
constexpr double rad_to_hz(double omega) { return omega / (2.0 * constants::pi); }

constexpr double thz_to_rad(double thz) { return hz_to_rad(thz * 1e12); }
constexpr double rad_to_thz(double omega) { return rad_to_hz(omega) * 1e-12; }
constexpr double ghz_to_rad(double ghz) { return hz_to_rad(ghz * 1e9); }
constexpr double rad_to_ghz(double omega) { return rad_to_hz(omega) * 1e-9; }

constexpr double nm_to_rad(double nm) {
  return 2.0 * constants::pi * constants::speed_of_light / (nm * 1e-9);
}
constexpr double rad_to_nm(double omega) {
  return 2.0 * constants::pi * constants::speed_of_light / omega * 1e9;
}

}  // namespace units

// Compile-time SI dimension bookkeeping. Exponents are stored doubled so the
// half-integer powers that appear in the nonlinear coupling prefactor
// (hbar^{3/2}, eps0^{-1/2}) stay exact.
struct Dimension {
  int kg2 = 0;
  int m2 = 0;
  int s2 = 0;
  int a2 = 0;

  constexpr bool operator==(const Dimension&) const = default;
};

constexpr Dimension operator*(Dimension a, Dimension b) {
  return {a.kg2 + b.kg2, a.m2 + b.m2, a.s2 + b.s2, a.a2 + b.a2};
}
constexpr Dimension operator/(Dimension a, Dimension b) {
  return {a.kg2 - b.kg2, a.m2 - b.m2, a.s2 - b.s2, a.a2 - b.a2};
}
// Raise to num/2, e.g. pow_half(d, 3) is d^{3/2}.
constexpr Dimension pow_half(Dimension d, int num) {
  return {d.kg2 * num / 2, d.m2 * num / 2, d.s2 * num / 2, d.a2 * num / 2};
}

namespace dim {
inline constexpr Dimension dimensionless{};
inline constexpr Dimension kilogram{2, 0, 0, 0};
inline constexpr Dimension meter{0, 2, 0, 0};
inline constexpr Dimension second{0, 0, 2, 0};
inline constexpr Dimension ampere{0, 0, 0, 2};
inline constexpr Dimension joule = kilogram * meter * meter / (second * second);
inline constexpr Dimension coulomb = ampere * second;
inline constexpr Dimension volt = joule / coulomb;
inline constexpr Dimension farad = coulomb / volt;
inline constexpr Dimension angular_frequency = dimensionless / second;
inline constexpr Dimension velocity = meter / second;
}  // namespace dim

}  // namespace cavspdc
