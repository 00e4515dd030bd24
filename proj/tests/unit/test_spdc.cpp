#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cavspdc/spdc.hpp"

using namespace cavspdc;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double two_pi = 2.0 * pi;
constexpr double c0 = 299792458.0;
constexpr double hbar = 1.054571817e-34;
constexpr double eps0 = 8.8541878128e-12;

struct Fixture {
  DispersionModel signal = DispersionModel::taylor(Band::telecom, {two_pi * 193.4e12, 1.88, 0.43, -0.41},
                                                   two_pi * 185e12, two_pi * 202e12);
  DispersionModel pump = DispersionModel::taylor(Band::pump, {two_pi * 386.8e12, 2.05, 0.35, 0.0}, two_pi * 370e12,
                                                 two_pi * 404e12);
  double w0 = two_pi * 193.4e12;
  NonlinearSection section() const {
    NonlinearSection s;
    s.length = 1e-3;
    s.period = qpm_period_for(pump, signal, w0, w0);
    s.chi2 = 54e-12;
    s.overlap = 1.0e6;
    s.signal = &signal;
    s.pump = &pump;
    return s;
  }
  PumpPulse pulse() const { return {2.0 * w0, 5e9, 1.11e-12, 900e6}; }
};

// Independent evaluation of |G| straight from the printed expression.
double g_magnitude_by_hand(const Fixture& f, const NonlinearSection& s, double w, double wp) {
  auto n = [](const DispersionModel& m, double x) { return m.n_eff(x); };
  auto vg = [](const DispersionModel& m, double x) { return c0 / (m.n_eff(x) + x * m.dn_domega(x)); };
  const double wsum = w + wp;
  const double db = n(f.pump, wsum) * wsum / c0 - n(f.signal, w) * w / c0 - n(f.signal, wp) * wp / c0 - pi / s.period;
  const double arg = db * s.length / 2.0;
  const double sinc = arg == 0.0 ? 1.0 : std::sin(arg) / arg;
  const double pref = std::sqrt(2.0) * std::pow(hbar, 1.5) * s.length / (pi * std::sqrt(eps0));
  const double root = std::sqrt(w * wp * wsum / (vg(f.signal, w) * vg(f.signal, wp) * vg(f.pump, wsum)));
  const double ns = n(f.signal, w), ni = n(f.signal, wp), np = n(f.pump, wsum);
  return std::abs(pref * root * s.overlap * s.chi2 / (ns * ns * ni * ni * np * np) * sinc);
}

}  // namespace

TEST(Spdc, PumpSpectrumIsNormalized) {
  const Fixture f;
  const auto p = f.pulse();
  const double s = p.sigma_omega();
  const int n = 20001;
  const double lo = p.omega0 - 14.0 * s, hi = p.omega0 + 14.0 * s;
  const double h = (hi - lo) / (n - 1);
  double total = 0.0;
  for (int k = 0; k < n; ++k) total += (k == 0 || k == n - 1 ? 0.5 : 1.0) * pump_spectrum(p, lo + h * k);
  EXPECT_NEAR(total * h, 1.0, 1e-8);
}

TEST(Spdc, PumpPhotonNumberAt775nm) {
  const double w775 = two_pi * c0 / 775e-9;
  EXPECT_NEAR(hbar * w775, 2.563e-19, 1e-22);
  const PumpPulse p{w775, 5e9, 1.11e-12, 900e6};
  EXPECT_NEAR(p.photon_number(), 1.11e-12 / (hbar * w775), 1e-6);
  EXPECT_NEAR(p.photon_number() / 4.33e6, 1.0, 1e-3);
}

TEST(Spdc, FiveGigahertzPulseLasts88ps) {
  const PumpPulse p{two_pi * 386.6e12, 5e9, 1.11e-12, 900e6};
  EXPECT_NEAR(p.fwhm_time() * 1e12, 88.2, 0.1);
  EXPECT_NEAR(p.fwhm_time() * p.fwhm_hz / 0.441, 1.0, 5e-3);
  EXPECT_NEAR(p.average_power(), 0.999e-3, 1e-9);
  // Gamma must drop to half its peak at +- half the FWHM (loose by a few ulps of the ln 2 round trip).
  const double half = 0.5 * p.fwhm_omega();
  EXPECT_NEAR(pump_spectrum(p, p.omega0 + half) / pump_spectrum(p, p.omega0), 0.5, 1e-11);
}

TEST(Spdc, SincSeriesIsContinuous) {
  EXPECT_EQ(sinc(0.0), 1.0);
  for (double x : {1e-6, 9.9e-5, 1.01e-4, 1e-3}) EXPECT_NEAR(sinc(x), std::sin(x) / x, 1e-15);
  EXPECT_NEAR(sinc(pi), 0.0, 1e-16);
}

TEST(Spdc, DimensionAuditHolds) {
  static_assert(dimension_audit::jsa_measure == dim::dimensionless);
  static_assert(dimension_audit::jsa_J == dim::second);
  EXPECT_TRUE(dimension_audit::coupling_G == pow_half(dim::joule, 2) * pow_half(dim::second, 3));
}

TEST(Spdc, CouplingMatchesPrintedExpression) {
  const Fixture f;
  const auto s = f.section();
  for (double dw : {0.0, 1e11, -3e11, 7e11}) {
    const double w = f.w0 + dw, wp = f.w0 - 0.5 * dw + 2e11;
    const auto g = coupling_G(s, w, wp);
    EXPECT_NEAR(std::abs(g) / g_magnitude_by_hand(f, s, w, wp), 1.0, 1e-9);
    EXPECT_NEAR(g.real(), 0.0, 1e-30);  // purely imaginary as printed
    // delta beta is a difference of ~1e7 /m terms, so ordering costs a few digits.
    EXPECT_NEAR(std::abs(g), std::abs(coupling_G(s, wp, w)), 1e-12 * std::abs(g));
  }
}

TEST(Spdc, PhaseMatchedCouplingAndFirstNull) {
  const Fixture f;
  auto s = f.section();
  const auto peak = coupling_G(s, f.w0, f.w0);
  // sinc = 1 at delta beta = 0: the magnitude is the bare prefactor.
  EXPECT_NEAR(std::abs(peak) / g_magnitude_by_hand(f, s, f.w0, f.w0), 1.0, 1e-12);
  // Doubling L at delta beta = 0 doubles |G|.
  auto s2 = s;
  s2.length *= 2.0;
  EXPECT_NEAR(std::abs(coupling_G(s2, f.w0, f.w0)) / std::abs(peak), 2.0, 1e-12);
  // Shift the period so delta beta L / 2 = pi at the degenerate point.
  const double mismatch = beta(f.pump, 2.0 * f.w0) - 2.0 * beta(f.signal, f.w0);
  auto null = s;
  null.period = pi / (mismatch - 2.0 * pi / s.length);
  EXPECT_LT(std::abs(coupling_G(null, f.w0, f.w0)) / std::abs(peak), 1e-12);
}

TEST(Spdc, JsaScalingLaws) {
  const Fixture f;
  const auto s = f.section();
  auto p = f.pulse();
  const double w = f.w0 + 3e10, wp = f.w0 - 2e10;
  const auto base = waveguide_J(s, p, w, wp);
  p.energy *= 4.0;
  EXPECT_NEAR(std::abs(waveguide_J(s, p, w, wp)) / std::abs(base), 2.0, 1e-8);
  p.energy = 0.0;
  EXPECT_EQ(std::abs(waveguide_J(s, p, w, wp)), 0.0);
  auto doubled = s;
  doubled.length *= 2.0;
  const auto pd = f.pulse();
  EXPECT_NEAR(std::abs(waveguide_J(doubled, pd, f.w0, f.w0)) / std::abs(waveguide_J(s, pd, f.w0, f.w0)), 2.0, 1e-8);
  auto twice = s;
  twice.heisenberg_factor_two = true;
  EXPECT_NEAR(std::abs(waveguide_J(twice, pd, w, wp)) / std::abs(base), 2.0, 1e-12);
}

TEST(Spdc, JsaAlongAntiDiagonalTracesSinc) {
  const Fixture f;
  const auto s = f.section();
  const auto p = f.pulse();
  for (int k = -40; k <= 40; ++k) {
    const double w = f.w0 + k * 2.5e11, wp = 2.0 * f.w0 - w;
    const double expected = g_magnitude_by_hand(f, s, w, wp) * pump_amplitude(p, w + wp) / hbar;
    EXPECT_NEAR(std::abs(waveguide_J(s, p, w, wp)) / expected, 1.0, 1e-9);
  }
}

TEST(Spdc, EnergyConservationLocality) {
  const Fixture f;
  const auto s = f.section();
  const auto p = f.pulse();
  const double peak = std::abs(waveguide_J(s, p, f.w0, f.w0));
  const double far = 6.0 * p.fwhm_omega();
  for (double extra : {1.0001, 1.5, 3.0}) {
    EXPECT_LT(std::abs(waveguide_J(s, p, f.w0 + 0.5 * far * extra, f.w0 + 0.5 * far * extra)), 1e-6 * peak);
    EXPECT_LT(std::abs(waveguide_J(s, p, f.w0 - 1e11, f.w0 + 1e11 - far * extra)), 1e-6 * peak);
  }
}

TEST(Spdc, NoCavityLimitIsEtaTimesJ) {
  const auto open = CavityCoupling::from_sigma(0.0, 0.995, 0.99);
  const Complex J{1.2e-12, -3.4e-13};
  for (double a : {0.0, 0.7, 2.0}) {
    EXPECT_EQ(cavity_j(J, open, a, 1.3 * a), open.eta() * J);
  }
}

TEST(Spdc, FactorizationIdentity) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const auto c = CavityCoupling::from_sigma(0.999 * u(rng), 0.9 + 0.1 * u(rng), 0.9 + 0.0999 * u(rng));
    const Complex J{u(rng) - 0.5, u(rng) - 0.5};
    const double a = two_pi * u(rng), b = two_pi * u(rng);
    const double direct = std::norm(cavity_j(J, c, a, b));
    const double k2 = c.kappa * c.kappa;
    const double identity = k2 * k2 * c.eta() * c.eta() * buildup_factor(c, a) * buildup_factor(c, b) * std::norm(J);
    EXPECT_NEAR(direct / identity, 1.0, 1e-10);
    EXPECT_NEAR(std::abs(cavity_j(J, c, a, b)), std::abs(cavity_j(J, c, b, a)), 1e-12 * std::abs(cavity_j(J, c, a, b)));
  }
}

TEST(Spdc, DoubleResonancePeak) {
  const double eta = 0.998;
  const auto c = CavityCoupling::from_sigma(eta, 1.0, eta);
  const Complex J{2.0, 0.0};
  const double k2 = 1.0 - eta * eta;
  // |j|^2 = kappa^4 eta^2 |J|^2 / (1 - sigma eta)^4 at phase zero on both axes.
  const double expected = k2 * k2 * eta * eta * 4.0 / std::pow(1.0 - eta * eta, 4);
  EXPECT_NEAR(std::norm(cavity_j(J, c, 0.0, 0.0)) / expected, 1.0, 1e-12);
}

namespace {

JSAGrid small_grid(const Fixture& f, Provenance prov, const CavityCoupling& c, unsigned threads, std::size_t n = 96) {
  const double span = two_pi * 300e9;
  JsaRequest req;
  req.signal = Axis::spanning(f.w0 - span, f.w0 + span, n);
  req.idler = Axis::spanning(f.w0 - span, f.w0 + span, n);
  req.provenance = prov;
  static AxisCavity sc, ic;
  sc = uniform_axis(c, f.signal, 5.8e-3, req.signal);
  ic = uniform_axis(c, f.signal, 5.8e-3, req.idler);
  req.signal_cavity = &sc;
  req.idler_cavity = &ic;
  req.threads = threads;
  return jsa_grid(f.section(), f.pulse(), req);
}

}  // namespace

TEST(Spdc, GridNoCavityEqualsEtaTimesWaveguideGrid) {
  const Fixture f;
  const auto open = CavityCoupling::from_sigma(0.0, 0.99, 0.98);
  const auto j = small_grid(f, Provenance::cavity_j, open, 1);
  const auto J = small_grid(f, Provenance::waveguide_J, open, 1);
  double worst = 0.0;
  for (std::size_t k = 0; k < j.values.size(); ++k) worst = std::max(worst, std::abs(j.values[k] - open.eta() * J.values[k]));
  double scale = 0.0;
  for (const auto& v : J.values) scale = std::max(scale, std::abs(v));
  EXPECT_LE(worst, 1e-15 * scale);
}

TEST(Spdc, GridIsIndependentOfThreadCount) {
  const Fixture f;
  const auto c = CavityCoupling::from_kappa_power(0.052, 0.9999, 0.99);
  const auto a = small_grid(f, Provenance::cavity_j, c, 1);
  const auto b = small_grid(f, Provenance::cavity_j, c, 5);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t k = 0; k < a.values.size(); ++k) ASSERT_EQ(a.values[k], b.values[k]);
}

TEST(Spdc, GridMatchesPointwiseEvaluation) {
  const Fixture f;
  const auto c = CavityCoupling::from_kappa_power(0.052, 0.9999, 0.99);
  const auto g = small_grid(f, Provenance::cavity_j, c, 2);
  const auto gi = small_grid(f, Provenance::cavity_internal_j, c, 2);
  for (std::size_t i = 0; i < g.rows(); i += 17) {
    for (std::size_t j = 0; j < g.cols(); j += 13) {
      const double ws = g.signal.at(i), wi = g.idler.at(j);
      const auto J = waveguide_J(f.section(), f.pulse(), ws, wi);
      const auto ref = cavity_j(J, c, beta(f.signal, ws) * 5.8e-3, beta(f.signal, wi) * 5.8e-3);
      EXPECT_LT(std::abs(g.at(i, j) - ref), 1e-9 * std::abs(ref) + 1e-300);
      EXPECT_NEAR(std::abs(gi.at(i, j)) * c.kappa, std::abs(g.at(i, j)), 1e-12 * std::abs(g.at(i, j)) + 1e-300);
    }
  }
  EXPECT_EQ(to_string(g.provenance), "cavity_j");
}

TEST(Spdc, GridRejectsTooFewPoints) {
  const Fixture f;
  const auto c = CavityCoupling::from_kappa_power(0.052, 0.9999, 0.99);
  EXPECT_THROW((void)small_grid(f, Provenance::cavity_j, c, 1, 32), Error);
}

TEST(Spdc, IbefLimits) {
  EXPECT_DOUBLE_EQ(ibef(CavityCoupling::from_sigma(0.0, 0.9, 1.0)), 1.0);
  const double eta_nl = 0.99999, eta_cav = 0.999, eta = eta_nl * eta_cav;
  EXPECT_NEAR(ibef(CavityCoupling::from_sigma(eta, eta_nl, eta_cav)) / ibef_max(eta_nl, eta_cav), 1.0, 1e-12);
}

TEST(Spdc, IbefPeaksAtCriticalCoupling) {
  const double eta_nl = 0.99999, eta_cav = 0.999, eta = eta_nl * eta_cav;
  auto f = [&](double s) { return ibef(CavityCoupling::from_sigma(s, eta_nl, eta_cav)); };
  // Golden-section search on (0, 1).
  double a = 0.9, b = 0.99999999;
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a), d = a + g * (b - a);
  for (int it = 0; it < 200; ++it) {
    if (f(c) > f(d)) b = d; else a = c;
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  const double best = 0.5 * (a + b);
  EXPECT_NEAR(best, eta, 1e-4);
  EXPECT_NEAR(f(best) / ibef_max(eta_nl, eta_cav), 1.0, 1e-6);
}

TEST(Spdc, IbefMaxGrowsTwoOrdersPerDecadeOfLoss) {
  // Lossless poled section: 1 - eta^2 ~ 2 (1 - eta_cav), so a decade less loss gives ~100x.
  EXPECT_NEAR(ibef_max(1.0, 0.9999) / ibef_max(1.0, 0.999) / 100.0, 1.0, 0.1);
  // With eta_nl = 0.99999 the poled loss caps the gain; compare against the hand value.
  auto by_hand = [](double nl, double cav) {
    const double e = nl * cav;
    return cav * cav / ((1.0 - e * e) * (1.0 - e * e));
  };
  const double ratio = ibef_max(0.99999, 0.9999) / ibef_max(0.99999, 0.999);
  EXPECT_NEAR(ratio / (by_hand(0.99999, 0.9999) / by_hand(0.99999, 0.999)), 1.0, 1e-10);  // 1 - eta^2 cancels
  EXPECT_GT(ratio, 80.0);
}

TEST(Spdc, ClosedFormRatioIsIbef) {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const auto c = CavityCoupling::from_sigma(u(rng), 0.9 + 0.0999 * u(rng), 0.9 + 0.0999 * u(rng));
    const double T = (1.0 + 50.0 * u(rng)) * 1e-12;
    const double J = 1e-10 * (0.1 + u(rng));
    EXPECT_NEAR(closed_form_pcav(c, T, J) / closed_form_pfwg(c, T, J) / ibef(c), 1.0, 1e-12);
  }
}

TEST(Spdc, ClosedFormsWithoutCavity) {
  const auto c = CavityCoupling::from_sigma(0.0, 0.99, 0.97);
  const double T = 19e-12, J = 3e-11;
  // sigma = 0: P_cav = eta^2 J^2 / (2 T^2) and P_fwg = eta_nl^2 J^2 / (2 T^2).
  EXPECT_NEAR(closed_form_pcav(c, T, J) / (c.eta() * c.eta() * J * J / (2.0 * T * T)), 1.0, 1e-14);
  EXPECT_NEAR(closed_form_pfwg(c, T, J) / (0.99 * 0.99 * J * J / (2.0 * T * T)), 1.0, 1e-14);
}

TEST(Spdc, CavityProbabilityRisesWithCouplingAsPrinted) {
  // kappa^4 / (1 - sigma^2 eta^2)^2 has a negative sigma-derivative for any
  // eta < 1, so P_cav grows with kappa^2 over the whole range.
  double previous = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const auto c = CavityCoupling::from_kappa_power(0.005 * k - 1e-9, 0.9999, 0.999);
    const double p = closed_form_pcav(c, 19e-12, 1e-10);
    EXPECT_GT(p, previous);
    previous = p;
  }
}

TEST(Spdc, PumpBuildupSweep) {
  std::vector<double> detuning;
  for (int k = -50; k <= 50; ++k) detuning.push_back(0.01 * k);
  const auto weak = pump_buildup_sweep(0.1, 0.99, detuning);
  const auto strong = pump_buildup_sweep(0.6, 0.99, detuning);
  double best = 0.0;
  double best_detuning = 1.0;
  for (const auto& p : weak.points) {
    if (p.relative_pgr > best) {
      best = p.relative_pgr;
      best_detuning = p.detuning_fraction;
    }
  }
  EXPECT_EQ(best_detuning, 0.0);
  EXPECT_GT(strong.half_fsr_value, weak.half_fsr_value);
  const auto open = pump_buildup_sweep(1.0, 0.99, detuning);
  for (const auto& p : open.points) EXPECT_DOUBLE_EQ(p.relative_pgr, 1.0);
}

TEST(Spdc, GaussianModeOverlap) {
  // Identical Gaussians with unit relative weight: O = 2 / (3 sqrt(pi) w).
  const double w = 1.2e-6;
  const int n = 241;
  ModeProfile m;
  for (int k = 0; k < n; ++k) {
    m.x.push_back(-8.0 * w + 16.0 * w * k / (n - 1));
    m.y.push_back(-8.0 * w + 16.0 * w * k / (n - 1));
  }
  for (double x : m.x) {
    for (double y : m.y) {
      m.field.emplace_back(std::exp(-(x * x + y * y) / (2.0 * w * w)), 0.0);
      m.weight.push_back(eps0);
    }
  }
  EXPECT_THROW(m.validate(), Error);
  m.normalize();
  EXPECT_NO_THROW(m.validate());
  const auto o = mode_overlap(m, m, m);
  EXPECT_NEAR(o.real() / (2.0 / (3.0 * std::sqrt(pi) * w)), 1.0, 1e-6);
}
