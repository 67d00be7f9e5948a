#include <doctest.h>

#include <cmath>
#include <vector>

#include "qpc/constants.hpp"
#include "qpc/numeric.hpp"
#include "qpc/transport.hpp"

using namespace qpc;
using namespace qpc::transport;

namespace {

const SaddlePotential kPot{1.0, 2.5, 0.07, -0.8};

// Independent fine-grid trapezoid oracle for the thermal average of the
// noninteracting conductance; shares no code with the implementation.
double oracle_thermal_conductance(double kappa, const SaddlePotential& pot, double t_kelvin,
                                  int n_subbands) {
  const double kt = kBoltzmannMeVPerK * t_kelvin;
  const double span = 25.0 * kt;
  const int n = 200001;
  const double h = 2.0 * span / (n - 1);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = -span + h * i;
    const double sh = std::cosh(0.5 * x / kt);
    const double w = 0.25 / (kt * sh * sh);
    double t_sum = 0.0;
    for (int sb = 1; sb <= n_subbands; ++sb) {
      const double arg =
          kTwoPi * (kappa * pot.e_x_mev + x - (sb - 1) * pot.e_y_mev) / pot.e_x_mev;
      t_sum += 1.0 / (1.0 + std::exp(-arg));
    }
    const double weight = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    acc += weight * w * t_sum;
  }
  return acc * h;
}

}  // namespace

TEST_CASE("transmission: logistic midpoint, limits, closed form") {
  // midpoint of the logistic: exactly 1/2 at the subband bottom
  const double eps1 = kPot.e_y_mev * 0.5;
  CHECK(transmission(eps1, 1, kPot) == doctest::Approx(0.5).epsilon(1e-15));
  const double eps3 = kPot.e_y_mev * 2.5;
  CHECK(transmission(eps3, 3, kPot) == doctest::Approx(0.5).epsilon(1e-15));

  // limits
  CHECK(transmission(-1e6, 1, kPot) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(transmission(1e6, 1, kPot) == doctest::Approx(1.0).epsilon(1e-15));

  // E - eps_1 = 1 meV at E_x = 1 meV: 1/(1 + e^{-2 pi}), frozen from an
  // independent high-precision evaluation.
  CHECK(transmission(eps1 + 1.0, 1, kPot) ==
        doctest::Approx(0.99813603811037497).epsilon(1e-12));

  CHECK_THROWS_AS(transmission(0.0, 0, kPot), ArgumentError);
  CHECK_THROWS_AS(transmission(0.0, -2, kPot), ArgumentError);
}

TEST_CASE("conductance: zero-temperature limits") {
  const ThermalState cold{0.0, 0.0};
  // mu exactly at eps_1 <=> kappa = 0 in the riser-anchored convention
  CHECK(conductance_noninteracting(Kappa{0.0}, kPot, cold, 1) ==
        doctest::Approx(0.5).epsilon(1e-15));
  // all channels open
  CHECK(conductance_noninteracting(Kappa{1e3}, kPot, cold, 3) ==
        doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(conductance_noninteracting(Kappa{0.0}, kPot, cold, 0), ArgumentError);
}

TEST_CASE("conductance: independent quadrature oracle at 1.4 K") {
  const ThermalState th{1.4, 0.0};
  for (double kappa : {-1.0, 0.0, 0.7, 2.5}) {
    const double impl = conductance_noninteracting(Kappa{kappa}, kPot, th, 1);
    const double oracle = oracle_thermal_conductance(kappa, kPot, 1.4, 1);
    CHECK(impl == doctest::Approx(oracle).epsilon(1e-6));
  }
  // multi-subband
  const double impl3 = conductance_noninteracting(Kappa{2.4}, kPot, th, 3);
  CHECK(impl3 == doctest::Approx(oracle_thermal_conductance(2.4, kPot, 1.4, 3)).epsilon(1e-6));
}

TEST_CASE("conductance_biased: zero-bias identity, symmetry, half plateau") {
  const ThermalState th{1.4, 0.0};
  const double g0 = conductance_noninteracting(Kappa{0.3}, kPot, th, 3);
  CHECK(conductance_biased(Kappa{0.3}, 0.0, kPot, th, 3) == doctest::Approx(g0).epsilon(1e-14));

  for (double v : {0.5e-3, 2.0e-3}) {
    const double plus = conductance_biased(Kappa{0.4}, v, kPot, th, 3);
    const double minus = conductance_biased(Kappa{0.4}, -v, kPot, th, 3);
    CHECK(plus == doctest::Approx(minus).epsilon(1e-15));
  }

  // e V_SD / 2 = Delta E_{1,2}: on the half plateau below the first riser the
  // source sees ~1 open channel and the drain ~0, giving ~0.5 G_Q. Checked
  // against the quadrature oracle at both chemical potentials.
  SaddlePotential wide = kPot;
  wide.e_y_mev = 4.0;
  const double v_sd = 2.0 * wide.e_y_mev / kMeVPerVolt;  // eV_SD/2 = E_y
  const double kappa = -1.75;
  const ThermalState cool{0.3, 0.0};
  const double impl = conductance_biased(Kappa{kappa}, v_sd, wide, cool, 3);
  const double dk = kMeVPerVolt * v_sd / (2.0 * wide.e_x_mev);
  const double oracle = 0.5 * (oracle_thermal_conductance(kappa + dk, wide, 0.3, 3) +
                               oracle_thermal_conductance(kappa - dk, wide, 0.3, 3));
  CHECK(impl == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(impl == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("transconductance: plateau, analytic peak, finite differences") {
  const ThermalState cold{0.0, 0.0};
  // deep on a plateau the transconductance is essentially zero
  SaddlePotential wide = kPot;
  wide.e_y_mev = 4.0;
  CHECK(transconductance_noninteracting(Kappa{2.0}, wide, cold, 1) < 1e-3);
  // T = 0 analytic logistic derivative peak: 2 pi / 4 = pi / 2
  CHECK(transconductance_noninteracting(Kappa{0.0}, kPot, cold, 1) ==
        doctest::Approx(1.5707963267948966).epsilon(1e-13));

  // matches a centered finite difference of the conductance to 1e-6
  const ThermalState th{1.4, 0.0};
  const double h = 1e-4;
  double worst = 0.0;
  for (double kappa = -10.0; kappa <= 10.0; kappa += 0.5) {
    const double tc = transconductance_noninteracting(Kappa{kappa}, kPot, th, 3);
    const double fd = (conductance_noninteracting(Kappa{kappa + h}, kPot, th, 3) -
                       conductance_noninteracting(Kappa{kappa - h}, kPot, th, 3)) /
                      (2.0 * h);
    worst = std::max(worst, std::fabs(tc - fd));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("invariants: monotone G, sum rule, plateau preservation") {
  // G^0 non-decreasing in kappa at several temperatures
  for (double t : {0.0, 0.04, 1.4}) {
    const ThermalState th{t, 0.0};
    double prev = -1.0;
    for (int i = 0; i <= 1500; ++i) {
      const double kappa = -3.0 + 12.0 * i / 1500.0;
      const double g = conductance_noninteracting(Kappa{kappa}, kPot, th, 3);
      CHECK(g >= prev - 1e-12);
      prev = g;
    }
  }

  // sum rule: integral of TC across one riser is exactly one quantum
  for (double t : {0.0, 1.4}) {
    const ThermalState th{t, 0.0};
    const double h = 0.01;
    std::vector<double> tc;
    for (double kappa = -12.0; kappa <= 12.0 + 1e-12; kappa += h) {
      tc.push_back(transconductance_noninteracting(Kappa{kappa}, kPot, th, 1));
    }
    CHECK(trapezoid(tc, h) == doctest::Approx(1.0).epsilon(1e-6));
  }

  // plateau preservation: below k_B T = E_y/16 the deficit stays under 1e-3
  // (at the often-quoted E_y/10 the exact deficit is ~2/(1+e^5) ~ 1.3e-2).
  const double u_e = kPot.e_y_mev / kPot.e_x_mev;
  {
    const double t16 = kPot.e_y_mev / 16.0 / kBoltzmannMeVPerK;
    const double g = conductance_noninteracting(Kappa{u_e / 2.0}, kPot, {t16, 0.0}, 3);
    CHECK(std::fabs(g - 1.0) < 1e-3);
  }
  {
    const double t10 = kPot.e_y_mev / 10.0 / kBoltzmannMeVPerK;
    const double g = conductance_noninteracting(Kappa{u_e / 2.0}, kPot, {t10, 0.0}, 3);
    const double analytic = 2.0 / (1.0 + std::exp(5.0));
    CHECK(std::fabs(g - 1.0) == doctest::Approx(analytic).epsilon(0.25));
  }
}

TEST_CASE("kappa <-> gate voltage mapping") {
  const double v = gate_from_kappa(2.0, kPot);
  CHECK(kappa_from_gate(v, kPot) == doctest::Approx(2.0).epsilon(1e-12));
  // doubling the lever arm halves the voltage span of one kappa unit
  SaddlePotential twice = kPot;
  twice.lever_arm = 2.0 * kPot.lever_arm;
  const double dv1 = gate_from_kappa(1.0, kPot) - gate_from_kappa(0.0, kPot);
  const double dv2 = gate_from_kappa(1.0, twice) - gate_from_kappa(0.0, twice);
  CHECK(dv1 == doctest::Approx(2.0 * dv2).epsilon(1e-12));
}
