#include "qpc/transport.hpp"

#include <algorithm>
#include <cmath>

#include "qpc/numeric.hpp"

namespace qpc::transport {

namespace {

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Transmission of subband N as a function of kappa (riser-anchored).
double subband_transmission_kappa(double kappa, int n, const SaddlePotential& pot) {
  const double u_e = pot.e_y_mev / pot.e_x_mev;
  return logistic(kTwoPi * (kappa - (n - 1) * u_e));
}

// d/dkappa of the above.
double subband_transconductance_kappa(double kappa, int n, const SaddlePotential& pot) {
  const double t = subband_transmission_kappa(kappa, n, pot);
  return kTwoPi * t * (1.0 - t);
}

// Integrates f against the thermal window -df/dE (E in meV), i.e. the
// convolution value at the window center. Panels sized to resolve whichever
// is finer, the window or the transmission step.
template <typename F>
double fermi_average(F&& f, double kt_mev, double e_x_mev) {
  const double halfspan = 20.0 * kt_mev;
  const double scale = std::min(kt_mev, e_x_mev / kTwoPi);
  int panels = static_cast<int>(std::ceil(2.0 * halfspan / scale));
  panels = std::clamp(panels, 16, 96);
  const double beta = 1.0 / kt_mev;
  auto integrand = [&](double x) {
    const double c = std::cosh(0.5 * beta * x);
    const double w = 0.25 * beta / (c * c);
    return w * f(x);
  };
  return gauss_legendre(integrand, -halfspan, halfspan, panels);
}

constexpr double kZeroTemperatureKelvin = 1e-9;

}  // namespace

double transmission(double energy_mev, int subband, const SaddlePotential& pot) {
  if (subband < 1) throw ArgumentError("transmission: subband index must be >= 1");
  pot.validate();
  const double eps_n = pot.e_y_mev * (subband - 0.5);
  return logistic(kTwoPi * (energy_mev - eps_n) / pot.e_x_mev);
}

double conductance_noninteracting(Kappa kappa, const SaddlePotential& pot, const ThermalState& th,
                                  int n_subbands) {
  if (n_subbands < 1) throw ArgumentError("conductance: n_subbands must be >= 1");
  pot.validate();
  th.validate();
  const double kt = kBoltzmannMeVPerK * th.temperature_k;
  if (kt <= kZeroTemperatureKelvin * kBoltzmannMeVPerK) {
    double g = 0.0;
    for (int n = 1; n <= n_subbands; ++n) g += subband_transmission_kappa(kappa.value, n, pot);
    return g;
  }
  auto g_at = [&](double de_mev) {
    const double k_shift = kappa.value + de_mev / pot.e_x_mev;
    double g = 0.0;
    for (int n = 1; n <= n_subbands; ++n) g += subband_transmission_kappa(k_shift, n, pot);
    return g;
  };
  return fermi_average(g_at, kt, pot.e_x_mev);
}

double conductance_biased(Kappa kappa, double v_sd_volts, const SaddlePotential& pot,
                          const ThermalState& th, int n_subbands) {
  if (!std::isfinite(v_sd_volts)) throw ArgumentError("conductance_biased: bias must be finite");
  const double dk = kMeVPerVolt * v_sd_volts / (2.0 * pot.e_x_mev);
  const double hi = conductance_noninteracting(Kappa{kappa.value + dk}, pot, th, n_subbands);
  const double lo = conductance_noninteracting(Kappa{kappa.value - dk}, pot, th, n_subbands);
  return 0.5 * (hi + lo);
}

double transconductance_noninteracting(Kappa kappa, const SaddlePotential& pot,
                                       const ThermalState& th, int n_subbands) {
  if (n_subbands < 1) throw ArgumentError("transconductance: n_subbands must be >= 1");
  pot.validate();
  th.validate();
  const double kt = kBoltzmannMeVPerK * th.temperature_k;
  if (kt <= kZeroTemperatureKelvin * kBoltzmannMeVPerK) {
    double tc = 0.0;
    for (int n = 1; n <= n_subbands; ++n) tc += subband_transconductance_kappa(kappa.value, n, pot);
    return tc;
  }
  auto tc_at = [&](double de_mev) {
    const double k_shift = kappa.value + de_mev / pot.e_x_mev;
    double tc = 0.0;
    for (int n = 1; n <= n_subbands; ++n) tc += subband_transconductance_kappa(k_shift, n, pot);
    return tc;
  };
  return fermi_average(tc_at, kt, pot.e_x_mev);
}

}  // namespace qpc::transport
