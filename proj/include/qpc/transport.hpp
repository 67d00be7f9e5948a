#pragma once

#include "qpc/constants.hpp"
#include "qpc/errors.hpp"

namespace qpc::transport {

// Saddle-point barrier parameters. Energies are the harmonic curvatures
// hbar*omega along transport (e_x) and across it (e_y), in meV.
struct SaddlePotential {
  double e_x_mev = 1.0;
  double e_y_mev = 2.5;
  double lever_arm = 0.07;      // dV_SD/dV_SG
  double v_riser_volts = -0.8;  // gate voltage of the first riser midpoint

  void validate() const {
    if (!(e_x_mev > 0.0) || !(e_y_mev > 0.0)) throw ArgumentError("saddle: curvatures must be > 0");
    if (!(lever_arm > 0.0) || lever_arm > 1.0) throw ArgumentError("saddle: lever arm outside (0, 1]");
  }
};

struct ThermalState {
  double temperature_k = 0.0;
  double chemical_potential_mev = 0.0;

  void validate() const {
    if (temperature_k < 0.0) throw ArgumentError("thermal state: negative temperature");
  }
};

// Dimensionless gate coordinate kappa = a e (V_G - V_G^riser) / E_x.
// Conductance functions anchor kappa = 0 at the first subband's transmission
// midpoint, so subband N's riser sits at kappa = (N-1) E_y / E_x.
struct Kappa {
  double value = 0.0;
};

// Gate voltage <-> kappa using the device lever arm.
inline double kappa_from_gate(double v_gate, const SaddlePotential& pot) {
  return pot.lever_arm * kMeVPerVolt * (v_gate - pot.v_riser_volts) / pot.e_x_mev;
}
inline double gate_from_kappa(double kappa, const SaddlePotential& pot) {
  return pot.v_riser_volts + kappa * pot.e_x_mev / (pot.lever_arm * kMeVPerVolt);
}

// Saddle-point transmission of subband N at a given energy. Energies are
// measured from the bare barrier top, so the subband bottom sits at
// eps_N = E_y (N - 1/2). Exactly 1/2 at eps_N.
double transmission(double energy_mev, int subband, const SaddlePotential& pot);

// Thermally broadened noninteracting conductance in units of G_Q.
double conductance_noninteracting(Kappa kappa, const SaddlePotential& pot, const ThermalState& th,
                                  int n_subbands);

// Finite-DC-bias conductance: symmetric 50/50 source/drain split,
// G = (G(mu + eV/2) + G(mu - eV/2)) / 2.
double conductance_biased(Kappa kappa, double v_sd_volts, const SaddlePotential& pot,
                          const ThermalState& th, int n_subbands);

// Analytic transconductance dG^0/dkappa (G_Q per unit kappa).
double transconductance_noninteracting(Kappa kappa, const SaddlePotential& pot,
                                       const ThermalState& th, int n_subbands);

}  // namespace qpc::transport
