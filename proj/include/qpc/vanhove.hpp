#pragma once

#include <vector>

#include "qpc/errors.hpp"

namespace qpc::vanhove {

// 1D tight-binding barrier. The Hamiltonian carries a +2*hopping diagonal
// shift so each site's local band bottom equals its onsite potential; the
// lead band then spans [floor, floor + 4*hopping].
struct BarrierProfile {
  int n_sites = 0;
  double site_spacing_nm = 1.0;
  double hopping_mev = 0.0;
  double e_x_mev = 0.0;
  double e_y_mev = 0.0;
  double barrier_top_mev = 0.0;  // V_c
  double floor_mev = 0.0;        // lead onsite potential
  std::vector<double> onsite_mev;
  std::vector<double> interaction_weight;  // U_j / U in [0, 1], zero at both ends
};

struct BarrierOptions {
  double floor_drop_e_x = 10.0;            // truncate the parabola at V_c - drop*E_x
  double interaction_halfdepth_e_x = 2.0;  // U_j = U where V_j >= V_c - depth*E_x
  double site_spacing_nm = 1.0;
};

// Discretizes the parabolic barrier V(j) = V_c - E_x^2 (j - j0)^2 / (4 tau),
// truncated at the floor and held flat into the leads.
BarrierProfile build_barrier(double e_x_mev, double e_y_mev, double v_c_mev, int n_sites,
                             double hopping_mev, const BarrierOptions& opt = {});

// Per-site LDOS (both spins, 1/meV per site) from the retarded Green's
// function with exact semi-infinite-lead self-energies.
std::vector<double> site_ldos(const BarrierProfile& profile, double energy_mev);

// Interaction-weighted central-region average of the site LDOS.
double averaged_ldos(const BarrierProfile& profile, double energy_mev);

// LDOS per site of an infinite flat chain with the profile's hopping, at the
// same absolute energy (local band bottom = floor). Used as the open-channel
// background level.
double lead_background_ldos(const BarrierProfile& profile, double energy_mev);

struct LdosCurve {
  std::vector<double> kappa;
  std::vector<double> ldos;
  double ldos_max = 0.0;
  double kappa_at_max = 0.0;
};

struct KappaGrid {
  double min = -3.0;
  double max = 9.0;
  int points = 601;
};

// LDOS ridge over kappa = (mu - V_c)/E_x, swept by rigidly shifting the
// barrier at fixed mu; thermally smeared with -df/dE when temperature > 0.
LdosCurve ldos_ridge(const BarrierProfile& profile, double mu_mev, double temperature_k,
                     const KappaGrid& grid = {});

// U_eff(kappa) = U * LDOS(kappa), dimensionless.
std::vector<double> u_eff(const LdosCurve& curve, double u_mev);

struct HartreeMap {
  std::vector<double> v_c_mev;          // bare barrier heights, ascending
  std::vector<double> v_c_hartree_mev;  // effective Hartree heights
  std::vector<double> u_eff;            // on the same grid
};

// Core first-order map: V_c^h(V_c) = V_ref + integral of (1 - U_eff) from the
// pinch-off reference (largest V_c, where U_eff ~ 0) down the grid.
// Throws ModelValidityError when max(U_eff) >= 1.
HartreeMap hartree_map_from_ueff(std::vector<double> v_c_grid, std::vector<double> u_eff_grid);

// Full map built from the profile's LDOS ridge at (mu, T).
HartreeMap hartree_map(const BarrierProfile& profile, double u_mev, double mu_mev,
                       double temperature_k, double v_c_lo_mev, double v_c_hi_mev, int points = 601);

}  // namespace qpc::vanhove
