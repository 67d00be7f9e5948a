#include "qpc/vanhove.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "qpc/constants.hpp"
#include "qpc/numeric.hpp"

namespace qpc::vanhove {

namespace {

using cplx = std::complex<double>;

// Retarded self-energy of a semi-infinite chain attached at one end site,
// onsite = lead_mev (local band bottom), hopping tau. z is measured as an
// absolute energy (with the +2 tau diagonal shift already conventionalized).
cplx lead_self_energy(cplx z, double lead_mev, double tau) {
  const cplx x = z - (lead_mev + 2.0 * tau);  // deviation from lead band center
  cplx s = std::sqrt(cplx(4.0 * tau * tau) - x * x);
  cplx sigma = 0.5 * (x - cplx(0.0, 1.0) * s);
  if (sigma.imag() > 0.0) sigma = 0.5 * (x + cplx(0.0, 1.0) * s);
  return sigma;
}

// Margin used by the band-edge guard: one tenth of the barrier relief.
double band_margin(const BarrierProfile& p) {
  return 0.1 * (p.barrier_top_mev - p.floor_mev);
}

void check_energy_in_band(const BarrierProfile& p, double energy_mev) {
  const double lo = p.floor_mev;
  const double hi = p.floor_mev + 4.0 * p.hopping_mev;
  const double margin = band_margin(p);
  if (energy_mev < lo + margin || energy_mev > hi - margin) {
    throw ConfigError("tight-binding band edge too close to requested energy; increase hopping");
  }
}

}  // namespace

BarrierProfile build_barrier(double e_x_mev, double e_y_mev, double v_c_mev, int n_sites,
                             double hopping_mev, const BarrierOptions& opt) {
  if (n_sites < 101 || n_sites % 2 == 0) {
    throw ArgumentError("build_barrier: n_sites must be odd and >= 101");
  }
  if (!(e_x_mev > 0.0) || !(hopping_mev > 0.0)) {
    throw ArgumentError("build_barrier: E_x and hopping must be > 0");
  }
  BarrierProfile p;
  p.n_sites = n_sites;
  p.site_spacing_nm = opt.site_spacing_nm;
  p.hopping_mev = hopping_mev;
  p.e_x_mev = e_x_mev;
  p.e_y_mev = e_y_mev;
  p.barrier_top_mev = v_c_mev;
  p.floor_mev = v_c_mev - opt.floor_drop_e_x * e_x_mev;
  p.onsite_mev.resize(static_cast<size_t>(n_sites));
  p.interaction_weight.resize(static_cast<size_t>(n_sites));

  const int center = n_sites / 2;
  // Inverted parabola with curvature E_x: V_j = V_c - E_x^2 (j - j0)^2 / (4 tau),
  // the effective-mass discretization of (1/2) m w_x^2 x^2 with m = hbar^2/(2 tau a^2).
  const double coef = e_x_mev * e_x_mev / (4.0 * hopping_mev);
  const double cut = p.barrier_top_mev - opt.interaction_halfdepth_e_x * e_x_mev;
  for (int j = 0; j < n_sites; ++j) {
    const double d = static_cast<double>(j - center);
    const double v = v_c_mev - coef * d * d;
    p.onsite_mev[static_cast<size_t>(j)] = std::max(v, p.floor_mev);
    p.interaction_weight[static_cast<size_t>(j)] =
        (p.onsite_mev[static_cast<size_t>(j)] >= cut) ? 1.0 : 0.0;
  }
  p.interaction_weight.front() = 0.0;
  p.interaction_weight.back() = 0.0;

  // Band-edge guard at construction: the whole potential relief must sit
  // inside the lead band with margin.
  const double margin = band_margin(p);
  const double hi = p.floor_mev + 4.0 * hopping_mev;
  if (p.barrier_top_mev + margin > hi - margin) {
    throw ConfigError("build_barrier: band edge within 10% of the potential relief; increase hopping");
  }
  return p;
}

std::vector<double> site_ldos(const BarrierProfile& profile, double energy_mev) {
  check_energy_in_band(profile, energy_mev);
  const int n = profile.n_sites;
  const double tau = profile.hopping_mev;
  const double eta = 1e-6 * tau;  // broadening floor regularizing band-edge singularities
  const cplx z(energy_mev, eta);
  const cplx t2(tau * tau, 0.0);

  // d_j = z - h_jj with h_jj = V_j + 2 tau.
  auto diag = [&](int j) { return z - cplx(profile.onsite_mev[static_cast<size_t>(j)] + 2.0 * tau, 0.0); };

  // Continued-fraction sweep: G_jj = 1 / (L_j + R_j - d_j) with
  // L_j = d_j - tau^2 / L_{j-1} (L_0 includes the left lead self-energy),
  // R_j symmetric from the right.
  std::vector<cplx> right(static_cast<size_t>(n));
  right[static_cast<size_t>(n - 1)] =
      diag(n - 1) - lead_self_energy(z, profile.floor_mev, tau);
  for (int j = n - 2; j >= 0; --j) {
    right[static_cast<size_t>(j)] = diag(j) - t2 / right[static_cast<size_t>(j + 1)];
  }

  std::vector<double> rho(static_cast<size_t>(n));
  cplx left = diag(0) - lead_self_energy(z, profile.floor_mev, tau);
  for (int j = 0; j < n; ++j) {
    const cplx g = 1.0 / (left + right[static_cast<size_t>(j)] - diag(j));
    rho[static_cast<size_t>(j)] = -2.0 / kPi * g.imag();  // both spins
    if (j + 1 < n) left = diag(j + 1) - t2 / left;
  }
  return rho;
}

double averaged_ldos(const BarrierProfile& profile, double energy_mev) {
  const auto rho = site_ldos(profile, energy_mev);
  double wsum = 0.0;
  double acc = 0.0;
  for (size_t j = 0; j < rho.size(); ++j) {
    acc += profile.interaction_weight[j] * rho[j];
    wsum += profile.interaction_weight[j];
  }
  if (wsum <= 0.0) throw ConfigError("averaged_ldos: empty interaction region");
  return acc / wsum;
}

double lead_background_ldos(const BarrierProfile& profile, double energy_mev) {
  const double tau = profile.hopping_mev;
  const double x = energy_mev - (profile.floor_mev + 2.0 * tau);
  const double disc = 4.0 * tau * tau - x * x;
  if (disc <= 0.0) return 0.0;
  return 2.0 / (kPi * std::sqrt(disc));
}

LdosCurve ldos_ridge(const BarrierProfile& profile, double mu_mev, double temperature_k,
                     const KappaGrid& grid) {
  if (grid.points < 5 || !(grid.max > grid.min)) throw ArgumentError("ldos_ridge: bad kappa grid");
  if (temperature_k < 0.0) throw ArgumentError("ldos_ridge: negative temperature");
  (void)mu_mev;  // sweeping V_c at fixed mu == sweeping the evaluation energy

  LdosCurve curve;
  curve.kappa = linspace(grid.min, grid.max, grid.points);
  const double e_x = profile.e_x_mev;
  const double kt = kBoltzmannMeVPerK * temperature_k;

  // Rigid V_c shift at fixed mu is equivalent to evaluating the built profile
  // at energy V_c + kappa * E_x.
  auto raw_at_kappa = [&](double kappa) {
    return averaged_ldos(profile, profile.barrier_top_mev + kappa * e_x);
  };

  if (kt <= 0.0) {
    curve.ldos.resize(curve.kappa.size());
    for (size_t i = 0; i < curve.kappa.size(); ++i) curve.ldos[i] = raw_at_kappa(curve.kappa[i]);
  } else {
    // Sample the raw curve on an extended grid and convolve with -df/dE.
    const double dk = (grid.max - grid.min) / (grid.points - 1);
    const double halfspan_k = 20.0 * kt / e_x;
    const int pad = static_cast<int>(std::ceil(halfspan_k / dk));
    const int total = grid.points + 2 * pad;
    std::vector<double> raw(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) {
      raw[static_cast<size_t>(i)] = raw_at_kappa(grid.min + dk * (i - pad));
    }
    // Kernel in kappa units: (E_x / 4 kT) sech^2(kappa E_x / 2 kT).
    std::vector<double> kernel(static_cast<size_t>(2 * pad + 1));
    double ksum = 0.0;
    for (int m = -pad; m <= pad; ++m) {
      const double c = std::cosh(0.5 * e_x * m * dk / kt);
      const double w = 0.25 * e_x / (kt * c * c);
      kernel[static_cast<size_t>(m + pad)] = w;
      ksum += w * dk;
    }
    for (auto& w : kernel) w /= ksum;  // renormalize the truncated window
    curve.ldos.resize(curve.kappa.size());
    for (int i = 0; i < grid.points; ++i) {
      double acc = 0.0;
      for (int m = -pad; m <= pad; ++m) {
        acc += kernel[static_cast<size_t>(m + pad)] * raw[static_cast<size_t>(i + pad + m)];
      }
      curve.ldos[static_cast<size_t>(i)] = acc * dk;
    }
  }

  const auto it = std::max_element(curve.ldos.begin(), curve.ldos.end());
  curve.ldos_max = *it;
  curve.kappa_at_max = curve.kappa[static_cast<size_t>(it - curve.ldos.begin())];
  return curve;
}

std::vector<double> u_eff(const LdosCurve& curve, double u_mev) {
  if (u_mev < 0.0) throw ArgumentError("u_eff: U must be >= 0");
  std::vector<double> out(curve.ldos.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = u_mev * curve.ldos[i];
  return out;
}

HartreeMap hartree_map_from_ueff(std::vector<double> v_c_grid, std::vector<double> u_eff_grid) {
  if (v_c_grid.size() != u_eff_grid.size() || v_c_grid.size() < 3) {
    throw ArgumentError("hartree_map: grid size mismatch or too small");
  }
  if (!std::is_sorted(v_c_grid.begin(), v_c_grid.end())) {
    throw ArgumentError("hartree_map: v_c grid must be ascending");
  }
  const double umax = *std::max_element(u_eff_grid.begin(), u_eff_grid.end());
  if (umax >= 1.0) {
    throw ModelValidityError("hartree_map: max U_eff >= 1, suppression would reverse the sweep");
  }

  const size_t n = v_c_grid.size();
  const double h = (v_c_grid.back() - v_c_grid.front()) / static_cast<double>(n - 1);
  std::vector<double> integrand(n);
  for (size_t i = 0; i < n; ++i) integrand[i] = 1.0 - u_eff_grid[i];
  // Anchor at the largest V_c (deep pinch-off, U_eff ~ 0): V_c^h = V_c there.
  const auto cum = cumulative_integral(integrand, h);
  HartreeMap map;
  map.v_c_mev = std::move(v_c_grid);
  map.u_eff = std::move(u_eff_grid);
  map.v_c_hartree_mev.resize(n);
  for (size_t i = 0; i < n; ++i) {
    map.v_c_hartree_mev[i] = map.v_c_mev.back() - (cum.back() - cum[i]);
  }
  return map;
}

HartreeMap hartree_map(const BarrierProfile& profile, double u_mev, double mu_mev,
                       double temperature_k, double v_c_lo_mev, double v_c_hi_mev, int points) {
  if (!(v_c_hi_mev > v_c_lo_mev)) throw ArgumentError("hartree_map: empty V_c range");
  // kappa = (mu - V_c)/E_x maps the descending V_c grid to an ascending kappa grid.
  KappaGrid grid;
  grid.min = (mu_mev - v_c_hi_mev) / profile.e_x_mev;
  grid.max = (mu_mev - v_c_lo_mev) / profile.e_x_mev;
  grid.points = points;
  const LdosCurve curve = ldos_ridge(profile, mu_mev, temperature_k, grid);
  const auto ue = u_eff(curve, u_mev);

  std::vector<double> v_c(static_cast<size_t>(points));
  std::vector<double> ue_on_vc(static_cast<size_t>(points));
  for (int i = 0; i < points; ++i) {
    // ascending V_c = reversed kappa order
    const size_t k = static_cast<size_t>(points - 1 - i);
    v_c[static_cast<size_t>(i)] = mu_mev - curve.kappa[k] * profile.e_x_mev;
    ue_on_vc[static_cast<size_t>(i)] = ue[k];
  }
  return hartree_map_from_ueff(std::move(v_c), std::move(ue_on_vc));
}

}  // namespace qpc::vanhove
