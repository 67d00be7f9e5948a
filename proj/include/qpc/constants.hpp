#pragma once

namespace qpc {

// Conductance quantum G_Q = 2e^2/h in siemens.
inline constexpr double kConductanceQuantumS = 7.748091729e-5;

// Boltzmann constant in meV/K.
inline constexpr double kBoltzmannMeVPerK = 8.617333262e-2;

// Potential energy of a unit charge across one volt, in meV.
inline constexpr double kMeVPerVolt = 1000.0;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

}  // namespace qpc
