#pragma once

#include <stdexcept>
#include <string>

namespace qpc {

// Bad user-supplied parameter (wrong subband index, malformed window, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numerical configuration that cannot produce trustworthy results
// (tight-binding band edge too close, grid too coarse, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The first-order interaction model stops being well posed (U_eff >= 1).
struct ModelValidityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Requested a trace from a nonfunctional device.
struct DeviceDefectError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Series-resistance calibration could not find a first plateau.
struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Nonlinear fit failed to converge or landed on a parameter bound.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Kappa transform or spectroscopy extraction preconditions not met.
struct ExtractionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cohort statistics requested on insufficient or degenerate input.
struct StatisticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem problems, always carrying the offending path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qpc
