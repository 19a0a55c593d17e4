#pragma once

#include <stdexcept>
#include <string>

namespace qcd {

// Quadrature or other numeric routine failed to reach its accuracy target.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A Monte Carlo estimate could not be formed (e.g. every trial hit the cap).
struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

// Threshold calibration could not bracket or reach the requested band.
struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qcd
