#pragma once

#include "lvpoly/regression.hpp"
#include "lvpoly/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lvpoly {

struct LocalMeasurement {
  double v_pu = 1.0;
  double p_level_pct = 0.0;
  double pf = 1.0;  // inductive

  /// Throws std::invalid_argument outside V > 0, 0 <= P_level <= 100, 0.85 <= PF <= 1.
  void validate() const;
};

/// Sensitivities are per unit change of the generation level expressed as a
/// fraction of rating (multiply by 0.01 for per-percent values) and per unit tau.
struct Estimate {
  std::string variable;
  double magnitude = 0.0;
  double d_dp_level = 0.0;
  double d_dtau = 0.0;
  QuadCoeffs b{};                      // real part for currents
  std::optional<QuadCoeffs> b_imag;    // currents only
};

/// Inverts the local-voltage polynomial for the zero-generation reference voltage.
/// Throws std::domain_error when the denominator is below 1e-9 in magnitude.
double recover_reference_voltage(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep);

/// Same inversion on raw coefficient models.
double recover_reference_voltage(double v_local, double p, double tau, const CoeffModels& local);

Estimate estimate(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep,
                  const std::string& variable);
Estimate estimate(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep, std::size_t variable);

/// One estimate per bundle variable, in bundle order.
std::vector<Estimate> estimate_all(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep);

}  // namespace lvpoly
