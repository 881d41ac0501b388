#pragma once

#include "lvpoly/powerflow.hpp"

#include <span>
#include <string>
#include <vector>

namespace lvpoly {

enum class VariableKind { CustomerVoltage, HeadActivePower, HeadReactivePower, HeadCurrent, TotalLosses };

/// A network quantity whose magnitude is characterised by the polynomials.
/// Units: voltages on the nominal base; head-of-feeder powers and total losses on
/// the feeder's per-phase base power; currents on the head branch ampacity.
/// Head currents are fitted through their real and imaginary parts (two components).
struct TrackedVariable {
  VariableKind kind = VariableKind::CustomerVoltage;
  std::string customer;  // CustomerVoltage only
  Phase phase = Phase::A;  // head-of-feeder kinds

  std::string name() const;
  std::size_t components() const { return kind == VariableKind::HeadCurrent ? 2 : 1; }
  /// Component name used in bundle files: "i_head:c.re", otherwise the variable name.
  std::string component_name(std::size_t c) const;

  bool operator==(const TrackedVariable&) const = default;
};

/// "voltage", "p_flow", "q_flow", "current" or "losses".
std::string variable_class(VariableKind kind);

/// Parses "v:<customer>", "p_head:<phase>", "q_head:<phase>", "i_head:<phase>" or "loss".
TrackedVariable parse_variable(const std::string& name);

/// Every customer voltage; head P, Q, I per phase; total active losses.
std::vector<TrackedVariable> default_tracked_variables(const Feeder& feeder);

/// Flattens the tracked variables of a solution into regression targets.
class TargetExtractor {
public:
  TargetExtractor(const Network& net, std::vector<TrackedVariable> variables);

  const std::vector<TrackedVariable>& variables() const { return variables_; }
  std::size_t width() const { return width_; }
  std::size_t offset(std::size_t variable) const { return offsets_[variable]; }
  /// Index of the variable with this name; throws std::out_of_range.
  std::size_t find(const std::string& name) const;

  void extract(const PowerFlowSolution& sol, std::span<double> out) const;
  std::vector<double> extract(const PowerFlowSolution& sol) const;

  /// Combines extracted components into variable magnitudes (|I| for currents).
  std::vector<double> magnitudes(std::span<const double> components) const;

private:
  const Network* net_;
  std::vector<TrackedVariable> variables_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> customer_index_;
  std::size_t width_ = 0;
  double current_scale_ = 1.0;
  double power_scale_ = 1.0;
};

}  // namespace lvpoly
