#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvpoly {

using Complex = std::complex<double>;
using PhaseMatrix = Eigen::Matrix<Complex, 3, 3>;
using PhaseVector = Eigen::Matrix<Complex, 3, 1>;
using CableMatrix = Eigen::Matrix<Complex, 4, 4>;

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

inline constexpr std::size_t index_of(Phase p) { return static_cast<std::size_t>(p); }
char phase_letter(Phase p);
Phase phase_from_letter(char c);

/// Thrown by the feeder parser. `line()` is 1-based, 0 when the error is not tied to a line.
class FeederError : public std::runtime_error {
public:
  FeederError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

struct DGUnit {
  double rating_kw = 0.0;
  bool operator==(const DGUnit&) const = default;
};

struct Customer {
  std::string id;
  std::string bus;
  Phase phase = Phase::A;
  std::optional<DGUnit> dg;
  bool operator==(const Customer&) const = default;
};

/// A three-phase line section. The impedance is held in the phase frame (neutral
/// already eliminated) and in the file's unit, ohm per km.
struct Branch {
  std::string from_bus;
  std::string to_bus;
  double length_m = 0.0;
  PhaseMatrix z_ohm_per_km = PhaseMatrix::Zero();
  double ampacity_a = 0.0;

  PhaseMatrix impedance_ohm() const { return z_ohm_per_km * (length_m / 1000.0); }
  bool operator==(const Branch& o) const;
};

struct SourceBus {
  std::string bus;
  std::array<double, 3> v_pu{1.0, 1.0, 1.0};
  std::array<double, 3> angle_deg{0.0, -120.0, 120.0};
  bool operator==(const SourceBus&) const = default;
};

struct Feeder {
  std::vector<std::string> buses;
  SourceBus source;
  std::vector<Branch> branches;
  std::vector<Customer> customers;
  double base_voltage_v = 230.94;   // line-to-neutral
  double base_power_kva = 100.0;    // per phase

  double base_current_a() const { return base_power_kva * 1000.0 / base_voltage_v; }
  double base_impedance_ohm() const { return base_voltage_v * base_voltage_v / (base_power_kva * 1000.0); }
  PhaseVector source_voltage_pu() const;

  std::optional<std::size_t> bus_index(const std::string& id) const;
  std::optional<std::size_t> customer_index(const std::string& id) const;
  /// Throws std::out_of_range for unknown ids.
  std::size_t require_customer(const std::string& id) const;

  std::size_t dg_count() const;

  bool operator==(const Feeder&) const = default;
};

struct FeederLimits {
  double dg_min_kw = 1.0;
  double dg_max_kw = 4.0;
};

struct Diagnostic {
  std::string kind;   // cycle, unreachable, unknown_bus, duplicate_id, impedance, length, ampacity, dg_rating, source
  std::string message;
};

/// One entry per violated invariant; empty when the feeder is a valid radial network.
std::vector<Diagnostic> validate_radial(const Feeder& feeder, const FeederLimits& limits = {});

/// Eliminates the neutral (row/column 3) of a four-wire impedance matrix,
/// assuming it is grounded at every node.
PhaseMatrix kron_reduce(const CableMatrix& z);

Feeder parse_feeder(std::istream& in, const FeederLimits& limits = {});
Feeder parse_feeder_string(const std::string& text, const FeederLimits& limits = {});
Feeder load_feeder(const std::string& path, const FeederLimits& limits = {});

/// Writes the canonical text form; parse_feeder(serialize_feeder(f)) == f.
std::string serialize_feeder(const Feeder& feeder);

/// FNV-1a over the canonical text form.
std::uint64_t feeder_hash(const Feeder& feeder);
std::string hash_hex(std::uint64_t h);

}  // namespace lvpoly
