#pragma once

#include "lvpoly/feeder.hpp"

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lvpoly {

/// Per-customer operating point. Load is positive when consumed, DG positive when injected.
struct InjectionSet {
  std::vector<double> load_kw;
  std::vector<double> load_kvar;
  std::vector<double> dg_kw;
  std::vector<double> dg_kvar;

  InjectionSet() = default;
  explicit InjectionSet(std::size_t customers)
      : load_kw(customers, 0.0), load_kvar(customers, 0.0), dg_kw(customers, 0.0), dg_kvar(customers, 0.0) {}

  std::size_t size() const { return load_kw.size(); }
  Complex net_consumption_kva(std::size_t h) const {
    return {load_kw[h] - dg_kw[h], load_kvar[h] - dg_kvar[h]};
  }
};

struct SolverOptions {
  double tolerance = 1e-8;  // max complex power mismatch, pu
  int max_iter = 100;
};

struct PowerFlowSolution {
  std::vector<PhaseVector> bus_voltages;     // pu, indexed like Feeder::buses
  std::vector<PhaseVector> branch_currents;  // pu, positive from `from_bus` to `to_bus`
  Complex total_losses_kva{};                // kW + j kvar over all phases
  Complex slack_power_kva{};                 // delivered by the source, all phases
  int iterations = 0;
  double max_mismatch = 0.0;                 // pu
};

class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

private:
  int iterations_;
  double residual_;
};

/// Per-unit, source-ordered view of a validated feeder. Immutable once built.
class Network {
public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit Network(Feeder feeder);

  const Feeder& feeder() const { return feeder_; }
  std::size_t bus_count() const { return feeder_.buses.size(); }
  std::size_t branch_count() const { return feeder_.branches.size(); }
  std::size_t customer_count() const { return feeder_.customers.size(); }
  std::size_t source_bus() const { return source_; }

  /// Buses in breadth-first order from the source (source first).
  const std::vector<std::size_t>& order() const { return order_; }
  /// Branch feeding `bus` from upstream; npos for the source.
  std::size_t parent_branch(std::size_t bus) const { return parent_branch_[bus]; }
  std::size_t upstream_bus(std::size_t branch) const { return up_[branch]; }
  std::size_t downstream_bus(std::size_t branch) const { return down_[branch]; }
  /// True when the file lists the branch against the direction of supply.
  bool reversed(std::size_t branch) const { return reversed_[branch]; }
  const PhaseMatrix& z_pu(std::size_t branch) const { return z_pu_[branch]; }
  const PhaseMatrix& y_pu(std::size_t branch) const { return y_pu_[branch]; }
  /// First branch (file order) leaving the source bus.
  std::size_t head_branch() const { return head_; }

  std::size_t customer_bus(std::size_t h) const { return customer_bus_[h]; }
  Phase customer_phase(std::size_t h) const { return feeder_.customers[h].phase; }

  const PhaseVector& source_voltage() const { return v_source_; }

private:
  Feeder feeder_;
  std::size_t source_ = 0;
  std::size_t head_ = npos;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> parent_branch_;
  std::vector<std::size_t> up_, down_;
  std::vector<bool> reversed_;
  std::vector<PhaseMatrix> z_pu_, y_pu_;
  std::vector<std::size_t> customer_bus_;
  PhaseVector v_source_;
};

/// Backward/forward sweep for constant-PQ customers. Flat start on every call;
/// `solve` is const and safe to call concurrently.
class PowerFlowSolver {
public:
  explicit PowerFlowSolver(Feeder feeder) : net_(std::move(feeder)) {}
  explicit PowerFlowSolver(Network net) : net_(std::move(net)) {}

  const Network& network() const { return net_; }
  const Feeder& feeder() const { return net_.feeder(); }

  PowerFlowSolution solve(const InjectionSet& injections, const SolverOptions& options = {}) const;

private:
  Network net_;
};

PowerFlowSolution solve(const Feeder& feeder, const InjectionSet& injections, const SolverOptions& options = {});

/// Branch currents from Ohm's law on the branch model, plus losses and slack
/// power, for an arbitrary voltage state (used by the state estimator).
PowerFlowSolution solution_from_voltages(const Network& net, std::vector<PhaseVector> voltages);

/// Magnitude of the phase voltage at a customer's point of connection.
double customer_voltage(const Network& net, const PowerFlowSolution& sol, std::size_t customer);

/// DG reactive output for an inductive power factor: the unit absorbs Q = P * tan(acos(pf)).
double dg_reactive_kvar(double p_kw, double power_factor);

}  // namespace lvpoly
