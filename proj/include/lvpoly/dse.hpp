#pragma once

#include "lvpoly/demand.hpp"
#include "lvpoly/estimator.hpp"
#include "lvpoly/powerflow.hpp"

#include <string>
#include <vector>

namespace lvpoly {

enum class MeasurementKind { LocalVoltage, LocalActive, LocalReactive, PseudoActive, PseudoReactive };

/// Voltages in pu; powers in kW / kvar, positive for consumption (pseudos) or
/// injection (local DG).
struct Measurement {
  MeasurementKind kind = MeasurementKind::PseudoActive;
  std::string customer;
  double value = 0.0;
  double sigma = 0.0;
};

/// P and Q demand pseudo-measurements for every customer: pool mean and standard
/// deviation at timestep t. Standard deviations below `sigma_floor_kw` are raised to it;
/// a negative floor means 1e-6 of the feeder base power.
std::vector<Measurement> build_pseudo_measurements(const DemandPool& pool, const Feeder& feeder, std::size_t timestep,
                                                   double sigma_floor_kw = -1.0);

struct DseOptions {
  double tolerance = 1e-8;     // infinity norm of the accepted state update
  int max_iter = 50;
  double sigma_floor_pu = 1e-6;  // exact measurements and zero-injection nodes
  int max_halvings = 20;
};

struct DseResult {
  std::vector<PhaseVector> bus_voltages;
  PowerFlowSolution solution;  // flows, losses and slack power derived from the state
  int iterations = 0;
  double objective = 0.0;
  std::vector<double> objective_history;  // after each accepted step, starting from the flat start
  std::size_t measurements = 0;
  std::size_t states = 0;
};

/// Local quantities seen by the DG unit at `location`: the CPOC voltage and the unit's
/// own injection; every other DG unit follows the same (P_level, PF).
struct DseLocal {
  std::string location;
  LocalMeasurement measurement;
};

/// Node-level measurement model and Jacobian in polar coordinates, exposed for testing.
class DseModel {
public:
  DseModel(const Network& net, const DseLocal& local, const std::vector<Measurement>& pseudos,
           const DseOptions& options = {});

  std::size_t states() const { return state_nodes_.size() * 2; }
  std::size_t measurements() const { return z_.size(); }

  /// Flat start: every bus at the source voltage.
  Eigen::VectorXd initial_state() const;
  std::vector<PhaseVector> voltages(const Eigen::VectorXd& x) const;
  Eigen::VectorXd expected(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
  const Eigen::VectorXd& values() const { return z_; }
  const Eigen::VectorXd& sigmas() const { return sigma_; }
  double objective(const Eigen::VectorXd& x) const;

private:
  const Network* net_;
  Eigen::MatrixXcd y_;
  std::vector<std::size_t> state_nodes_;   // node = bus * 3 + phase, slack excluded
  std::vector<long> state_of_node_;        // -1 for slack nodes
  std::vector<std::size_t> injection_nodes_;
  std::size_t local_node_ = 0;
  Eigen::VectorXcd slack_;
  Eigen::VectorXd z_, sigma_;
};

/// Gauss-Newton on the weighted least-squares objective with step halving. Throws
/// ConvergenceError when max_iter is reached and IllConditionedError on a
/// rank-deficient gain matrix.
DseResult run_dse(const Network& net, const DseLocal& local, const std::vector<Measurement>& pseudos,
                  const DseOptions& options = {});

}  // namespace lvpoly
