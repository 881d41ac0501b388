#include "lvpoly/powerflow.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace lvpoly {

Network::Network(Feeder feeder) : feeder_(std::move(feeder)) {
  const auto report = validate_radial(feeder_);
  if (!report.empty()) throw FeederError("invalid feeder: " + report.front().message);

  const std::size_t nb = feeder_.buses.size();
  const std::size_t nbr = feeder_.branches.size();
  source_ = *feeder_.bus_index(feeder_.source.bus);

  std::vector<std::vector<std::size_t>> incident(nb);
  std::vector<std::size_t> from(nbr), to(nbr);
  for (std::size_t b = 0; b < nbr; ++b) {
    from[b] = *feeder_.bus_index(feeder_.branches[b].from_bus);
    to[b] = *feeder_.bus_index(feeder_.branches[b].to_bus);
    incident[from[b]].push_back(b);
    incident[to[b]].push_back(b);
  }

  parent_branch_.assign(nb, npos);
  up_.assign(nbr, npos);
  down_.assign(nbr, npos);
  reversed_.assign(nbr, false);
  std::vector<bool> seen(nb, false);
  std::queue<std::size_t> q;
  q.push(source_);
  seen[source_] = true;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    order_.push_back(u);
    for (std::size_t b : incident[u]) {
      const std::size_t v = from[b] == u ? to[b] : from[b];
      if (seen[v]) continue;
      seen[v] = true;
      parent_branch_[v] = b;
      up_[b] = u;
      down_[b] = v;
      reversed_[b] = from[b] != u;
      q.push(v);
    }
  }

  for (std::size_t b : incident[source_]) {
    if (head_ == npos || b < head_) head_ = b;
  }

  const double zbase = feeder_.base_impedance_ohm();
  z_pu_.reserve(nbr);
  y_pu_.reserve(nbr);
  for (const Branch& br : feeder_.branches) {
    PhaseMatrix z = br.impedance_ohm() / zbase;
    z_pu_.push_back(z);
    y_pu_.push_back(z.inverse());
  }

  customer_bus_.reserve(feeder_.customers.size());
  for (const Customer& c : feeder_.customers) customer_bus_.push_back(*feeder_.bus_index(c.bus));
  v_source_ = feeder_.source_voltage_pu();
}

namespace {

void finish_solution(const Network& net, PowerFlowSolution& sol, const std::vector<PhaseVector>& bus_load_current,
                     std::vector<PhaseVector>& down_current) {
  const Feeder& f = net.feeder();
  sol.branch_currents.assign(net.branch_count(), PhaseVector::Zero());
  sol.total_losses_kva = {};
  for (std::size_t b = 0; b < net.branch_count(); ++b) {
    const PhaseVector& i = down_current[b];
    const PhaseVector dv = sol.bus_voltages[net.upstream_bus(b)] - sol.bus_voltages[net.downstream_bus(b)];
    for (int p = 0; p < 3; ++p) sol.total_losses_kva += dv(p) * std::conj(i(p));
    sol.branch_currents[b] = net.reversed(b) ? PhaseVector(-i) : i;
  }
  PhaseVector out = bus_load_current[net.source_bus()];
  for (std::size_t b = 0; b < net.branch_count(); ++b)
    if (net.upstream_bus(b) == net.source_bus()) out += down_current[b];
  sol.slack_power_kva = {};
  const PhaseVector& vs = sol.bus_voltages[net.source_bus()];
  for (int p = 0; p < 3; ++p) sol.slack_power_kva += vs(p) * std::conj(out(p));
  sol.total_losses_kva *= f.base_power_kva;
  sol.slack_power_kva *= f.base_power_kva;
}

}  // namespace

PowerFlowSolution PowerFlowSolver::solve(const InjectionSet& inj, const SolverOptions& options) const {
  const Network& net = net_;
  const Feeder& f = net.feeder();
  if (inj.size() != net.customer_count() || inj.load_kvar.size() != inj.size() || inj.dg_kw.size() != inj.size() ||
      inj.dg_kvar.size() != inj.size())
    throw std::invalid_argument("injection set does not match the feeder's customers");
  if (!(options.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");

  const std::size_t nb = net.bus_count();
  // Net consumed power per (bus, phase), pu.
  std::vector<PhaseVector> s_node(nb, PhaseVector::Zero());
  const double sbase = f.base_power_kva;
  for (std::size_t h = 0; h < inj.size(); ++h)
    s_node[net.customer_bus(h)](index_of(net.customer_phase(h))) += inj.net_consumption_kva(h) / sbase;

  PowerFlowSolution sol;
  sol.bus_voltages.assign(nb, net.source_voltage());
  std::vector<PhaseVector> i_load(nb, PhaseVector::Zero());
  std::vector<PhaseVector> i_down(net.branch_count(), PhaseVector::Zero());
  std::vector<PhaseVector> i_acc(nb);
  const auto& order = net.order();

  auto load_currents = [&] {
    for (std::size_t u = 0; u < nb; ++u)
      for (int p = 0; p < 3; ++p) {
        const Complex s = s_node[u](p);
        i_load[u](p) = s == Complex{} ? Complex{} : std::conj(s / sol.bus_voltages[u](p));
      }
  };
  auto backward = [&] {
    for (std::size_t u = 0; u < nb; ++u) i_acc[u] = i_load[u];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t b = net.parent_branch(*it);
      if (b == Network::npos) continue;
      i_down[b] = i_acc[*it];
      i_acc[net.upstream_bus(b)] += i_acc[*it];
    }
  };

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    load_currents();
    backward();
    for (std::size_t u : order) {
      const std::size_t b = net.parent_branch(u);
      if (b == Network::npos) continue;
      sol.bus_voltages[u] = sol.bus_voltages[net.upstream_bus(b)] - net.z_pu(b) * i_down[b];
    }
    double mismatch = 0.0;
    for (std::size_t u = 0; u < nb; ++u)
      for (int p = 0; p < 3; ++p) {
        if (s_node[u](p) == Complex{}) continue;
        const Complex s_calc = sol.bus_voltages[u](p) * std::conj(i_load[u](p));
        mismatch = std::max(mismatch, std::abs(s_calc - s_node[u](p)));
      }
    sol.iterations = iter;
    sol.max_mismatch = mismatch;
    if (mismatch <= options.tolerance) {
      // Re-evaluate currents at the converged voltages so KCL holds exactly.
      load_currents();
      backward();
      finish_solution(net, sol, i_load, i_down);
      return sol;
    }
    if (!std::isfinite(mismatch)) break;
  }
  throw ConvergenceError("power flow did not converge after " + std::to_string(sol.iterations) +
                             " iterations (mismatch " + std::to_string(sol.max_mismatch) + " pu)",
                         sol.iterations, sol.max_mismatch);
}

PowerFlowSolution solve(const Feeder& feeder, const InjectionSet& injections, const SolverOptions& options) {
  return PowerFlowSolver(feeder).solve(injections, options);
}

PowerFlowSolution solution_from_voltages(const Network& net, std::vector<PhaseVector> voltages) {
  PowerFlowSolution sol;
  sol.bus_voltages = std::move(voltages);
  std::vector<PhaseVector> i_down(net.branch_count());
  for (std::size_t b = 0; b < net.branch_count(); ++b)
    i_down[b] = net.y_pu(b) * (sol.bus_voltages[net.upstream_bus(b)] - sol.bus_voltages[net.downstream_bus(b)]);
  // Source-bus consumption is not observable from branch currents alone.
  std::vector<PhaseVector> no_load(net.bus_count(), PhaseVector::Zero());
  finish_solution(net, sol, no_load, i_down);
  return sol;
}

double customer_voltage(const Network& net, const PowerFlowSolution& sol, std::size_t customer) {
  return std::abs(sol.bus_voltages[net.customer_bus(customer)](index_of(net.customer_phase(customer))));
}

double dg_reactive_kvar(double p_kw, double power_factor) {
  if (!(power_factor > 0.0) || power_factor > 1.0) throw std::invalid_argument("power factor must be in (0, 1]");
  return -p_kw * std::tan(std::acos(power_factor));
}

}  // namespace lvpoly
