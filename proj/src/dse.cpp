#include "lvpoly/dse.hpp"

#include <cmath>
#include <stdexcept>
#include <limits>

namespace lvpoly {

std::vector<Measurement> build_pseudo_measurements(const DemandPool& pool, const Feeder& feeder, std::size_t timestep,
                                                   double sigma_floor_kw) {
  if (pool.size() == 0) throw std::invalid_argument("empty demand pool");
  if (timestep >= pool.steps()) throw std::out_of_range("no pool statistics for timestep " + std::to_string(timestep));
  if (sigma_floor_kw < 0.0) sigma_floor_kw = 1e-6 * feeder.base_power_kva;
  const TimestepStats& p = pool.active_stats(timestep);
  const TimestepStats& q = pool.reactive_stats(timestep);
  std::vector<Measurement> out;
  out.reserve(2 * feeder.customers.size());
  for (const Customer& c : feeder.customers) {
    out.push_back({MeasurementKind::PseudoActive, c.id, p.mean, std::max(p.stddev, sigma_floor_kw)});
    out.push_back({MeasurementKind::PseudoReactive, c.id, q.mean, std::max(q.stddev, sigma_floor_kw)});
  }
  return out;
}

DseModel::DseModel(const Network& net, const DseLocal& local, const std::vector<Measurement>& pseudos,
                   const DseOptions& options)
    : net_(&net) {
  local.measurement.validate();
  const Feeder& feeder = net.feeder();
  const std::size_t nodes = 3 * net.bus_count();
  const auto n = static_cast<Eigen::Index>(nodes);
  y_ = Eigen::MatrixXcd::Zero(n, n);
  for (std::size_t b = 0; b < net.branch_count(); ++b) {
    const auto u = static_cast<Eigen::Index>(3 * net.upstream_bus(b));
    const auto d = static_cast<Eigen::Index>(3 * net.downstream_bus(b));
    const PhaseMatrix& y = net.y_pu(b);
    y_.block<3, 3>(u, u) += y;
    y_.block<3, 3>(d, d) += y;
    y_.block<3, 3>(u, d) -= y;
    y_.block<3, 3>(d, u) -= y;
  }
  slack_ = net.source_voltage();
  state_of_node_.assign(nodes, -1);
  for (std::size_t node = 0; node < nodes; ++node) {
    if (node / 3 == net.source_bus()) continue;
    state_of_node_[node] = static_cast<long>(state_nodes_.size());
    state_nodes_.push_back(node);
  }

  // Net injection per node: known DG output minus pseudo demand.
  const double base = feeder.base_power_kva;
  std::vector<Complex> injection(nodes, Complex{});
  std::vector<double> var_p(nodes, 0.0), var_q(nodes, 0.0);
  const double p_frac = local.measurement.p_level_pct / 100.0;
  for (std::size_t h = 0; h < feeder.customers.size(); ++h) {
    if (!feeder.customers[h].dg) continue;
    const double p = p_frac * feeder.customers[h].dg->rating_kw;
    const std::size_t node = 3 * net.customer_bus(h) + index_of(net.customer_phase(h));
    injection[node] += Complex(p, dg_reactive_kvar(p, local.measurement.pf)) / base;
  }
  std::vector<char> have_p(feeder.customers.size(), 0), have_q(feeder.customers.size(), 0);
  for (const Measurement& m : pseudos) {
    const auto idx = feeder.customer_index(m.customer);
    if (!idx) throw std::invalid_argument("pseudo-measurement for unknown customer " + m.customer);
    if (!(m.sigma > 0.0)) throw std::invalid_argument("pseudo-measurement sigma must be positive");
    const std::size_t node = 3 * net.customer_bus(*idx) + index_of(net.customer_phase(*idx));
    const double s = m.sigma / base;
    if (m.kind == MeasurementKind::PseudoActive) {
      injection[node] -= Complex(m.value / base, 0.0);
      var_p[node] += s * s;
      have_p[*idx] = 1;
    } else if (m.kind == MeasurementKind::PseudoReactive) {
      injection[node] -= Complex(0.0, m.value / base);
      var_q[node] += s * s;
      have_q[*idx] = 1;
    } else {
      throw std::invalid_argument("only pseudo demand entries belong in the pseudo-measurement list");
    }
  }
  for (std::size_t h = 0; h < feeder.customers.size(); ++h)
    if (!have_p[h] || !have_q[h])
      throw std::invalid_argument("missing pseudo-measurement statistics for " + feeder.customers[h].id);

  const std::size_t loc = feeder.require_customer(local.location);
  if (!feeder.customers[loc].dg) throw std::invalid_argument("customer " + local.location + " has no DG unit");
  local_node_ = 3 * net.customer_bus(loc) + index_of(net.customer_phase(loc));

  const double floor = options.sigma_floor_pu;
  const auto m_count = static_cast<Eigen::Index>(2 * state_nodes_.size() + 1);
  z_.resize(m_count);
  sigma_.resize(m_count);
  Eigen::Index r = 0;
  for (std::size_t node : state_nodes_) {
    z_(r) = injection[node].real();
    sigma_(r++) = std::max(std::sqrt(var_p[node]), floor);
    z_(r) = injection[node].imag();
    sigma_(r++) = std::max(std::sqrt(var_q[node]), floor);
  }
  z_(r) = local.measurement.v_pu;
  sigma_(r) = floor;
}

Eigen::VectorXd DseModel::initial_state() const {
  const auto s = static_cast<Eigen::Index>(state_nodes_.size());
  Eigen::VectorXd x(2 * s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const Complex v = slack_(static_cast<Eigen::Index>(state_nodes_[static_cast<std::size_t>(i)] % 3));
    x(i) = std::arg(v);
    x(s + i) = std::abs(v);
  }
  return x;
}

namespace {

Eigen::VectorXcd node_voltages(const Eigen::VectorXd& x, const std::vector<long>& state_of_node,
                               const Eigen::VectorXcd& slack) {
  const auto s = x.size() / 2;
  Eigen::VectorXcd v(static_cast<Eigen::Index>(state_of_node.size()));
  for (std::size_t node = 0; node < state_of_node.size(); ++node) {
    const long k = state_of_node[node];
    v(static_cast<Eigen::Index>(node)) =
        k < 0 ? slack(static_cast<Eigen::Index>(node % 3)) : std::polar(x(s + k), x(k));
  }
  return v;
}

}  // namespace

std::vector<PhaseVector> DseModel::voltages(const Eigen::VectorXd& x) const {
  const Eigen::VectorXcd v = node_voltages(x, state_of_node_, slack_);
  std::vector<PhaseVector> out(net_->bus_count());
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = v.segment<3>(static_cast<Eigen::Index>(3 * b));
  return out;
}

Eigen::VectorXd DseModel::expected(const Eigen::VectorXd& x) const {
  const Eigen::VectorXcd v = node_voltages(x, state_of_node_, slack_);
  const Eigen::VectorXcd i = y_ * v;
  Eigen::VectorXd h(z_.size());
  Eigen::Index r = 0;
  for (std::size_t node : state_nodes_) {
    const auto n = static_cast<Eigen::Index>(node);
    const Complex s = v(n) * std::conj(i(n));
    h(r++) = s.real();
    h(r++) = s.imag();
  }
  h(r) = std::abs(v(static_cast<Eigen::Index>(local_node_)));
  return h;
}

Eigen::MatrixXd DseModel::jacobian(const Eigen::VectorXd& x) const {
  const Eigen::VectorXcd v = node_voltages(x, state_of_node_, slack_);
  const Eigen::VectorXcd cur = y_ * v;
  const auto s = static_cast<Eigen::Index>(state_nodes_.size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(z_.size(), 2 * s);
  const Complex im(0.0, 1.0);
  for (Eigen::Index r = 0; r < s; ++r) {
    const auto a = static_cast<Eigen::Index>(state_nodes_[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < s; ++c) {
      const auto b = static_cast<Eigen::Index>(state_nodes_[static_cast<std::size_t>(c)]);
      const Complex yv = y_(a, b) * v(b);
      const Complex vn = v(b) / std::abs(v(b));
      Complex d_ang = -im * v(a) * std::conj(yv);
      Complex d_mag = v(a) * std::conj(y_(a, b) * vn);
      if (a == b) {
        d_ang += im * v(a) * std::conj(cur(a));
        d_mag += std::conj(cur(a)) * vn;
      }
      j(2 * r, c) = d_ang.real();
      j(2 * r + 1, c) = d_ang.imag();
      j(2 * r, s + c) = d_mag.real();
      j(2 * r + 1, s + c) = d_mag.imag();
    }
  }
  const long k = state_of_node_[local_node_];
  if (k >= 0) j(2 * s, s + k) = 1.0;
  return j;
}

double DseModel::objective(const Eigen::VectorXd& x) const {
  return ((z_ - expected(x)).array() / sigma_.array()).square().sum();
}

DseResult run_dse(const Network& net, const DseLocal& local, const std::vector<Measurement>& pseudos,
                  const DseOptions& options) {
  const DseModel model(net, local, pseudos, options);
  DseResult out;
  out.measurements = model.measurements();
  out.states = model.states();
  if (out.measurements < out.states) throw std::invalid_argument("fewer measurements than states");

  Eigen::VectorXd x = model.initial_state();
  double obj = model.objective(x);
  out.objective_history.push_back(obj);
  const Eigen::VectorXd inv_sigma = model.sigmas().cwiseInverse();
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Eigen::VectorXd r = (model.values() - model.expected(x)).cwiseProduct(inv_sigma);
    const Eigen::MatrixXd jw = inv_sigma.asDiagonal() * model.jacobian(x);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jw);
    if (qr.rank() < jw.cols())
      throw IllConditionedError("state estimation gain matrix is singular", std::numeric_limits<double>::infinity());
    const Eigen::VectorXd dx = qr.solve(r);

    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_obj = obj;
    for (int h = 0; h <= options.max_halvings; ++h, alpha *= 0.5) {
      trial = x + alpha * dx;
      trial_obj = model.objective(trial);
      if (trial_obj <= obj) {
        accepted = true;
        break;
      }
    }
    out.iterations = iter;
    if (!accepted) break;  // no descent left along the Gauss-Newton direction
    const double step = alpha * dx.lpNorm<Eigen::Infinity>();
    x = trial;
    obj = trial_obj;
    out.objective_history.push_back(obj);
    if (step < options.tolerance) break;
    if (iter == options.max_iter)
      throw ConvergenceError("state estimation did not converge (objective " + std::to_string(obj) + ")", iter, step);
  }
  out.objective = obj;
  out.bus_voltages = model.voltages(x);
  out.solution = solution_from_voltages(net, out.bus_voltages);
  out.solution.iterations = out.iterations;
  return out;
}

}  // namespace lvpoly
