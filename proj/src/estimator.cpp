#include "lvpoly/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace lvpoly {

void LocalMeasurement::validate() const {
  if (!(v_pu > 0.0) || !std::isfinite(v_pu)) throw std::invalid_argument("local voltage must be positive");
  if (!(p_level_pct >= 0.0 && p_level_pct <= 100.0)) throw std::invalid_argument("P_level must be in [0, 100]");
  if (!(pf >= 0.85 && pf <= 1.0)) throw std::invalid_argument("PF must be in [0.85, 1]");
}

double recover_reference_voltage(double v_local, double p, double tau, const CoeffModels& local) {
  const QuadCoeffs m = quadratic_basis(p, tau);
  double num = v_local, den = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    num -= local[i].a2 * m[i];
    den += local[i].a1 * m[i];
  }
  if (std::abs(den) < 1e-9) throw std::domain_error("reference voltage inversion is singular");
  return num / den;
}

double recover_reference_voltage(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep) {
  m.validate();
  const auto& models = bundle.at(timestep);
  return recover_reference_voltage(m.v_pu, m.p_level_pct / 100.0, tau_from_pf(m.pf),
                                   models[bundle.offset(bundle.local_variable())]);
}

namespace {

Estimate evaluate(const CoeffBundle& bundle, const std::vector<CoeffModels>& models, std::size_t variable,
                  double v_ref, double p, double tau) {
  const TrackedVariable& var = bundle.variables().at(variable);
  const std::size_t o = bundle.offset(variable);
  Estimate e;
  e.variable = var.name();
  e.b = instantiate(models[o], v_ref);
  const double x = evaluate_quadratic(e.b, p, tau);
  const double dx_dp = quadratic_d_dp(e.b, p, tau);
  const double dx_dt = quadratic_d_dtau(e.b, p, tau);
  if (var.kind != VariableKind::HeadCurrent) {
    e.magnitude = x;
    e.d_dp_level = dx_dp;
    e.d_dtau = dx_dt;
    return e;
  }
  e.b_imag = instantiate(models[o + 1], v_ref);
  const double y = evaluate_quadratic(*e.b_imag, p, tau);
  e.magnitude = std::hypot(x, y);
  if (e.magnitude > 0.0) {
    e.d_dp_level = (x * dx_dp + y * quadratic_d_dp(*e.b_imag, p, tau)) / e.magnitude;
    e.d_dtau = (x * dx_dt + y * quadratic_d_dtau(*e.b_imag, p, tau)) / e.magnitude;
  }
  return e;
}

}  // namespace

Estimate estimate(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep, std::size_t variable) {
  m.validate();
  const auto& models = bundle.at(timestep);
  const double p = m.p_level_pct / 100.0, tau = tau_from_pf(m.pf);
  const double v_ref = recover_reference_voltage(m.v_pu, p, tau, models[bundle.offset(bundle.local_variable())]);
  return evaluate(bundle, models, variable, v_ref, p, tau);
}

Estimate estimate(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep,
                  const std::string& variable) {
  return estimate(m, bundle, timestep, bundle.find(variable));
}

std::vector<Estimate> estimate_all(const LocalMeasurement& m, const CoeffBundle& bundle, std::size_t timestep) {
  m.validate();
  const auto& models = bundle.at(timestep);
  const double p = m.p_level_pct / 100.0, tau = tau_from_pf(m.pf);
  const double v_ref = recover_reference_voltage(m.v_pu, p, tau, models[bundle.offset(bundle.local_variable())]);
  std::vector<Estimate> out;
  out.reserve(bundle.variables().size());
  for (std::size_t v = 0; v < bundle.variables().size(); ++v) out.push_back(evaluate(bundle, models, v, v_ref, p, tau));
  return out;
}

}  // namespace lvpoly
