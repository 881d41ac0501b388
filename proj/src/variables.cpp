#include "lvpoly/variables.hpp"

#include <cmath>
#include <stdexcept>

namespace lvpoly {

std::string TrackedVariable::name() const {
  const std::string ph(1, phase_letter(phase));
  switch (kind) {
    case VariableKind::CustomerVoltage: return "v:" + customer;
    case VariableKind::HeadActivePower: return "p_head:" + ph;
    case VariableKind::HeadReactivePower: return "q_head:" + ph;
    case VariableKind::HeadCurrent: return "i_head:" + ph;
    case VariableKind::TotalLosses: return "loss";
  }
  return "?";
}

std::string TrackedVariable::component_name(std::size_t c) const {
  if (kind != VariableKind::HeadCurrent) return name();
  return name() + (c == 0 ? ".re" : ".im");
}

std::string variable_class(VariableKind kind) {
  switch (kind) {
    case VariableKind::CustomerVoltage: return "voltage";
    case VariableKind::HeadActivePower: return "p_flow";
    case VariableKind::HeadReactivePower: return "q_flow";
    case VariableKind::HeadCurrent: return "current";
    case VariableKind::TotalLosses: return "losses";
  }
  return "?";
}

TrackedVariable parse_variable(const std::string& name) {
  TrackedVariable v;
  if (name == "loss") {
    v.kind = VariableKind::TotalLosses;
    return v;
  }
  const auto colon = name.find(':');
  if (colon == std::string::npos || colon + 1 == name.size())
    throw std::invalid_argument("unknown variable '" + name + "'");
  const std::string head = name.substr(0, colon), tail = name.substr(colon + 1);
  if (head == "v") {
    v.kind = VariableKind::CustomerVoltage;
    v.customer = tail;
    return v;
  }
  if (tail.size() != 1) throw std::invalid_argument("unknown variable '" + name + "'");
  v.phase = phase_from_letter(tail[0]);
  if (head == "p_head") v.kind = VariableKind::HeadActivePower;
  else if (head == "q_head") v.kind = VariableKind::HeadReactivePower;
  else if (head == "i_head") v.kind = VariableKind::HeadCurrent;
  else throw std::invalid_argument("unknown variable '" + name + "'");
  return v;
}

std::vector<TrackedVariable> default_tracked_variables(const Feeder& feeder) {
  std::vector<TrackedVariable> out;
  for (const Customer& c : feeder.customers) out.push_back({VariableKind::CustomerVoltage, c.id, Phase::A});
  for (VariableKind k : {VariableKind::HeadActivePower, VariableKind::HeadReactivePower, VariableKind::HeadCurrent})
    for (Phase p : {Phase::A, Phase::B, Phase::C}) out.push_back({k, {}, p});
  out.push_back({VariableKind::TotalLosses, {}, Phase::A});
  return out;
}

TargetExtractor::TargetExtractor(const Network& net, std::vector<TrackedVariable> variables)
    : net_(&net), variables_(std::move(variables)) {
  const Feeder& f = net.feeder();
  for (const auto& v : variables_) {
    offsets_.push_back(width_);
    width_ += v.components();
    customer_index_.push_back(v.kind == VariableKind::CustomerVoltage ? f.require_customer(v.customer) : 0);
  }
  if (net.head_branch() == Network::npos) throw std::invalid_argument("feeder has no head branch");
  current_scale_ = f.base_current_a() / f.branches[net.head_branch()].ampacity_a;
  power_scale_ = 1.0;
}

std::size_t TargetExtractor::find(const std::string& name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].name() == name) return i;
  throw std::out_of_range("variable '" + name + "' is not tracked");
}

void TargetExtractor::extract(const PowerFlowSolution& sol, std::span<double> out) const {
  const Network& net = *net_;
  const std::size_t head = net.head_branch();
  const PhaseVector& v_src = sol.bus_voltages[net.source_bus()];
  const PhaseVector& i_head = sol.branch_currents[head];
  for (std::size_t k = 0; k < variables_.size(); ++k) {
    const TrackedVariable& v = variables_[k];
    const std::size_t o = offsets_[k];
    const auto p = static_cast<Eigen::Index>(index_of(v.phase));
    switch (v.kind) {
      case VariableKind::CustomerVoltage:
        out[o] = customer_voltage(net, sol, customer_index_[k]);
        break;
      case VariableKind::HeadActivePower:
        out[o] = (v_src(p) * std::conj(i_head(p))).real() * power_scale_;
        break;
      case VariableKind::HeadReactivePower:
        out[o] = (v_src(p) * std::conj(i_head(p))).imag() * power_scale_;
        break;
      case VariableKind::HeadCurrent:
        out[o] = i_head(p).real() * current_scale_;
        out[o + 1] = i_head(p).imag() * current_scale_;
        break;
      case VariableKind::TotalLosses:
        out[o] = sol.total_losses_kva.real() / net.feeder().base_power_kva;
        break;
    }
  }
}

std::vector<double> TargetExtractor::extract(const PowerFlowSolution& sol) const {
  std::vector<double> out(width_);
  extract(sol, out);
  return out;
}

std::vector<double> TargetExtractor::magnitudes(std::span<const double> comp) const {
  std::vector<double> out(variables_.size());
  for (std::size_t k = 0; k < variables_.size(); ++k) {
    const std::size_t o = offsets_[k];
    out[k] = variables_[k].kind == VariableKind::HeadCurrent ? std::hypot(comp[o], comp[o + 1]) : comp[o];
  }
  return out;
}

}  // namespace lvpoly
