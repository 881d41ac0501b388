#include "lvpoly/harness.hpp"

#include "lvpoly/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lvpoly {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

IrradianceProfile clear_sky_profile(std::size_t steps, double sunrise_h, double sunset_h, double peak_pct) {
  if (steps == 0 || 1440 % steps != 0) throw std::invalid_argument("steps must divide the day into whole minutes");
  if (!(sunrise_h < sunset_h)) throw std::invalid_argument("sunrise must precede sunset");
  if (!(peak_pct >= 0.0 && peak_pct <= 100.0)) throw std::invalid_argument("peak must be in [0, 100]");
  IrradianceProfile p;
  p.resolution_min = static_cast<int>(1440 / steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double hour = static_cast<double>(t) * p.resolution_min / 60.0;
    double v = 0.0;
    if (hour > sunrise_h && hour < sunset_h) {
      const double s = std::sin(std::numbers::pi * (hour - sunrise_h) / (sunset_h - sunrise_h));
      v = peak_pct * s * s;
    }
    p.p_level_pct.push_back(v);
  }
  return p;
}

IrradianceProfile read_irradiance_csv(std::istream& in) {
  std::string line;
  IrradianceProfile p;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("timestep", 0) == 0) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw std::runtime_error("irradiance line " + std::to_string(lineno) + ": expected timestep,p_level");
    std::size_t t = 0;
    double v = 0.0;
    try {
      t = std::stoul(a);
      v = std::stod(b);
    } catch (const std::logic_error&) {
      throw std::runtime_error("irradiance line " + std::to_string(lineno) + ": malformed number");
    }
    if (t != p.p_level_pct.size())
      throw std::runtime_error("irradiance line " + std::to_string(lineno) + ": timesteps must be consecutive from 0");
    if (!(v >= 0.0 && v <= 100.0))
      throw std::runtime_error("irradiance line " + std::to_string(lineno) + ": P_level outside [0, 100]");
    p.p_level_pct.push_back(v);
  }
  if (p.p_level_pct.empty() || 1440 % p.p_level_pct.size() != 0)
    throw std::runtime_error("irradiance profile must divide the day into whole minutes");
  p.resolution_min = static_cast<int>(1440 / p.p_level_pct.size());
  return p;
}

IrradianceProfile load_irradiance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_irradiance_csv(in);
}

void write_irradiance_csv(std::ostream& out, const IrradianceProfile& profile) {
  out << "timestep,p_level\n";
  for (std::size_t t = 0; t < profile.steps(); ++t) out << t << ',' << fmt(profile.p_level_pct[t]) << '\n';
}

DemandSchedule DemandSchedule::constant(const DemandScenario& scenario, std::size_t steps) {
  DemandSchedule s;
  s.id = scenario.id;
  s.by_timestep.assign(steps, scenario);
  return s;
}

DemandSchedule DemandSchedule::representative(const std::vector<DemandScenario>& scenarios,
                                              const std::vector<TimestepClusters>& clusters, std::size_t k) {
  DemandSchedule s;
  s.id = k;
  std::size_t steps = 0;
  for (const auto& c : clusters) steps = std::max(steps, c.timestep + 1);
  s.by_timestep.resize(steps);
  for (const auto& c : clusters) {
    if (k >= c.result.k()) throw std::out_of_range("cluster index beyond K");
    s.by_timestep[c.timestep] = scenarios.at(c.result.representatives[k]);
  }
  return s;
}

namespace {

bool load_active(const ExtraLoad& e, std::size_t t, std::size_t steps) {
  return (t >= e.start && t < e.stop) || (t + steps >= e.start && t + steps < e.stop);
}

}  // namespace

TimeSeriesRun run_timeseries(const Feeder& feeder, std::shared_ptr<const CoeffBundle> bundle,
                             const IrradianceProfile& irradiance, const DemandSchedule& schedule,
                             const RunOptions& options) {
  if (!bundle) throw std::invalid_argument("no bundle");
  if (!options.allow_hash_mismatch && bundle->header.feeder_hash != hash_hex(feeder_hash(feeder)))
    throw std::invalid_argument("bundle was trained on a different feeder (hash " + bundle->header.feeder_hash +
                                ", feeder " + hash_hex(feeder_hash(feeder)) + ")");
  const PowerFlowSolver solver(feeder);
  const Network& net = solver.network();
  const TargetExtractor extractor(net, bundle->variables());
  const std::size_t local = bundle->local_variable();
  const std::size_t loc_customer = feeder.require_customer(bundle->header.location);
  if (!feeder.customers[loc_customer].dg) throw std::invalid_argument("the bundle's DG unit is absent from the feeder");

  TimeSeriesRun run;
  run.id = schedule.id;
  run.bundle = bundle;
  run.pf = options.pf;
  if (options.timesteps.empty())
    for (const auto& [t, m] : bundle->timesteps()) run.timesteps.push_back(t);
  else
    run.timesteps = options.timesteps;
  const std::size_t steps = irradiance.steps();
  for (std::size_t t : run.timesteps) {
    if (t >= steps) throw std::invalid_argument("irradiance profile does not cover timestep " + std::to_string(t));
    if (t >= schedule.by_timestep.size() || !schedule.by_timestep[t].pool)
      throw std::invalid_argument("demand schedule does not cover timestep " + std::to_string(t));
    if (!bundle->has(t)) throw std::invalid_argument("bundle has no coefficients for timestep " + std::to_string(t));
  }
  std::vector<std::size_t> extra_index;
  for (const auto& e : options.extra_loads) extra_index.push_back(feeder.require_customer(e.customer));

  const std::size_t n = run.timesteps.size();
  run.p_level_pct.resize(n);
  run.v_local.resize(n);
  run.actual.resize(n);
  run.poly.resize(n);
  if (options.dse) run.dse.resize(n);
  parallel_for(n, [&](std::size_t r) {
    const std::size_t t = run.timesteps[r];
    const DemandScenario& scenario = schedule.by_timestep[t];
    const double p_level = irradiance.p_level_pct[t];
    InjectionSet inj(feeder.customers.size());
    scenario.apply(inj, t);
    for (std::size_t e = 0; e < extra_index.size(); ++e)
      if (load_active(options.extra_loads[e], t, steps)) inj.load_kw[extra_index[e]] += options.extra_loads[e].kw;
    for (std::size_t h = 0; h < inj.size(); ++h) {
      if (!feeder.customers[h].dg) continue;
      inj.dg_kw[h] = p_level / 100.0 * feeder.customers[h].dg->rating_kw;
      inj.dg_kvar[h] = dg_reactive_kvar(inj.dg_kw[h], options.pf);
    }
    const PowerFlowSolution sol = solver.solve(inj, options.solver);
    run.actual[r] = extractor.magnitudes(extractor.extract(sol));
    run.p_level_pct[r] = p_level;
    run.v_local[r] = run.actual[r][local];

    const LocalMeasurement m{run.v_local[r], p_level, options.pf};
    const auto est = estimate_all(m, *bundle, t);
    run.poly[r].resize(est.size());
    for (std::size_t v = 0; v < est.size(); ++v) run.poly[r][v] = est[v].magnitude;

    if (options.dse) {
      const DemandPool& pool = options.pseudo_pool ? *options.pseudo_pool : *scenario.pool;
      const auto pseudos = build_pseudo_measurements(pool, feeder, t);
      const DseResult d = run_dse(net, {bundle->header.location, m}, pseudos, options.dse_options);
      run.dse[r] = extractor.magnitudes(extractor.extract(d.solution));
    }
  });
  return run;
}

TimeSeriesRun inject_transducer_noise(const TimeSeriesRun& run, double percentile_997, std::uint64_t seed) {
  if (!(percentile_997 >= 0.0)) throw std::invalid_argument("noise percentile must be non-negative");
  TimeSeriesRun out = run;
  if (percentile_997 == 0.0) return out;
  out.dse.clear();
  const double sigma = percentile_997 / 100.0 / 3.0;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::mt19937_64 rng(substream_seed(seed, run.id, run.timesteps[r]));
    std::normal_distribution<double> noise(0.0, sigma);
    out.v_local[r] = run.v_local[r] * (1.0 + noise(rng));
    const LocalMeasurement m{out.v_local[r], run.p_level_pct[r], run.pf};
    const auto est = estimate_all(m, *run.bundle, run.timesteps[r]);
    for (std::size_t v = 0; v < est.size(); ++v) out.poly[r][v] = est[v].magnitude;
  }
  return out;
}

const VariableMetrics& ErrorReport::at(const std::string& variable) const {
  for (const auto& v : variables)
    if (v.variable == variable) return v;
  throw std::out_of_range("no metrics for " + variable);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double correlation_r2(const std::vector<double>& a, const std::vector<double>& e) {
  if (a.size() != e.size() || a.empty()) throw std::invalid_argument("correlation: size mismatch");
  if (a == e) return 1.0;
  const double n = static_cast<double>(a.size());
  double ma = 0.0, me = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    me += e[i];
  }
  ma /= n;
  me /= n;
  double sae = 0.0, saa = 0.0, see = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sae += (a[i] - ma) * (e[i] - me);
    saa += (a[i] - ma) * (a[i] - ma);
    see += (e[i] - me) * (e[i] - me);
  }
  if (saa <= 0.0 || see <= 0.0) return 0.0;
  return sae * sae / (saa * see);
}

ErrorReport compute_metrics(const std::vector<TimeSeriesRun>& runs, EstimateSource source) {
  if (runs.empty()) throw std::invalid_argument("no runs to evaluate");
  const auto& vars = runs.front().bundle->variables();
  ErrorReport report;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    std::vector<double> actual, est, err, abs_err;
    for (const auto& run : runs) {
      if (run.bundle->variables() != vars) throw std::invalid_argument("runs track different variables");
      const auto& estimates = source == EstimateSource::Dse ? run.dse : run.poly;
      if (estimates.size() != run.rows()) throw std::invalid_argument("run lacks the requested estimates");
      for (std::size_t r = 0; r < run.rows(); ++r) {
        actual.push_back(run.actual[r][v]);
        est.push_back(estimates[r][v]);
        err.push_back(estimates[r][v] - run.actual[r][v]);
        abs_err.push_back(std::abs(err.back()));
      }
    }
    if (err.size() < 2) throw std::invalid_argument("metrics need at least two samples");
    VariableMetrics m;
    m.variable = vars[v].name();
    m.cls = variable_class(vars[v].kind);
    m.samples = err.size();
    double sum = 0.0;
    for (double x : abs_err) sum += x;
    m.mean_abs = sum / static_cast<double>(abs_err.size());
    m.median = percentile(err, 0.5);
    m.p997_abs = percentile(abs_err, 0.997);
    m.r2 = correlation_r2(actual, est);
    report.variables.push_back(m);
  }
  return report;
}

std::vector<DseComparison> compare_with_dse(const std::vector<TimeSeriesRun>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to compare");
  const auto& vars = runs.front().bundle->variables();
  std::vector<DseComparison> out;
  for (std::size_t v = 0; v < vars.size(); ++v) {
    DseComparison c;
    c.variable = vars[v].name();
    c.cls = variable_class(vars[v].kind);
    std::size_t count = 0;
    double sum = 0.0;
    for (const auto& run : runs) {
      if (run.dse.size() != run.rows()) throw std::invalid_argument("run has no DSE estimates");
      for (std::size_t r = 0; r < run.rows(); ++r) {
        const double d = std::abs((run.poly[r][v] - run.actual[r][v]) - (run.dse[r][v] - run.actual[r][v]));
        sum += d;
        c.max_abs_difference = std::max(c.max_abs_difference, d);
        ++count;
      }
    }
    c.mean_abs_difference = count ? sum / static_cast<double>(count) : 0.0;
    out.push_back(c);
  }
  return out;
}

namespace {

// Customers in a seeded order, `first` (if any) leading.
std::vector<std::size_t> seeded_order(const std::vector<std::size_t>& items, std::uint64_t seed, std::size_t salt,
                                      std::optional<std::size_t> first) {
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  for (std::size_t i : items) {
    const std::uint64_t key = first && *first == i ? 0 : substream_seed(seed, salt, i) | 1;
    keyed.emplace_back(key, i);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::size_t> out;
  for (const auto& [k, i] : keyed) out.push_back(i);
  return out;
}

}  // namespace

Feeder pv_penetration(const Feeder& feeder, double percent, std::uint64_t seed, const std::string& keep) {
  if (!(percent >= 0.0 && percent <= 100.0)) throw std::invalid_argument("penetration must be in [0, 100] percent");
  std::vector<std::size_t> units;
  for (std::size_t h = 0; h < feeder.customers.size(); ++h)
    if (feeder.customers[h].dg) units.push_back(h);
  std::optional<std::size_t> first;
  if (!keep.empty()) {
    first = feeder.require_customer(keep);
    if (!feeder.customers[*first].dg) throw std::invalid_argument("customer " + keep + " has no DG unit");
  }
  std::size_t kept = static_cast<std::size_t>(std::lround(percent / 100.0 * static_cast<double>(units.size())));
  if (first) kept = std::max<std::size_t>(kept, 1);
  const auto order = seeded_order(units, seed, 0x5056, first);
  Feeder out = feeder;
  for (std::size_t i = kept; i < order.size(); ++i) out.customers[order[i]].dg.reset();
  return out;
}

std::vector<ExtraLoad> add_evs(const Feeder& feeder, const EvOptions& o, int resolution_min, std::uint64_t seed) {
  if (!(o.fraction >= 0.0 && o.fraction <= 1.0)) throw std::invalid_argument("EV fraction must be in [0, 1]");
  if (!(o.kw > 0.0)) throw std::invalid_argument("EV charging power must be positive");
  if (!(o.duration_h > 0.0 && o.window_start_h >= 0.0 && o.window_start_h + o.duration_h <= o.window_end_h &&
        o.window_end_h <= 48.0))
    throw std::invalid_argument("EV charging window must contain the charging duration");
  if (resolution_min <= 0) throw std::invalid_argument("resolution must be positive");
  std::vector<std::size_t> all(feeder.customers.size());
  for (std::size_t h = 0; h < all.size(); ++h) all[h] = h;
  const auto order = seeded_order(all, seed, 0x4556, std::nullopt);
  const auto adopters = static_cast<std::size_t>(std::lround(o.fraction * static_cast<double>(all.size())));
  const double per_hour = 60.0 / resolution_min;
  const auto duration = static_cast<std::size_t>(std::lround(o.duration_h * per_hour));
  std::vector<ExtraLoad> out;
  for (std::size_t i = 0; i < adopters; ++i) {
    const std::size_t h = order[i];
    std::mt19937_64 rng(substream_seed(seed, 0x4557, h));
    std::uniform_real_distribution<double> start_h(o.window_start_h, o.window_end_h - o.duration_h);
    const auto start = static_cast<std::size_t>(std::lround(start_h(rng) * per_hour));
    out.push_back({feeder.customers[h].id, o.kw, start, start + duration});
  }
  std::sort(out.begin(), out.end(), [&](const ExtraLoad& a, const ExtraLoad& b) {
    return feeder.require_customer(a.customer) < feeder.require_customer(b.customer);
  });
  return out;
}

namespace {

void deviations(RobustnessOutcome& o) {
  const auto& vars = o.outdated.front().bundle->variables();
  for (std::size_t i = 0; i < o.outdated.size(); ++i) {
    const auto& a = o.outdated[i];
    const auto& b = o.control[i];
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t v = 0; v < vars.size(); ++v) {
        const double d = std::abs(a.poly[r][v] - b.poly[r][v]);
        if (vars[v].kind == VariableKind::CustomerVoltage) o.max_voltage_deviation = std::max(o.max_voltage_deviation, d);
        if (vars[v].kind == VariableKind::HeadCurrent) o.max_current_deviation = std::max(o.max_current_deviation, d);
      }
  }
  o.outdated_metrics = compute_metrics(o.outdated);
  o.control_metrics = compute_metrics(o.control);
}

}  // namespace

RobustnessOutcome pv_penetration_study(const Feeder& feeder, std::shared_ptr<const CoeffBundle> outdated,
                                       double percent, const StudyInputs& in) {
  if (!in.scenarios || in.schedules.empty()) throw std::invalid_argument("study needs scenarios and schedules");
  RobustnessOutcome o;
  const std::string loc = outdated->header.location;
  o.feeder = pv_penetration(feeder, percent, in.seed, loc);
  TrainingConfig cfg = in.training;
  cfg.locations = {loc};
  cfg.variables = outdated->variables();
  const TrainingResult updated = train(o.feeder, *in.scenarios, cfg, in.clusters);
  const auto control = std::make_shared<const CoeffBundle>(updated.bundle(loc));
  RunOptions stale = in.run;
  stale.allow_hash_mismatch = true;
  for (const auto& s : in.schedules) {
    o.outdated.push_back(run_timeseries(o.feeder, outdated, in.irradiance, s, stale));
    o.control.push_back(run_timeseries(o.feeder, control, in.irradiance, s, in.run));
  }
  deviations(o);
  return o;
}

RobustnessOutcome ev_study(const Feeder& feeder, std::shared_ptr<const CoeffBundle> bundle, const EvOptions& evs,
                           const StudyInputs& in) {
  if (in.schedules.empty()) throw std::invalid_argument("study needs schedules");
  RobustnessOutcome o;
  o.feeder = feeder;
  RunOptions with = in.run;
  with.extra_loads = add_evs(feeder, evs, in.irradiance.resolution_min, in.seed);
  for (const auto& s : in.schedules) {
    o.outdated.push_back(run_timeseries(feeder, bundle, in.irradiance, s, with));
    o.control.push_back(run_timeseries(feeder, bundle, in.irradiance, s, in.run));
  }
  deviations(o);
  return o;
}

double max_underestimation(const std::vector<TimeSeriesRun>& runs, const std::string& variable,
                           std::size_t from_timestep) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const TimeSeriesRun& r : runs) {
    const std::size_t v = r.bundle->find(variable);
    for (std::size_t i = 0; i < r.rows(); ++i)
      if (r.timesteps[i] >= from_timestep) worst = std::max(worst, r.actual[i][v] - r.poly[i][v]);
  }
  return worst;
}

double max_estimate_deviation(const std::vector<TimeSeriesRun>& a, const std::vector<TimeSeriesRun>& b,
                              const std::string& variable) {
  if (a.size() != b.size()) throw std::invalid_argument("run lists differ in length");
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].timesteps != b[j].timesteps) throw std::invalid_argument("paired runs cover different timesteps");
    const std::size_t va = a[j].bundle->find(variable), vb = b[j].bundle->find(variable);
    for (std::size_t i = 0; i < a[j].rows(); ++i)
      worst = std::max(worst, std::abs(a[j].poly[i][va] - b[j].poly[i][vb]));
  }
  return worst;
}

void write_run_csv(std::ostream& out, const std::vector<TimeSeriesRun>& runs) {
  out << "run,timestep,p_level,variable,actual,poly_estimate,dse_estimate,poly_error,dse_error\n";
  for (const auto& run : runs) {
    const auto& vars = run.bundle->variables();
    const bool dse = run.dse.size() == run.rows();
    for (std::size_t r = 0; r < run.rows(); ++r)
      for (std::size_t v = 0; v < vars.size(); ++v) {
        const double a = run.actual[r][v];
        out << run.id << ',' << run.timesteps[r] << ',' << fmt(run.p_level_pct[r]) << ',' << vars[v].name() << ','
            << fmt(a) << ',' << fmt(run.poly[r][v]) << ',' << (dse ? fmt(run.dse[r][v]) : "") << ','
            << fmt(run.poly[r][v] - a) << ',' << (dse ? fmt(run.dse[r][v] - a) : "") << '\n';
      }
  }
}

void write_metrics_csv(std::ostream& out, const ErrorReport& report) {
  out << "variable,class,samples,mean_abs_error,median_error,p997_abs_error,r2\n";
  for (const auto& m : report.variables)
    out << m.variable << ',' << m.cls << ',' << m.samples << ',' << fmt(m.mean_abs) << ',' << fmt(m.median) << ','
        << fmt(m.p997_abs) << ',' << fmt(m.r2) << '\n';
}

void write_dse_comparison_csv(std::ostream& out, const std::vector<DseComparison>& rows) {
  out << "variable,class,mean_abs_difference,max_abs_difference\n";
  for (const auto& c : rows)
    out << c.variable << ',' << c.cls << ',' << fmt(c.mean_abs_difference) << ',' << fmt(c.max_abs_difference) << '\n';
}

std::string end_of_feeder_customer(const Network& net, Phase phase) {
  std::vector<double> path(net.bus_count(), 0.0);
  for (std::size_t bus : net.order()) {
    const std::size_t b = net.parent_branch(bus);
    if (b == Network::npos) continue;
    const auto p = static_cast<Eigen::Index>(index_of(phase));
    path[bus] = path[net.upstream_bus(b)] + net.z_pu(b)(p, p).real();
  }
  std::string best;
  double best_r = -1.0;
  for (std::size_t h = 0; h < net.customer_count(); ++h) {
    if (net.customer_phase(h) != phase) continue;
    if (path[net.customer_bus(h)] > best_r) {
      best_r = path[net.customer_bus(h)];
      best = net.feeder().customers[h].id;
    }
  }
  if (best.empty()) throw std::invalid_argument(std::string("no customer on phase ") + phase_letter(phase));
  return best;
}

std::string units_header(const Feeder& feeder, const Network& net) {
  const double amp = net.head_branch() == Network::npos ? 0.0 : feeder.branches[net.head_branch()].ampacity_a;
  return "# units: voltage pu of " + fmt(feeder.base_voltage_v) + " V; power and losses pu of " +
         fmt(feeder.base_power_kva) + " kVA per phase; current pu of " + fmt(amp) + " A head-branch ampacity";
}

}  // namespace lvpoly
