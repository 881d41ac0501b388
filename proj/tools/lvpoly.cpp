// Command-line front end: power flow, sampling, clustering, training, online
// estimation and the validation studies.

#include "lvpoly/harness.hpp"
#include "lvpoly/parallel.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#ifndef LVPOLY_DATA_DIR
#define LVPOLY_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace lvpoly;

namespace {

struct Common {
  std::string feeder = LVPOLY_DATA_DIR "/desk_feeder.txt";
  std::uint64_t seed = 1;
  std::size_t k = 400;
  std::size_t samples = 1000;
  std::size_t grid_steps = 20;
  int timestep_min = 10;
  std::string out = "out";
  std::string pool;
  std::size_t pool_profiles = 1000;
  std::string algorithm = "ward";
  unsigned threads = 0;
};

struct Context {
  Feeder feeder;
  std::shared_ptr<const DemandPool> pool;
  std::vector<DemandScenario> scenarios;

  std::size_t steps() const { return pool->steps(); }
};

Context load_context(const Common& c) {
  Context ctx;
  ctx.feeder = load_feeder(c.feeder);
  if (!c.pool.empty()) {
    std::ifstream in(c.pool);
    if (!in) throw std::runtime_error("cannot open profile pool " + c.pool);
    ctx.pool = std::make_shared<const DemandPool>(read_profile_pool_csv(in));
    if (ctx.pool->resolution_min() != c.timestep_min)
      throw std::invalid_argument("profile pool resolution is " + std::to_string(ctx.pool->resolution_min()) +
                                  " min, --timestep-min is " + std::to_string(c.timestep_min));
  } else {
    SyntheticPoolOptions o;
    o.profiles = c.pool_profiles;
    o.resolution_min = c.timestep_min;
    o.seed = substream_seed(c.seed, 1);
    ctx.pool = std::make_shared<const DemandPool>(synthetic_pool(o));
  }
  ctx.scenarios = sample_scenarios(ctx.pool, ctx.feeder, c.samples, substream_seed(c.seed, 2));
  return ctx;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  const fs::path path = fs::path(c.out) / name;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << std::setprecision(10);
  return f;
}

void finish_summary(const Common& c, const std::string& text) {
  std::cout << text;
  open_out(c, "summary.txt") << text;
}

std::vector<std::size_t> all_timesteps(std::size_t steps) {
  std::vector<std::size_t> ts(steps);
  for (std::size_t t = 0; t < steps; ++t) ts[t] = t;
  return ts;
}

TrainingConfig training_config(const Common& c) {
  TrainingConfig cfg;
  cfg.k = c.k;
  cfg.algorithm = parse_cluster_algorithm(c.algorithm);
  cfg.seed = c.seed;
  cfg.grid = SetpointGrid::uniform(c.grid_steps);
  cfg.threads = c.threads;
  return cfg;
}

IrradianceProfile irradiance_for(const std::string& path, const Context& ctx) {
  if (path.empty()) return clear_sky_profile(ctx.steps());
  IrradianceProfile p = load_irradiance(path);
  if (p.steps() != ctx.steps())
    throw std::invalid_argument("irradiance profile has " + std::to_string(p.steps()) + " rows, demand has " +
                                std::to_string(ctx.steps()) + " timesteps");
  return p;
}

std::vector<TimestepClusters> clusters_for(const Common& c, const Context& ctx) {
  const PowerFlowSolver solver(ctx.feeder);
  return reduce_scenarios(solver, ctx.scenarios, all_timesteps(ctx.steps()), c.k, parse_cluster_algorithm(c.algorithm),
                          c.seed, {}, {}, c.threads);
}

std::vector<DemandSchedule> representative_schedules(const Context& ctx, const std::vector<TimestepClusters>& clusters,
                                                     std::size_t runs) {
  std::size_t k = clusters.front().result.k();
  for (const TimestepClusters& tc : clusters) k = std::min(k, tc.result.k());
  std::vector<DemandSchedule> out;
  for (std::size_t j = 0; j < std::min(runs, k); ++j) out.push_back(DemandSchedule::representative(ctx.scenarios, clusters, j));
  return out;
}

std::vector<TimeSeriesRun> run_all(const Feeder& feeder, std::shared_ptr<const CoeffBundle> bundle,
                                   const IrradianceProfile& irr, const std::vector<DemandSchedule>& schedules,
                                   const RunOptions& opts) {
  std::vector<TimeSeriesRun> runs;
  runs.reserve(schedules.size());
  for (const DemandSchedule& s : schedules) runs.push_back(run_timeseries(feeder, bundle, irr, s, opts));
  return runs;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void metrics_lines(std::ostream& out, const ErrorReport& r, const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    const VariableMetrics& m = r.at(n);
    out << "  " << n << ": mean |err| " << fmt(m.mean_abs) << ", median err " << fmt(m.median) << ", p99.7 |err| "
        << fmt(m.p997_abs) << ", R2 " << fmt(m.r2) << "\n";
  }
}

// Same-phase end-of-feeder voltage and head current for a DG location.
std::pair<std::string, std::string> focus_variables(const Network& net, const std::string& location) {
  const Phase ph = net.feeder().customers[net.feeder().require_customer(location)].phase;
  return {"v:" + end_of_feeder_customer(net, ph), std::string("i_head:") + phase_letter(ph)};
}

int cmd_pf(const Common& c, std::size_t timestep, std::size_t scenario, double p_level, double pf) {
  const Context ctx = load_context(c);
  if (scenario >= ctx.scenarios.size()) throw std::out_of_range("scenario index beyond --samples");
  if (timestep >= ctx.steps()) throw std::out_of_range("timestep beyond the day");
  LocalMeasurement{1.0, p_level, pf}.validate();
  const PowerFlowSolver solver(ctx.feeder);
  InjectionSet inj(ctx.feeder.customers.size());
  ctx.scenarios[scenario].apply(inj, timestep);
  for (std::size_t h = 0; h < inj.size(); ++h) {
    const auto& dg = ctx.feeder.customers[h].dg;
    if (!dg) continue;
    inj.dg_kw[h] = p_level / 100.0 * dg->rating_kw;
    inj.dg_kvar[h] = dg_reactive_kvar(inj.dg_kw[h], pf);
  }
  const PowerFlowSolution sol = solver.solve(inj);
  auto f = open_out(c, "pf_buses.csv");
  f << "bus,phase,v_pu,angle_deg\n";
  for (std::size_t b = 0; b < ctx.feeder.buses.size(); ++b)
    for (std::size_t p = 0; p < 3; ++p) {
      const Complex v = sol.bus_voltages[b](static_cast<Eigen::Index>(p));
      f << ctx.feeder.buses[b] << ',' << phase_letter(static_cast<Phase>(p)) << ',' << std::abs(v) << ','
        << std::arg(v) * 180.0 / std::numbers::pi << "\n";
    }
  auto cf = open_out(c, "pf_customers.csv");
  cf << "customer,bus,phase,load_kw,dg_kw,v_pu\n";
  for (std::size_t h = 0; h < inj.size(); ++h) {
    const Customer& cu = ctx.feeder.customers[h];
    cf << cu.id << ',' << cu.bus << ',' << phase_letter(cu.phase) << ',' << inj.load_kw[h] << ',' << inj.dg_kw[h]
       << ',' << customer_voltage(solver.network(), sol, h) << "\n";
  }
  std::ostringstream s;
  s << "power flow: scenario " << scenario << ", timestep " << timestep << ", P_level " << p_level << "%, PF " << pf
    << "\n  iterations " << sol.iterations << ", max mismatch " << fmt(sol.max_mismatch) << " pu"
    << "\n  losses " << fmt(sol.total_losses_kva.real()) << " kW, " << fmt(sol.total_losses_kva.imag()) << " kvar"
    << "\n  slack " << fmt(sol.slack_power_kva.real()) << " kW, " << fmt(sol.slack_power_kva.imag()) << " kvar\n";
  finish_summary(c, s.str());
  return 0;
}

int cmd_sample(const Common& c) {
  const Context ctx = load_context(c);
  auto f = open_out(c, "scenarios.csv");
  write_scenarios_csv(f, ctx.feeder, ctx.scenarios);
  auto pf = open_out(c, "pool.csv");
  write_profile_pool_csv(pf, *ctx.pool);
  std::ostringstream s;
  s << "sampled " << ctx.scenarios.size() << " scenarios over " << ctx.feeder.customers.size() << " customers and "
    << ctx.steps() << " timesteps from a pool of " << ctx.pool->size() << " profiles\n"
    << "  samples for a 1% standard error: " << required_sample_size(0.01) << "\n";
  finish_summary(c, s.str());
  return 0;
}

int cmd_cluster(const Common& c, std::size_t timestep, std::vector<std::size_t> ks) {
  const Context ctx = load_context(c);
  if (timestep >= ctx.steps()) throw std::out_of_range("timestep beyond the day");
  const auto clusters = clusters_for(c, ctx);
  auto f = open_out(c, "clusters.csv");
  write_cluster_report(f, clusters);

  std::erase_if(ks, [&](std::size_t k) { return k < 1 || k > ctx.scenarios.size(); });
  const PowerFlowSolver solver(ctx.feeder);
  const auto normalized = normalize(build_patterns(solver, ctx.scenarios, timestep));
  const auto elbow = elbow_analysis(normalized, ks, {ClusterAlgorithm::Ward, ClusterAlgorithm::Average,
                                                     ClusterAlgorithm::KMeansPP}, c.seed);
  auto e = open_out(c, "elbow.csv");
  write_elbow_csv(e, elbow);

  std::ostringstream s;
  s << "clustered " << ctx.scenarios.size() << " scenarios into " << c.k << " clusters (" << c.algorithm
    << ") at each of " << clusters.size() << " timesteps\n  SPC at timestep " << timestep << ":\n";
  for (const ElbowPoint& p : elbow) s << "    K=" << p.k << " " << to_string(p.algorithm) << " " << fmt(p.spc) << "\n";
  finish_summary(c, s.str());
  return 0;
}

int cmd_train(const Common& c, const std::string& location, bool degree3, std::size_t fig_timestep) {
  const Context ctx = load_context(c);
  if (fig_timestep >= ctx.steps()) throw std::out_of_range("timestep beyond the day");
  TrainingConfig cfg = training_config(c);
  if (location != "all") cfg.locations = {location};
  cfg.degree3 = degree3;
  cfg.keep_timesteps = {fig_timestep};
  const TrainingResult res = train(ctx.feeder, ctx.scenarios, cfg);

  const std::string units = units_header(ctx.feeder, PowerFlowSolver(ctx.feeder).network());
  fs::create_directories(c.out);
  for (const CoeffBundle& b : res.bundles) {
    save_bundle((fs::path(c.out) / ("bundle_" + b.header.location + ".txt")).string(), b);
    auto cr = open_out(c, "coefficient_r2_" + b.header.location + ".csv");
    write_coefficient_report(cr, b);
    auto sc = open_out(c, "coefficient_scatter_" + b.header.location + ".csv");
    write_coefficient_scatter(sc, res, b, ctx.feeder);
  }
  auto sr = open_out(c, "surface_r2.csv");
  write_surface_report(sr, res);
  auto cl = open_out(c, "clusters.csv");
  write_cluster_report(cl, res.clusters);

  // One sweep in full for plotting, at the first representative of the chosen timestep.
  const PowerFlowSolver solver(ctx.feeder);
  const TargetExtractor ex(solver.network(), res.bundles.front().variables());
  const TimestepClusters& tc = res.clusters.at(fig_timestep);
  const SweepResult sw = sweep(solver, ex, ctx.scenarios[tc.result.representatives.front()], fig_timestep, cfg.grid);
  auto ss = open_out(c, "surface_samples.csv");
  ss << units << "\n";
  write_surface_samples(ss, sw, ex);

  std::ostringstream s;
  s << "trained " << res.bundles.size() << " bundle(s) on " << ctx.scenarios.size() << " scenarios, K=" << c.k << ", "
    << c.grid_steps << "x" << c.grid_steps << " grid, " << res.clusters.size() << " timesteps in "
    << fmt(res.seconds) << " s\n  minimum surface R2 by class and degree:\n";
  std::map<std::pair<std::string, int>, double> by_class;
  for (const SurfaceR2& r : res.surface_r2) {
    auto [it, fresh] = by_class.try_emplace({r.cls, r.degree}, r.stats.min);
    if (!fresh) it->second = std::min(it->second, r.stats.min);
  }
  for (const auto& [key, r2] : by_class) s << "    " << key.first << " degree " << key.second << ": " << fmt(r2) << "\n";
  finish_summary(c, s.str());
  return 0;
}

int cmd_estimate(const std::string& bundle_path, std::size_t timestep, double v, double p_level, double pf,
                 const std::string& out_path) {
  const CoeffBundle bundle = load_bundle(bundle_path);
  const LocalMeasurement m{v, p_level, pf};
  const auto estimates = estimate_all(m, bundle, timestep);
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << std::setprecision(10) << "variable,magnitude,dX_dPlevel,dX_dtau\n";
  // Per percent of rating, as the measurement is given.
  for (const Estimate& e : estimates)
    out << e.variable << ',' << e.magnitude << ',' << e.d_dp_level / 100.0 << ',' << e.d_dtau << "\n";
  return 0;
}

struct BundleSource {
  std::vector<TimestepClusters> clusters;
  std::vector<std::shared_ptr<const CoeffBundle>> bundles;
};

BundleSource bundles_for(const Common& c, const Context& ctx, const std::string& bundle_path,
                         const std::vector<std::string>& locations) {
  BundleSource src;
  src.clusters = clusters_for(c, ctx);
  if (!bundle_path.empty()) {
    src.bundles.push_back(std::make_shared<const CoeffBundle>(load_bundle(bundle_path)));
    return src;
  }
  TrainingConfig cfg = training_config(c);
  cfg.locations = locations;
  cfg.diagnostics = false;
  TrainingResult res = train(ctx.feeder, ctx.scenarios, cfg, &src.clusters);
  for (CoeffBundle& b : res.bundles) src.bundles.push_back(std::make_shared<const CoeffBundle>(std::move(b)));
  return src;
}

int cmd_validate(const Common& c, const std::string& bundle_path, const std::string& location, std::size_t runs,
                 double noise, const std::string& irr_path, double pf, bool all_locations) {
  const Context ctx = load_context(c);
  const IrradianceProfile irr = irradiance_for(irr_path, ctx);
  std::vector<std::string> locations;
  if (all_locations) {
    for (const Customer& cu : ctx.feeder.customers)
      if (cu.dg) locations.push_back(cu.id);
  } else {
    locations = {location};
  }
  const BundleSource src = bundles_for(c, ctx, all_locations ? std::string() : bundle_path, locations);
  const auto schedules = representative_schedules(ctx, src.clusters, runs);
  RunOptions opts;
  opts.pf = pf;

  const Network net(ctx.feeder);
  const std::string units = units_header(ctx.feeder, net);
  std::ostringstream s;
  auto main_bundle = src.bundles.front();
  for (const auto& b : src.bundles)
    if (b->header.location == location) main_bundle = b;
  const std::string loc = main_bundle->header.location;
  const auto runs_main = run_all(ctx.feeder, main_bundle, irr, schedules, opts);
  const ErrorReport report = compute_metrics(runs_main);
  auto rf = open_out(c, "runs.csv");
  rf << units << "\n";
  write_run_csv(rf, runs_main);
  auto mf = open_out(c, "metrics.csv");
  mf << units << "\n";
  write_metrics_csv(mf, report);

  std::vector<TimeSeriesRun> noisy;
  for (const TimeSeriesRun& r : runs_main) noisy.push_back(inject_transducer_noise(r, noise, c.seed));
  const ErrorReport noisy_report = compute_metrics(noisy);
  auto nf = open_out(c, "noise_metrics.csv");
  nf << units << "\n# local voltage noise: 99.7th percentile " << noise << "%\n";
  write_metrics_csv(nf, noisy_report);

  const auto [v_focus, i_focus] = focus_variables(net, loc);
  s << "validation at " << loc << ": " << runs_main.size() << " representative scenarios x " << irr.steps()
    << " timesteps, PF " << pf << "\n";
  metrics_lines(s, report, {v_focus, i_focus});
  s << "with " << noise << "% local voltage noise:\n";
  metrics_lines(s, noisy_report, {v_focus, i_focus});

  if (all_locations) {
    auto lf = open_out(c, "location_errors.csv");
    lf << units << "\nlocation,phase,variable,mean_abs_error,median_error,p997_abs_error,r2\n";
    for (const auto& b : src.bundles) {
      const auto [v, i] = focus_variables(net, b->header.location);
      const ErrorReport r = compute_metrics(run_all(ctx.feeder, b, irr, schedules, opts));
      for (const std::string& n : {v, i}) {
        const VariableMetrics& m = r.at(n);
        lf << b->header.location << ',' << phase_letter(b->header.phase) << ',' << n << ',' << m.mean_abs << ','
           << m.median << ',' << m.p997_abs << ',' << m.r2 << "\n";
      }
    }
    s << "per-location errors for " << src.bundles.size() << " locations in location_errors.csv\n";
  }
  finish_summary(c, s.str());
  return 0;
}

int cmd_benchmark_dse(const Common& c, const std::string& bundle_path, const std::string& location, std::size_t runs,
                      const std::string& irr_path, double pf) {
  const Context ctx = load_context(c);
  const IrradianceProfile irr = irradiance_for(irr_path, ctx);
  const BundleSource src = bundles_for(c, ctx, bundle_path, {location});
  runs = std::min(runs, ctx.scenarios.size());
  std::vector<DemandSchedule> schedules;
  // The last scenarios of the sample, each held for the whole day.
  for (std::size_t j = 0; j < runs; ++j) {
    DemandSchedule d = DemandSchedule::constant(ctx.scenarios[ctx.scenarios.size() - 1 - j], ctx.steps());
    d.id = j;
    schedules.push_back(std::move(d));
  }
  RunOptions opts;
  opts.pf = pf;
  opts.dse = true;
  const auto result = run_all(ctx.feeder, src.bundles.front(), irr, schedules, opts);
  const auto cmp = compare_with_dse(result);
  const std::string units = units_header(ctx.feeder, Network(ctx.feeder));
  auto rf = open_out(c, "dse_runs.csv");
  rf << units << "\n";
  write_run_csv(rf, result);
  auto cf = open_out(c, "dse_comparison.csv");
  cf << units << "\n";
  write_dse_comparison_csv(cf, cmp);

  std::map<std::string, std::pair<double, double>> by_class;
  for (const DseComparison& d : cmp) {
    auto& e = by_class[d.cls];
    e.first = std::max(e.first, d.mean_abs_difference);
    e.second = std::max(e.second, d.max_abs_difference);
  }
  std::ostringstream s;
  s << "polynomials vs state estimation at " << src.bundles.front()->header.location << ", " << result.size()
    << " day(s)\n  largest per-variable |poly error - DSE error| by class (mean, max):\n";
  for (const auto& [cls, e] : by_class) s << "    " << cls << ": " << fmt(e.first) << ", " << fmt(e.second) << "\n";
  finish_summary(c, s.str());
  return 0;
}

struct RobustnessArgs {
  std::string mutation = "pv";
  std::string location = "h21";
  double trained_percent = 50.0;
  double percent = 75.0;
  std::size_t runs = 10;
  std::vector<double> sweep;
  EvOptions ev;
  std::string irradiance;
  double pf = 0.95;
};

void write_sweep(const Common& c, const Context& ctx, const RobustnessArgs& a, const StudyInputs& in) {
  const Network net(ctx.feeder);
  const std::string v = focus_variables(net, a.location).first;
  auto f = open_out(c, "penetration_sweep.csv");
  f << units_header(ctx.feeder, net) << "\npercent,run,timestep,p_level,variable,actual,estimate,error\n";
  for (double pct : a.sweep) {
    const Feeder mutated = pv_penetration(ctx.feeder, pct, in.seed, a.location);
    TrainingConfig cfg = in.training;
    cfg.diagnostics = false;
    const TrainingResult res = train(mutated, ctx.scenarios, cfg, in.clusters);
    const auto b = std::make_shared<const CoeffBundle>(res.bundle(a.location));
    const std::size_t vi = b->find(v);
    for (const TimeSeriesRun& r : run_all(mutated, b, in.irradiance, in.schedules, in.run))
      for (std::size_t i = 0; i < r.rows(); ++i)
        f << pct << ',' << r.id << ',' << r.timesteps[i] << ',' << r.p_level_pct[i] << ',' << v << ','
          << r.actual[i][vi] << ',' << r.poly[i][vi] << ',' << r.poly[i][vi] - r.actual[i][vi] << "\n";
  }
}

int cmd_robustness(const Common& c, const RobustnessArgs& a) {
  if (a.mutation != "pv" && a.mutation != "ev") throw std::invalid_argument("--mutation must be pv or ev");
  const Context ctx = load_context(c);
  const auto clusters = clusters_for(c, ctx);
  StudyInputs in;
  in.scenarios = &ctx.scenarios;
  in.clusters = &clusters;
  in.training = training_config(c);
  in.training.locations = {a.location};
  in.training.diagnostics = false;
  in.schedules = representative_schedules(ctx, clusters, a.runs);
  in.irradiance = irradiance_for(a.irradiance, ctx);
  in.run.pf = a.pf;
  in.seed = c.seed;

  const Network net(ctx.feeder);
  const auto [v, i] = focus_variables(net, a.location);
  const Feeder trained_on = pv_penetration(ctx.feeder, a.trained_percent, c.seed, a.location);
  const auto bundle =
      std::make_shared<const CoeffBundle>(train(trained_on, ctx.scenarios, in.training, &clusters).bundle(a.location));

  RobustnessOutcome o = a.mutation == "pv" ? pv_penetration_study(ctx.feeder, bundle, a.percent, in)
                                           : ev_study(trained_on, bundle, a.ev, in);
  const std::string units = units_header(ctx.feeder, net);
  auto of = open_out(c, "robustness_outdated_runs.csv");
  of << units << "\n";
  write_run_csv(of, o.outdated);
  auto cf = open_out(c, "robustness_control_runs.csv");
  cf << units << "\n";
  write_run_csv(cf, o.control);
  auto mf = open_out(c, "robustness_metrics.csv");
  mf << units << "\n# outdated\n";
  write_metrics_csv(mf, o.outdated_metrics);
  mf << "# control\n";
  write_metrics_csv(mf, o.control_metrics);

  std::ostringstream s;
  if (a.mutation == "pv") {
    s << "bundle trained at " << a.trained_percent << "% PV penetration, evaluated at " << a.percent << "%\n"
      << "  max |outdated - updated| estimate of " << v << ": " << fmt(max_estimate_deviation(o.outdated, o.control, v))
      << " pu; of " << i << ": " << fmt(max_estimate_deviation(o.outdated, o.control, i)) << " pu\n"
      << "  over all voltages " << fmt(o.max_voltage_deviation) << " pu, all currents "
      << fmt(o.max_current_deviation) << " pu\n";
  } else {
    const auto from = static_cast<std::size_t>(a.ev.window_start_h * 60.0 / c.timestep_min);
    s << "EVs on " << fmt(100.0 * a.ev.fraction) << "% of customers at " << a.trained_percent
      << "% PV penetration, bundle unchanged\n"
      << "  max underestimation of " << i << " from the charging window on: "
      << fmt(max_underestimation(o.outdated, i, from)) << " pu (without EVs " << fmt(max_underestimation(o.control, i, from))
      << " pu)\n  mean |error| of " << v << ": " << fmt(o.outdated_metrics.at(v).mean_abs) << " pu (without EVs "
      << fmt(o.control_metrics.at(v).mean_abs) << " pu)\n";
  }
  if (!a.sweep.empty()) {
    write_sweep(c, ctx, a, in);
    s << "penetration sweep written for " << a.sweep.size() << " levels\n";
  }
  finish_summary(c, s.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fitted-polynomial observability for unbalanced LV feeders"};
  app.fallthrough();
  app.require_subcommand(1);
  Common c;
  app.add_option("--feeder", c.feeder, "Feeder file")->capture_default_str();
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
  app.add_option("--k", c.k, "Representative scenarios per timestep")->capture_default_str();
  app.add_option("--samples", c.samples, "Monte Carlo demand scenarios")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--grid-steps", c.grid_steps, "Points per setpoint axis")->capture_default_str()->check(CLI::Range(2, 1000));
  app.add_option("--timestep-min", c.timestep_min, "Timestep length, minutes")->capture_default_str();
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_option("--pool", c.pool, "Profile pool CSV (default: synthetic pool)");
  app.add_option("--pool-profiles", c.pool_profiles, "Synthetic pool size")->capture_default_str();
  app.add_option("--algorithm", c.algorithm, "ward, average or kmeanspp")->capture_default_str();
  app.add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();

  std::size_t timestep = 0, scenario = 0, runs = 50;
  double p_level = 0.0, pf = 1.0, v = 1.0, noise = 2.5;
  std::string location = "h21", bundle, irradiance, estimate_out;
  bool degree3 = false, all_locations = false;
  std::vector<std::size_t> ks{2, 10, 50, 100, 200};

  auto* pf_cmd = app.add_subcommand("pf", "Solve one power flow");
  pf_cmd->add_option("--timestep", timestep)->capture_default_str();
  pf_cmd->add_option("--scenario", scenario, "Scenario index")->capture_default_str();
  pf_cmd->add_option("--p-level", p_level, "Generation level, percent")->capture_default_str();
  pf_cmd->add_option("--pf", pf, "DG power factor (inductive)")->capture_default_str();

  auto* sample_cmd = app.add_subcommand("sample", "Draw Monte Carlo demand scenarios");

  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster scenarios per timestep and run the elbow analysis");
  double hour = 18.0;
  cluster_cmd->add_option("--hour", hour, "Time of day of the elbow analysis")->capture_default_str();
  cluster_cmd->add_option("--ks", ks, "K values of the elbow analysis")->delimiter(',')->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Fit coefficient bundles");
  train_cmd->add_option("--location", location, "DG customer, or all")->capture_default_str();
  train_cmd->add_flag("--degree3", degree3, "Also report degree-3 surface R2");
  train_cmd->add_option("--hour", hour, "Time of day of the surface and coefficient plots")->capture_default_str();

  auto* est_cmd = app.add_subcommand("estimate", "Evaluate a bundle for one local measurement");
  est_cmd->add_option("--bundle", bundle)->required();
  est_cmd->add_option("--timestep", timestep)->required();
  est_cmd->add_option("--v", v, "Local voltage, pu")->required();
  est_cmd->add_option("--p-level", p_level, "Generation level, percent")->required();
  est_cmd->add_option("--pf", pf, "DG power factor (inductive)")->required();
  est_cmd->add_option("--output", estimate_out, "CSV file (default: stdout)");

  double run_pf = 0.95;
  auto* val_cmd = app.add_subcommand("validate", "Time-series validation, error metrics and transducer noise");
  val_cmd->add_option("--bundle", bundle, "Bundle file (default: train in-process)");
  val_cmd->add_option("--location", location)->capture_default_str();
  val_cmd->add_option("--runs", runs, "Representative scenarios to run")->capture_default_str();
  val_cmd->add_option("--noise", noise, "99.7th percentile of the local voltage error, percent")->capture_default_str();
  val_cmd->add_option("--irradiance", irradiance, "timestep,p_level CSV (default: clear sky)");
  val_cmd->add_option("--pf", run_pf)->capture_default_str();
  val_cmd->add_flag("--all-locations", all_locations, "Also train and score every DG location");

  std::size_t dse_runs = 5;
  auto* dse_cmd = app.add_subcommand("benchmark-dse", "Compare the polynomials with state estimation");
  dse_cmd->add_option("--bundle", bundle, "Bundle file (default: train in-process)");
  dse_cmd->add_option("--location", location)->capture_default_str();
  dse_cmd->add_option("--runs", dse_runs, "Days to simulate")->capture_default_str();
  dse_cmd->add_option("--irradiance", irradiance);
  dse_cmd->add_option("--pf", run_pf)->capture_default_str();

  RobustnessArgs ra;
  auto* rob_cmd = app.add_subcommand("robustness", "Outdated bundles under PV or EV changes");
  rob_cmd->add_option("--mutation", ra.mutation, "pv or ev")->capture_default_str();
  rob_cmd->add_option("--location", ra.location)->capture_default_str();
  rob_cmd->add_option("--trained-percent", ra.trained_percent, "PV penetration the bundle is trained at")
      ->capture_default_str();
  rob_cmd->add_option("--percent", ra.percent, "PV penetration evaluated (pv)")->capture_default_str();
  rob_cmd->add_option("--runs", ra.runs)->capture_default_str();
  rob_cmd->add_option("--sweep", ra.sweep, "Also train and run at these penetrations")->delimiter(',');
  rob_cmd->add_option("--ev-fraction", ra.ev.fraction)->capture_default_str();
  rob_cmd->add_option("--ev-kw", ra.ev.kw)->capture_default_str();
  rob_cmd->add_option("--ev-window-start", ra.ev.window_start_h, "hour")->capture_default_str();
  rob_cmd->add_option("--ev-window-end", ra.ev.window_end_h, "hour")->capture_default_str();
  rob_cmd->add_option("--ev-duration", ra.ev.duration_h, "hours")->capture_default_str();
  rob_cmd->add_option("--irradiance", ra.irradiance);
  rob_cmd->add_option("--pf", ra.pf)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c.timestep_min <= 0 || 1440 % c.timestep_min != 0)
      throw std::invalid_argument("--timestep-min must divide a day");
    if (c.k > c.samples) throw std::invalid_argument("--k cannot exceed --samples");
    if (*pf_cmd) return cmd_pf(c, timestep, scenario, p_level, pf);
    if (*sample_cmd) return cmd_sample(c);
    const auto hour_step = static_cast<std::size_t>(hour * 60.0 / c.timestep_min);
    if (*cluster_cmd) return cmd_cluster(c, hour_step, ks);
    if (*train_cmd) return cmd_train(c, location, degree3, hour_step);
    if (*est_cmd) return cmd_estimate(bundle, timestep, v, p_level, pf, estimate_out);
    if (*val_cmd) return cmd_validate(c, bundle, location, runs, noise, irradiance, run_pf, all_locations);
    if (*dse_cmd) return cmd_benchmark_dse(c, bundle, location, dse_runs, irradiance, run_pf);
    if (*rob_cmd) return cmd_robustness(c, ra);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
