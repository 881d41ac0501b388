#include "lvpoly/trainer.hpp"

#include "lvpoly/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace lvpoly {

double tau_from_pf(double pf) {
  if (!(pf > 0.0 && pf <= 1.0)) throw std::invalid_argument("power factor must be in (0, 1]");
  return std::tan(std::acos(pf));
}

namespace {

double grid_point(double lo, double hi, std::size_t steps, std::size_t i) {
  if (steps <= 1) return lo;
  if (i + 1 == steps) return hi;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double SetpointGrid::p_level(std::size_t i) const { return grid_point(p_min, p_max, p_steps, i); }
double SetpointGrid::pf(std::size_t j) const { return grid_point(pf_min, pf_max, pf_steps, j); }

void SetpointGrid::validate() const {
  if (p_steps == 0 || pf_steps == 0) throw std::invalid_argument("setpoint grid needs at least one point per axis");
  if (!(p_min >= 0.0 && p_min <= p_max && p_max <= 100.0))
    throw std::invalid_argument("P_level bounds must satisfy 0 <= min <= max <= 100");
  if (!(pf_min >= 0.85 && pf_min <= pf_max && pf_max <= 1.0))
    throw std::invalid_argument("PF bounds must satisfy 0.85 <= min <= max <= 1");
}

std::vector<double> SweepResult::column(std::size_t component) const {
  std::vector<double> out(samples());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = value(n, component);
  return out;
}

SweepSample SweepResult::sample(std::size_t n) const {
  return {p[n] * 100.0, pf[n], tau[n], std::span<const double>(values.data() + n * width, width)};
}

SweepResult sweep(const PowerFlowSolver& solver, const TargetExtractor& extractor, const DemandScenario& scenario,
                  std::size_t timestep, const SetpointGrid& grid, const SolverOptions& options) {
  grid.validate();
  const Network& net = solver.network();
  const Feeder& feeder = net.feeder();
  const std::size_t h_count = feeder.customers.size();
  if (scenario.profile.size() != h_count) throw std::invalid_argument("scenario does not cover every customer");
  InjectionSet inj(h_count);
  scenario.apply(inj, timestep);

  SweepResult r;
  r.width = extractor.width();
  r.values.resize(grid.size() * r.width);
  r.p.reserve(grid.size());
  r.tau.reserve(grid.size());
  r.pf.reserve(grid.size());
  for (std::size_t i = 0; i < grid.p_steps; ++i) {
    const double p = grid.p_level(i) / 100.0;
    for (std::size_t j = 0; j < grid.pf_steps; ++j) {
      const double pf = grid.pf(j);
      for (std::size_t h = 0; h < h_count; ++h) {
        if (!feeder.customers[h].dg) continue;
        inj.dg_kw[h] = p * feeder.customers[h].dg->rating_kw;
        inj.dg_kvar[h] = dg_reactive_kvar(inj.dg_kw[h], pf);
      }
      PowerFlowSolution sol;
      try {
        sol = solver.solve(inj, options);
      } catch (const ConvergenceError& e) {
        throw ConvergenceError("sweep at P_level=" + fmt(p * 100.0) + "% PF=" + fmt(pf) + " (scenario " +
                                   std::to_string(scenario.id) + ", timestep " + std::to_string(timestep) +
                                   "): " + e.what(),
                               e.iterations(), e.residual());
      }
      const std::size_t n = r.p.size();
      extractor.extract(sol, std::span<double>(r.values.data() + n * r.width, r.width));
      r.p.push_back(p);
      r.pf.push_back(pf);
      r.tau.push_back(tau_from_pf(pf));
      if (i == 0 && j == 0) {
        r.reference_voltage.resize(h_count);
        for (std::size_t h = 0; h < h_count; ++h) r.reference_voltage[h] = customer_voltage(net, sol, h);
      }
    }
  }
  return r;
}

PolySurface fit_surface(const SweepResult& samples, std::size_t component, const std::string& name) {
  const SurfaceDesign design(samples.p, samples.tau, 2);
  const SurfaceFit fit = design.fit(samples.column(component));
  PolySurface s;
  s.variable = name;
  std::copy(fit.coeffs.begin(), fit.coeffs.end(), s.b.begin());
  s.r2 = fit.r2;
  return s;
}

double CurrentMagnitudeModel::operator()(double p, double tau) const {
  return std::hypot(evaluate_quadratic(re, p, tau), evaluate_quadratic(im, p, tau));
}

CurrentMagnitudeModel fit_current_magnitude(const PolySurface& re, const PolySurface& im) { return {re.b, im.b}; }

double magnitude_r2(const CurrentMagnitudeModel& model, const SweepResult& samples, std::size_t re_component,
                    std::size_t im_component) {
  std::vector<double> actual(samples.samples()), fitted(samples.samples());
  for (std::size_t n = 0; n < actual.size(); ++n) {
    actual[n] = std::hypot(samples.value(n, re_component), samples.value(n, im_component));
    fitted[n] = model(samples.p[n], samples.tau[n]);
  }
  return r_squared(actual, fitted);
}

CoeffModels fit_coeff_models(const std::vector<QuadCoeffs>& surfaces, const std::vector<double>& reference_voltages,
                             const std::vector<double>& omegas) {
  if (surfaces.size() != reference_voltages.size() || surfaces.size() != omegas.size())
    throw std::invalid_argument("coefficient models: size mismatch");
  CoeffModels out;
  std::vector<double> y(surfaces.size());
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < surfaces.size(); ++k) y[k] = surfaces[k][i];
    const LineFit line = fit_weighted_line(reference_voltages, y, omegas);
    out[i] = {line.slope, line.intercept, line.r2};
  }
  return out;
}

// ---------------------------------------------------------------- bundle

CoeffBundle::CoeffBundle(BundleHeader h, std::vector<TrackedVariable> variables)
    : header(std::move(h)), variables_(std::move(variables)) {
  for (const auto& v : variables_) {
    offsets_.push_back(width_);
    width_ += v.components();
  }
}

std::size_t CoeffBundle::find(const std::string& name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].name() == name) return i;
  throw std::out_of_range("variable '" + name + "' is not in the bundle");
}

std::size_t CoeffBundle::local_variable() const {
  for (std::size_t i = 0; i < variables_.size(); ++i)
    if (variables_[i].kind == VariableKind::CustomerVoltage && variables_[i].customer == header.location) return i;
  throw std::invalid_argument("bundle lacks the local voltage v:" + header.location);
}

const std::vector<CoeffModels>& CoeffBundle::at(std::size_t timestep) const {
  const auto it = timesteps_.find(timestep);
  if (it == timesteps_.end()) throw std::out_of_range("timestep " + std::to_string(timestep) + " is not in the bundle");
  return it->second;
}

void CoeffBundle::set(std::size_t timestep, std::vector<CoeffModels> models) {
  if (models.size() != width_) throw std::invalid_argument("coefficient models do not match the variable layout");
  timesteps_[timestep] = std::move(models);
}

void CoeffBundle::validate() const {
  local_variable();
  for (const auto& [t, models] : timesteps_) {
    if (models.size() != width_) throw std::invalid_argument("timestep " + std::to_string(t) + " is incomplete");
    for (const auto& m : models)
      for (const auto& pair : m)
        if (!std::isfinite(pair.a1) || !std::isfinite(pair.a2) || !std::isfinite(pair.r2))
          throw std::invalid_argument("non-finite coefficient at timestep " + std::to_string(t));
  }
}

void write_bundle(std::ostream& out, const CoeffBundle& b) {
  b.validate();
  const BundleHeader& h = b.header;
  out << "lvpoly-bundle 1\n";
  out << "feeder_hash " << h.feeder_hash << '\n';
  out << "location " << h.location << ' ' << phase_letter(h.phase) << '\n';
  out << "grid " << h.grid.p_steps << ' ' << fmt(h.grid.p_min) << ' ' << fmt(h.grid.p_max) << ' ' << h.grid.pf_steps
      << ' ' << fmt(h.grid.pf_min) << ' ' << fmt(h.grid.pf_max) << '\n';
  out << "clusters " << h.k << ' ' << h.algorithm << ' ' << h.samples << ' ' << h.seed << '\n';
  out << "timesteps " << h.resolution_min << ' ' << h.steps << '\n';
  out << "variables";
  for (const auto& v : b.variables()) out << ' ' << v.name();
  out << "\nrecords\ntimestep,variable,i,a1,a2,r2\n";
  for (const auto& [t, models] : b.timesteps()) {
    for (std::size_t v = 0; v < b.variables().size(); ++v) {
      const TrackedVariable& var = b.variables()[v];
      for (std::size_t c = 0; c < var.components(); ++c) {
        const CoeffModels& m = models[b.offset(v) + c];
        for (std::size_t i = 0; i < 6; ++i)
          out << t << ',' << var.component_name(c) << ',' << i + 1 << ',' << fmt(m[i].a1) << ',' << fmt(m[i].a2) << ','
              << fmt(m[i].r2) << '\n';
      }
    }
  }
}

namespace {

[[noreturn]] void bundle_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("bundle line " + std::to_string(line) + ": " + what);
}

}  // namespace

CoeffBundle read_bundle(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::istringstream {
    if (!std::getline(in, line)) bundle_error(lineno + 1, "unexpected end of file");
    ++lineno;
    return std::istringstream(line);
  };
  auto expect = [&](std::istringstream& ss, const char* key) {
    std::string k;
    if (!(ss >> k) || k != key) bundle_error(lineno, std::string("expected '") + key + "'");
  };

  BundleHeader h;
  {
    auto ss = next();
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != "lvpoly-bundle" || version != 1) bundle_error(lineno, "not a bundle");
  }
  {
    auto ss = next();
    expect(ss, "feeder_hash");
    if (!(ss >> h.feeder_hash)) bundle_error(lineno, "missing hash");
  }
  {
    auto ss = next();
    expect(ss, "location");
    std::string ph;
    if (!(ss >> h.location >> ph) || ph.size() != 1) bundle_error(lineno, "bad location");
    h.phase = phase_from_letter(ph[0]);
  }
  {
    auto ss = next();
    expect(ss, "grid");
    if (!(ss >> h.grid.p_steps >> h.grid.p_min >> h.grid.p_max >> h.grid.pf_steps >> h.grid.pf_min >> h.grid.pf_max))
      bundle_error(lineno, "bad grid");
  }
  {
    auto ss = next();
    expect(ss, "clusters");
    if (!(ss >> h.k >> h.algorithm >> h.samples >> h.seed)) bundle_error(lineno, "bad clusters line");
  }
  {
    auto ss = next();
    expect(ss, "timesteps");
    if (!(ss >> h.resolution_min >> h.steps)) bundle_error(lineno, "bad timesteps line");
  }
  std::vector<TrackedVariable> vars;
  {
    auto ss = next();
    expect(ss, "variables");
    std::string name;
    while (ss >> name) vars.push_back(parse_variable(name));
  }
  CoeffBundle b(h, vars);
  std::unordered_map<std::string, std::size_t> component;
  for (std::size_t v = 0; v < vars.size(); ++v)
    for (std::size_t c = 0; c < vars[v].components(); ++c) component[vars[v].component_name(c)] = b.offset(v) + c;

  next();
  if (line != "records") bundle_error(lineno, "expected 'records'");
  next();
  if (line != "timestep,variable,i,a1,a2,r2") bundle_error(lineno, "bad record header");

  std::map<std::size_t, std::vector<CoeffModels>> staged;
  std::map<std::size_t, std::vector<std::array<bool, 6>>> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) bundle_error(lineno, "expected 6 fields");
    try {
      const std::size_t t = std::stoul(f[0]);
      const auto it = component.find(f[1]);
      if (it == component.end()) bundle_error(lineno, "unknown variable '" + f[1] + "'");
      const std::size_t i = std::stoul(f[2]);
      if (i < 1 || i > 6) bundle_error(lineno, "coefficient index out of range");
      auto& models = staged[t];
      auto& flags = seen[t];
      if (models.empty()) {
        models.resize(b.width());
        flags.assign(b.width(), {});
      }
      models[it->second][i - 1] = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5])};
      flags[it->second][i - 1] = true;
    } catch (const std::logic_error&) {
      bundle_error(lineno, "malformed number");
    }
  }
  for (auto& [t, models] : staged) {
    for (const auto& f : seen[t])
      for (bool ok : f)
        if (!ok) throw std::runtime_error("bundle timestep " + std::to_string(t) + " is incomplete");
    b.set(t, std::move(models));
  }
  b.validate();
  return b;
}

void save_bundle(const std::string& path, const CoeffBundle& bundle) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_bundle(out, bundle);
}

CoeffBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_bundle(in);
}

// ---------------------------------------------------------------- training

void FitStats::add(double r2) {
  min = count ? std::min(min, r2) : r2;
  sum += r2;
  ++count;
}

const CoeffBundle& TrainingResult::bundle(const std::string& location) const {
  for (const auto& b : bundles)
    if (b.header.location == location) return b;
  throw std::out_of_range("no bundle for " + location);
}

std::vector<TimestepClusters> reduce_scenarios(const PowerFlowSolver& solver,
                                               const std::vector<DemandScenario>& scenarios,
                                               const std::vector<std::size_t>& timesteps, std::size_t k,
                                               ClusterAlgorithm algorithm, std::uint64_t seed,
                                               const KMeansOptions& kmeans, const SolverOptions& options,
                                               unsigned threads) {
  std::vector<TimestepClusters> out(timesteps.size());
  parallel_for(
      timesteps.size(),
      [&](std::size_t i) {
        const std::size_t t = timesteps[i];
        const NormalizedPatternSet norm = normalize(build_patterns(solver, scenarios, t, options));
        out[i].timestep = t;
        out[i].result = cluster(norm, k, algorithm, substream_seed(seed, t), kmeans);
        out[i].spc = spc_index(norm, out[i].result);
      },
      threads);
  return out;
}

namespace {

// A fitted series: one tracked component, or the composed magnitude of a current.
struct Series {
  std::string name;
  std::string cls;
  std::size_t re = 0, im = 0;
  bool magnitude = false;
};

std::vector<double> evaluate_fit(const SurfaceFit& fit, const SweepResult& s, int degree) {
  std::vector<double> out(s.samples());
  double row[10];
  const std::size_t terms = surface_terms(degree);
  for (std::size_t n = 0; n < out.size(); ++n) {
    surface_basis(s.p[n], s.tau[n], degree, std::span<double>(row, terms));
    double v = 0.0;
    for (std::size_t j = 0; j < terms; ++j) v += fit.coeffs[j] * row[j];
    out[n] = v;
  }
  return out;
}

struct ClusterFit {
  std::vector<QuadCoeffs> coeffs;  // per component
  std::vector<double> r2;          // per component, degree 2
  std::vector<std::array<double, 3>> series_r2;  // per series, per degree
  std::vector<double> reference_voltage;
};

}  // namespace

TrainingResult train(const Feeder& feeder, const std::vector<DemandScenario>& scenarios, const TrainingConfig& config,
                     const std::vector<TimestepClusters>* clusters) {
  const auto start = std::chrono::steady_clock::now();
  if (scenarios.empty()) throw std::invalid_argument("training needs at least one demand scenario");
  config.grid.validate();
  const PowerFlowSolver solver(feeder);

  std::vector<std::string> locations = config.locations;
  if (locations.empty())
    for (const auto& c : feeder.customers)
      if (c.dg) locations.push_back(c.id);
  if (locations.empty()) throw std::invalid_argument("no DG unit to train");
  std::vector<TrackedVariable> variables =
      config.variables.empty() ? default_tracked_variables(feeder) : config.variables;
  std::vector<std::size_t> location_index;
  for (const auto& loc : locations) {
    const std::size_t h = feeder.require_customer(loc);
    if (!feeder.customers[h].dg) throw std::invalid_argument("customer " + loc + " has no DG unit");
    location_index.push_back(h);
    const TrackedVariable local{VariableKind::CustomerVoltage, loc, Phase::A};
    if (std::find(variables.begin(), variables.end(), local) == variables.end()) variables.push_back(local);
  }
  const TargetExtractor extractor(solver.network(), variables);

  const std::size_t steps = scenarios.front().steps();
  std::vector<std::size_t> timesteps = config.timesteps;
  if (timesteps.empty())
    for (std::size_t t = 0; t < steps; ++t) timesteps.push_back(t);
  for (std::size_t t : timesteps)
    if (t >= steps) throw std::invalid_argument("timestep " + std::to_string(t) + " is beyond the demand profiles");

  TrainingResult result;
  if (clusters) {
    for (std::size_t t : timesteps) {
      const auto it = std::find_if(clusters->begin(), clusters->end(),
                                   [t](const TimestepClusters& c) { return c.timestep == t; });
      if (it == clusters->end()) throw std::invalid_argument("no clusters for timestep " + std::to_string(t));
      if (it->result.total() != scenarios.size())
        throw std::invalid_argument("clusters do not match the scenario list");
      result.clusters.push_back(*it);
    }
  } else {
    result.clusters = reduce_scenarios(solver, scenarios, timesteps, config.k, config.algorithm, config.seed,
                                       config.kmeans, config.solver, config.threads);
  }

  // Regressors depend only on the grid.
  std::vector<double> grid_p, grid_tau;
  for (std::size_t i = 0; i < config.grid.p_steps; ++i)
    for (std::size_t j = 0; j < config.grid.pf_steps; ++j) {
      grid_p.push_back(config.grid.p_level(i) / 100.0);
      grid_tau.push_back(tau_from_pf(config.grid.pf(j)));
    }
  const SurfaceDesign design2(grid_p, grid_tau, 2);
  std::optional<SurfaceDesign> design1, design3;
  if (config.diagnostics) design1.emplace(grid_p, grid_tau, 1);
  if (config.degree3) design3.emplace(grid_p, grid_tau, 3);

  std::vector<Series> series;
  for (std::size_t v = 0; v < variables.size(); ++v) {
    const auto& var = variables[v];
    const std::string cls = variable_class(var.kind);
    for (std::size_t c = 0; c < var.components(); ++c)
      series.push_back({var.component_name(c), cls, extractor.offset(v) + c, 0, false});
    if (var.kind == VariableKind::HeadCurrent)
      series.push_back({var.name(), cls, extractor.offset(v), extractor.offset(v) + 1, true});
  }
  std::array<std::vector<FitStats>, 3> stats;
  for (auto& s : stats) s.resize(series.size());

  for (std::size_t li = 0; li < locations.size(); ++li) {
    BundleHeader h;
    h.feeder_hash = hash_hex(feeder_hash(feeder));
    h.location = locations[li];
    h.phase = feeder.customers[location_index[li]].phase;
    h.grid = config.grid;
    h.k = result.clusters.front().result.k();
    h.algorithm = to_string(result.clusters.front().result.algorithm);
    h.samples = scenarios.size();
    h.seed = config.seed;
    h.resolution_min = scenarios.front().resolution_min();
    h.steps = steps;
    result.bundles.emplace_back(h, variables);
  }

  const std::size_t width = extractor.width();
  for (const TimestepClusters& tc : result.clusters) {
    const std::size_t t = tc.timestep;
    const ClusterResult& cr = tc.result;
    const std::size_t k_count = cr.k();
    std::vector<ClusterFit> fits(k_count);
    parallel_for(
        k_count,
        [&](std::size_t k) {
          const SweepResult s = sweep(solver, extractor, scenarios[cr.representatives[k]], t, config.grid, config.solver);
          ClusterFit& f = fits[k];
          f.coeffs.resize(width);
          f.r2.resize(width);
          f.reference_voltage = s.reference_voltage;
          std::array<std::vector<SurfaceFit>, 3> by_degree;
          for (std::size_t c = 0; c < width; ++c) {
            const std::vector<double> y = s.column(c);
            by_degree[1].push_back(design2.fit(y));
            if (design1) by_degree[0].push_back(design1->fit(y));
            if (design3) by_degree[2].push_back(design3->fit(y));
            std::copy(by_degree[1][c].coeffs.begin(), by_degree[1][c].coeffs.end(), f.coeffs[c].begin());
            f.r2[c] = by_degree[1][c].r2;
          }
          f.series_r2.resize(series.size());
          for (std::size_t si = 0; si < series.size(); ++si) {
            const Series& sr = series[si];
            for (int d = 1; d <= 3; ++d) {
              const auto& fitted = by_degree[static_cast<std::size_t>(d - 1)];
              if (fitted.empty()) continue;
              if (!sr.magnitude) {
                f.series_r2[si][static_cast<std::size_t>(d - 1)] = fitted[sr.re].r2;
                continue;
              }
              const auto re = evaluate_fit(fitted[sr.re], s, d), im = evaluate_fit(fitted[sr.im], s, d);
              std::vector<double> actual(s.samples()), model(s.samples());
              for (std::size_t n = 0; n < actual.size(); ++n) {
                actual[n] = std::hypot(s.value(n, sr.re), s.value(n, sr.im));
                model[n] = std::hypot(re[n], im[n]);
              }
              f.series_r2[si][static_cast<std::size_t>(d - 1)] = r_squared(actual, model);
            }
          }
        },
        config.threads);

    for (const ClusterFit& f : fits)
      for (std::size_t si = 0; si < series.size(); ++si) {
        if (design1) stats[0][si].add(f.series_r2[si][0]);
        stats[1][si].add(f.series_r2[si][1]);
        if (design3) stats[2][si].add(f.series_r2[si][2]);
      }

    const std::vector<double> omegas = cr.omegas();
    for (std::size_t li = 0; li < locations.size(); ++li) {
      std::vector<double> refs(k_count);
      for (std::size_t k = 0; k < k_count; ++k) refs[k] = fits[k].reference_voltage[location_index[li]];
      std::vector<CoeffModels> models(width);
      std::vector<QuadCoeffs> b(k_count);
      for (std::size_t c = 0; c < width; ++c) {
        for (std::size_t k = 0; k < k_count; ++k) b[k] = fits[k].coeffs[c];
        try {
          models[c] = fit_coeff_models(b, refs, omegas);
        } catch (const std::invalid_argument& e) {
          throw std::invalid_argument("timestep " + std::to_string(t) + ", location " + locations[li] + ": " +
                                      e.what());
        }
      }
      result.bundles[li].set(t, std::move(models));
    }

    if (config.keep_surfaces ||
        std::find(config.keep_timesteps.begin(), config.keep_timesteps.end(), t) != config.keep_timesteps.end()) {
      TimestepSurfaces ts;
      ts.timestep = t;
      ts.representatives = cr.representatives;
      ts.omegas = omegas;
      for (auto& f : fits) {
        ts.reference_voltage.push_back(std::move(f.reference_voltage));
        ts.coeffs.push_back(std::move(f.coeffs));
        ts.r2.push_back(std::move(f.r2));
      }
      result.surfaces.push_back(std::move(ts));
    }
  }

  for (int d = 1; d <= 3; ++d) {
    if ((d == 1 && !design1) || (d == 3 && !design3)) continue;
    for (std::size_t si = 0; si < series.size(); ++si)
      result.surface_r2.push_back({series[si].name, series[si].cls, d, stats[static_cast<std::size_t>(d - 1)][si]});
  }
  for (const auto& b : result.bundles) b.validate();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_surface_report(std::ostream& out, const TrainingResult& result) {
  out << "variable,class,degree,min_r2,mean_r2,fits\n";
  for (const auto& r : result.surface_r2)
    out << r.variable << ',' << r.cls << ',' << r.degree << ',' << fmt(r.stats.min) << ',' << fmt(r.stats.mean())
        << ',' << r.stats.count << '\n';
}

void write_coefficient_report(std::ostream& out, const CoeffBundle& bundle) {
  out << "variable,i,min_r2,mean_r2\n";
  for (std::size_t v = 0; v < bundle.variables().size(); ++v) {
    const auto& var = bundle.variables()[v];
    for (std::size_t c = 0; c < var.components(); ++c)
      for (std::size_t i = 0; i < 6; ++i) {
        FitStats s;
        for (const auto& [t, models] : bundle.timesteps()) s.add(models[bundle.offset(v) + c][i].r2);
        out << var.component_name(c) << ',' << i + 1 << ',' << fmt(s.min) << ',' << fmt(s.mean()) << '\n';
      }
  }
}

void write_coefficient_scatter(std::ostream& out, const TrainingResult& result, const CoeffBundle& bundle,
                               const Feeder& feeder) {
  const std::size_t h = feeder.require_customer(bundle.header.location);
  out << "timestep,variable,i,scenario,v_ref,omega,b,b_hat\n";
  for (const auto& ts : result.surfaces) {
    if (!bundle.has(ts.timestep)) continue;
    const auto& models = bundle.at(ts.timestep);
    for (std::size_t v = 0; v < bundle.variables().size(); ++v) {
      const auto& var = bundle.variables()[v];
      for (std::size_t c = 0; c < var.components(); ++c) {
        const std::size_t comp = bundle.offset(v) + c;
        for (std::size_t i = 0; i < 6; ++i)
          for (std::size_t k = 0; k < ts.coeffs.size(); ++k) {
            const double vr = ts.reference_voltage[k][h];
            out << ts.timestep << ',' << var.component_name(c) << ',' << i + 1 << ',' << ts.representatives[k] << ','
                << fmt(vr) << ',' << fmt(ts.omegas[k]) << ',' << fmt(ts.coeffs[k][comp][i]) << ','
                << fmt(models[comp][i].a1 * vr + models[comp][i].a2) << '\n';
          }
      }
    }
  }
}

void write_surface_samples(std::ostream& out, const SweepResult& samples, const TargetExtractor& extractor) {
  const SurfaceDesign design(samples.p, samples.tau, 2);
  out << "p_level,pf,tau,variable,actual,fitted\n";
  for (std::size_t v = 0; v < extractor.variables().size(); ++v) {
    const auto& var = extractor.variables()[v];
    for (std::size_t c = 0; c < var.components(); ++c) {
      const std::size_t comp = extractor.offset(v) + c;
      const SurfaceFit fit = design.fit(samples.column(comp));
      const auto fitted = evaluate_fit(fit, samples, 2);
      for (std::size_t n = 0; n < samples.samples(); ++n)
        out << fmt(samples.p[n] * 100.0) << ',' << fmt(samples.pf[n]) << ',' << fmt(samples.tau[n]) << ','
            << var.component_name(c) << ',' << fmt(samples.value(n, comp)) << ',' << fmt(fitted[n]) << '\n';
    }
  }
}

}  // namespace lvpoly
