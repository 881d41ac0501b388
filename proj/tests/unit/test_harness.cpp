#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace lvpoly;

namespace {

const Feeder& desk = fixture::desk();

DemandSchedule representative_schedule(std::size_t k) {
  return DemandSchedule::representative(fixture::scenarios(), fixture::training().clusters, k);
}

const TimeSeriesRun& baseline_run() {
  static const TimeSeriesRun r = run_timeseries(desk, fixture::bundle(), clear_sky_profile(), representative_schedule(3));
  return r;
}

// Identity local voltage and one constant variable at every timestep.
std::shared_ptr<const CoeffBundle> identity_bundle(std::size_t steps) {
  BundleHeader h;
  h.location = "h21";
  h.phase = Phase::C;
  auto b = std::make_shared<CoeffBundle>(h, std::vector<TrackedVariable>{parse_variable("v:h21"), parse_variable("loss")});
  CoeffModels local{}, loss{};
  local[0] = {1.0, 0.0, 1.0};
  loss[0] = {0.0, 0.02, 1.0};
  for (std::size_t t = 0; t < steps; ++t) b->set(t, {local, loss});
  return b;
}

TimeSeriesRun synthetic_run(const std::vector<double>& actual, const std::vector<double>& poly) {
  TimeSeriesRun r;
  r.bundle = identity_bundle(actual.size());
  for (std::size_t t = 0; t < actual.size(); ++t) {
    r.timesteps.push_back(t);
    r.p_level_pct.push_back(0.0);
    r.v_local.push_back(1.0);
    r.actual.push_back({1.0, actual[t]});
    r.poly.push_back({1.0, poly[t]});
  }
  return r;
}

// Sum of Kron-reduced self resistance over the branches between a bus and the source.
double path_resistance(const std::string& bus, Phase phase) {
  double r = 0.0;
  std::string at = bus;
  while (at != desk.source.bus) {
    const auto it = std::find_if(desk.branches.begin(), desk.branches.end(), [&](const Branch& b) { return b.to_bus == at; });
    REQUIRE(it != desk.branches.end());
    const auto p = static_cast<Eigen::Index>(index_of(phase));
    r += it->z_ohm_per_km(p, p).real() * it->length_m / 1000.0;
    at = it->from_bus;
  }
  return r;
}

std::set<std::string> dg_owners(const Feeder& f) {
  std::set<std::string> s;
  for (const auto& c : f.customers)
    if (c.dg) s.insert(c.id);
  return s;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("percentile by rank interpolation") {
  CHECK(percentile({5, 1, 4, 2, 3}, 0.5) == 3.0);
  CHECK(percentile({5, 1, 4, 2, 3}, 0.25) == 2.0);
  CHECK(percentile({1, 2}, 0.5) == 1.5);
  std::vector<double> ramp(1000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  CHECK(percentile(ramp, 0.997) == doctest::Approx(996.003).epsilon(1e-12));
  CHECK(percentile({7}, 0.9) == 7.0);
  CHECK_THROWS_AS(percentile({}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(percentile({1, 2}, 1.5), std::invalid_argument);
}

TEST_CASE("squared correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5};
  CHECK(correlation_r2(a, a) == 1.0);
  CHECK(correlation_r2(a, {3, 5, 7, 9, 11}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(correlation_r2(a, {2, 2, 2, 2, 2}) == 0.0);
  // sxy = 8, sxx = 10, syy = 10
  CHECK(correlation_r2(a, {1, 3, 2, 5, 4}) == doctest::Approx(0.64).epsilon(1e-12));
  CHECK(correlation_r2(a, {2, 1, 4, 3, 6}) == doctest::Approx(100.0 / (10.0 * 14.8)).epsilon(1e-12));
  CHECK_THROWS_AS(correlation_r2(a, {1, 2}), std::invalid_argument);
}

TEST_CASE("perfect estimates give the zero report") {
  const std::vector<double> actual{0.1, 0.3, 0.2, 0.5};
  const ErrorReport r = compute_metrics({synthetic_run(actual, actual)});
  const VariableMetrics& m = r.at("loss");
  CHECK(m.samples == 4);
  CHECK(m.mean_abs == 0.0);
  CHECK(m.median == 0.0);
  CHECK(m.p997_abs == 0.0);
  CHECK(m.r2 == 1.0);
  CHECK(m.cls == "losses");
  CHECK_THROWS_AS(r.at("v:h01"), std::out_of_range);
}

TEST_CASE("a constant offset leaves the correlation unchanged") {
  const std::vector<double> actual{0.1, 0.3, 0.2, 0.5, 0.45};
  std::vector<double> noisy{0.11, 0.28, 0.23, 0.49, 0.47}, shifted = noisy;
  for (double& x : shifted) x += 0.01;
  const VariableMetrics base = compute_metrics({synthetic_run(actual, noisy)}).at("loss");
  std::vector<double> offset = actual;
  for (double& x : offset) x += 0.01;
  const VariableMetrics m = compute_metrics({synthetic_run(actual, offset)}).at("loss");
  CHECK(m.mean_abs == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(m.median == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(m.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(compute_metrics({synthetic_run(actual, shifted)}).at("loss").r2 == doctest::Approx(base.r2).epsilon(1e-12));
  CHECK_THROWS_AS(compute_metrics({synthetic_run({0.1}, {0.1})}), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({}), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({synthetic_run(actual, actual)}, EstimateSource::Dse), std::invalid_argument);
}

TEST_CASE("comparison with DSE and deviation helpers") {
  TimeSeriesRun r = synthetic_run({0.1, 0.2, 0.3}, {0.12, 0.19, 0.3});
  CHECK_THROWS_AS(compare_with_dse({r}), std::invalid_argument);
  r.dse = {{1.0, 0.1}, {1.0, 0.22}, {1.0, 0.27}};
  const auto c = compare_with_dse({r});
  REQUIRE(c.size() == 2);
  CHECK(c[1].variable == "loss");
  CHECK(c[1].mean_abs_difference == doctest::Approx((0.02 + 0.03 + 0.03) / 3.0).epsilon(1e-12));
  CHECK(c[1].max_abs_difference == doctest::Approx(0.03).epsilon(1e-12));
  CHECK(max_underestimation({r}, "loss") == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(max_underestimation({r}, "loss", 2) == doctest::Approx(0.0).epsilon(1e-12));
  const TimeSeriesRun other = synthetic_run({0.1, 0.2, 0.3}, {0.1, 0.2, 0.35});
  CHECK(max_estimate_deviation({r}, {other}, "loss") == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_THROWS_AS(max_estimate_deviation({r}, {}, "loss"), std::invalid_argument);
}

TEST_CASE("transducer noise") {
  const TimeSeriesRun& base = baseline_run();
  const TimeSeriesRun same = inject_transducer_noise(base, 0.0, 4);
  CHECK(same.v_local == base.v_local);
  CHECK(same.poly == base.poly);
  CHECK_THROWS_AS(inject_transducer_noise(base, -1.0, 4), std::invalid_argument);
  const TimeSeriesRun noisy = inject_transducer_noise(base, 2.5, 4);
  CHECK(noisy.v_local != base.v_local);
  CHECK(inject_transducer_noise(base, 2.5, 4).v_local == noisy.v_local);

  // 700 runs x 144 rows of relative voltage noise
  const auto bundle = identity_bundle(144);
  std::vector<double> eps;
  for (std::size_t id = 0; id < 700; ++id) {
    TimeSeriesRun r;
    r.id = id;
    r.bundle = bundle;
    for (std::size_t t = 0; t < 144; ++t) {
      r.timesteps.push_back(t);
      r.p_level_pct.push_back(0.0);
      r.v_local.push_back(1.0);
      r.actual.push_back({1.0, 0.02});
      r.poly.push_back({1.0, 0.02});
    }
    const TimeSeriesRun n = inject_transducer_noise(r, 2.5, 99);
    for (std::size_t t = 0; t < 144; ++t) {
      eps.push_back(std::abs(n.v_local[t] - 1.0));
      REQUIRE(n.poly[t][0] == n.v_local[t]);
    }
  }
  CHECK(std::abs(percentile(eps, 0.997) - 0.025) <= 0.05 * 0.025);
}

TEST_CASE("zero irradiance keeps generation off") {
  const IrradianceProfile dark = clear_sky_profile(144, 6.0, 20.0, 0.0);
  const TimeSeriesRun r = run_timeseries(desk, fixture::bundle(), dark, representative_schedule(5));
  const CoeffBundle& b = *fixture::bundle();
  const std::size_t local = b.local_variable();
  for (std::size_t row = 0; row < r.rows(); ++row) {
    CHECK(r.p_level_pct[row] == 0.0);
    // at zero generation the state is the reference state, so the recovered
    // reference voltage instantiates the coefficient lines at the measured voltage
    const double v_ref = recover_reference_voltage(LocalMeasurement{r.v_local[row], 0.0, r.pf}, b, r.timesteps[row]);
    const auto& models = b.at(r.timesteps[row]);
    const double tau = tau_from_pf(r.pf);
    for (std::size_t v = 0; v < b.variables().size(); ++v) {
      if (b.variables()[v].components() != 1) continue;
      const double direct = evaluate_quadratic(instantiate(models[b.offset(v)], v_ref), 0.0, tau);
      CHECK(r.poly[row][v] == doctest::Approx(direct).epsilon(1e-12));
    }
    CHECK(r.poly[row][local] == doctest::Approx(r.actual[row][local]).epsilon(1e-12));
  }
  CHECK(std::abs(compute_metrics({r}).at("v:h19").median) < 1e-3);
}

TEST_CASE("runs are deterministic") {
  const TimeSeriesRun a = run_timeseries(desk, fixture::bundle(), clear_sky_profile(), representative_schedule(3));
  CHECK(a.actual == baseline_run().actual);
  CHECK(a.poly == baseline_run().poly);
  CHECK(a.timesteps == fixture::trained_timesteps);
}

TEST_CASE("feeder hash guard") {
  const Feeder changed = pv_penetration(desk, 50.0, 3, "h21");
  const DemandSchedule s = representative_schedule(0);
  CHECK_THROWS_AS(run_timeseries(changed, fixture::bundle(), clear_sky_profile(), s), std::invalid_argument);
  RunOptions o;
  o.allow_hash_mismatch = true;
  CHECK_NOTHROW(run_timeseries(changed, fixture::bundle(), clear_sky_profile(), s, o));
  RunOptions bad;
  bad.timesteps = {5};
  CHECK_THROWS_AS(run_timeseries(desk, fixture::bundle(), clear_sky_profile(), s, bad), std::invalid_argument);
}

TEST_CASE("PV penetration") {
  CHECK(pv_penetration(desk, 100.0, 7) == desk);
  RunOptions o;
  const TimeSeriesRun same = run_timeseries(pv_penetration(desk, 100.0, 7, "h21"), fixture::bundle(), clear_sky_profile(),
                                            representative_schedule(3), o);
  CHECK(same.poly == baseline_run().poly);
  std::set<std::string> prev;
  for (double pct : {0.0, 25.0, 50.0, 75.0, 100.0}) {
    const std::set<std::string> owners = dg_owners(pv_penetration(desk, pct, 7));
    CHECK(owners.size() == static_cast<std::size_t>(std::lround(pct / 100.0 * 24.0)));
    CHECK(std::includes(owners.begin(), owners.end(), prev.begin(), prev.end()));
    prev = owners;
  }
  CHECK(dg_owners(pv_penetration(desk, 0.0, 7, "h21")) == std::set<std::string>{"h21"});
  CHECK(dg_owners(pv_penetration(desk, 50.0, 7, "h21")).count("h21") == 1);
  CHECK_THROWS_AS(pv_penetration(desk, 120.0, 7), std::invalid_argument);
}

TEST_CASE("EV sessions") {
  const EvOptions o;
  const auto evs = add_evs(desk, o, 10, 11);
  CHECK(evs.size() == 8);
  std::set<std::string> who;
  for (const ExtraLoad& e : evs) {
    who.insert(e.customer);
    CHECK(e.kw == 3.0);
    CHECK(e.stop - e.start == 18);
    CHECK(e.start >= 17 * 6);
    CHECK(e.stop <= 23 * 6);
  }
  CHECK(who.size() == 8);
  const auto again = add_evs(desk, o, 10, 11);
  for (std::size_t i = 0; i < evs.size(); ++i) CHECK(evs[i].start == again[i].start);
  EvOptions none = o;
  none.fraction = 0.0;
  CHECK(add_evs(desk, none, 10, 1).empty());
  EvOptions bad = o;
  bad.duration_h = 8.0;
  CHECK_THROWS_AS(add_evs(desk, bad, 10, 1), std::invalid_argument);
  bad = o;
  bad.kw = 0.0;
  CHECK_THROWS_AS(add_evs(desk, bad, 10, 1), std::invalid_argument);
}

TEST_CASE("extra loads raise the actual head current") {
  RunOptions o;
  for (const auto& c : desk.customers) o.extra_loads.push_back({c.id, 3.0, 100, 130});
  const TimeSeriesRun r = run_timeseries(desk, fixture::bundle(), clear_sky_profile(), representative_schedule(3), o);
  const std::size_t i = fixture::bundle()->find("i_head:c");
  for (std::size_t row = 0; row < r.rows(); ++row) {
    const std::size_t t = r.timesteps[row];
    if (t >= 100 && t < 130) CHECK(r.actual[row][i] > baseline_run().actual[row][i]);
    else CHECK(r.actual[row][i] == baseline_run().actual[row][i]);
  }
}

TEST_CASE("clear-sky irradiance and its CSV form") {
  const IrradianceProfile p = clear_sky_profile();
  REQUIRE(p.steps() == 144);
  CHECK(p.resolution_min == 10);
  for (std::size_t t = 0; t <= 36; ++t) CHECK(p.p_level_pct[t] == 0.0);
  for (std::size_t t = 120; t < 144; ++t) CHECK(p.p_level_pct[t] == 0.0);
  CHECK(p.p_level_pct[78] == doctest::Approx(100.0));
  CHECK(p.p_level_pct[60] == doctest::Approx(p.p_level_pct[96]));

  std::stringstream ss;
  write_irradiance_csv(ss, p);
  const IrradianceProfile back = read_irradiance_csv(ss);
  REQUIRE(back.steps() == 144);
  for (std::size_t t = 0; t < 144; ++t) CHECK(back.p_level_pct[t] == doctest::Approx(p.p_level_pct[t]).epsilon(1e-9));

  const IrradianceProfile shipped = load_irradiance(LVPOLY_DATA_DIR "/clear_sky_irradiance.csv");
  REQUIRE(shipped.steps() == 144);
  for (std::size_t t = 0; t < 144; ++t) CHECK(shipped.p_level_pct[t] == doctest::Approx(p.p_level_pct[t]).epsilon(1e-9));

  std::stringstream gap("timestep,p_level\n0,0\n2,5\n");
  CHECK_THROWS_AS(read_irradiance_csv(gap), std::runtime_error);
  std::stringstream high("timestep,p_level\n0,120\n");
  CHECK_THROWS_AS(read_irradiance_csv(high), std::runtime_error);
  CHECK_THROWS_AS(clear_sky_profile(7), std::invalid_argument);
}

TEST_CASE("report headers") {
  std::stringstream runs, metrics, dse;
  TimeSeriesRun r = synthetic_run({0.1, 0.2}, {0.1, 0.2});
  write_run_csv(runs, {r});
  write_metrics_csv(metrics, compute_metrics({r}));
  r.dse = r.poly;
  write_dse_comparison_csv(dse, compare_with_dse({r}));
  std::string line;
  std::getline(runs, line);
  CHECK(line == "run,timestep,p_level,variable,actual,poly_estimate,dse_estimate,poly_error,dse_error");
  std::size_t rows = 0;
  while (std::getline(runs, line)) ++rows;
  CHECK(rows == 4);
  std::getline(metrics, line);
  CHECK(line == "variable,class,samples,mean_abs_error,median_error,p997_abs_error,r2");
  std::getline(dse, line);
  CHECK(line == "variable,class,mean_abs_difference,max_abs_difference");
  const std::string units = units_header(desk, PowerFlowSolver(desk).network());
  CHECK(units.rfind("# units:", 0) == 0);
  CHECK(units.find("375 A") != std::string::npos);
}

TEST_CASE("end-of-feeder customer has the longest resistive path") {
  const PowerFlowSolver solver(desk);
  for (Phase ph : {Phase::A, Phase::B, Phase::C}) {
    std::string best;
    double best_r = -1.0;
    for (const auto& c : desk.customers)
      if (c.phase == ph && path_resistance(c.bus, ph) > best_r) {
        best_r = path_resistance(c.bus, ph);
        best = c.id;
      }
    CHECK(end_of_feeder_customer(solver.network(), ph) == best);
  }
  CHECK(end_of_feeder_customer(solver.network(), Phase::C) == "h19");
}

TEST_CASE("a full day with state estimation fits in a minute") {
  TrainingConfig cfg;
  cfg.k = 10;
  cfg.seed = 2;
  cfg.locations = {"h21"};
  cfg.grid = SetpointGrid::uniform(8);
  cfg.diagnostics = false;
  const std::vector<DemandScenario> few(fixture::scenarios().begin(), fixture::scenarios().begin() + 60);
  const TrainingResult t = train(desk, few, cfg);
  const auto bundle = std::make_shared<const CoeffBundle>(t.bundle("h21"));
  RunOptions o;
  o.dse = true;
  const auto start = std::chrono::steady_clock::now();
  const TimeSeriesRun r =
      run_timeseries(desk, bundle, clear_sky_profile(), DemandSchedule::representative(few, t.clusters, 0), o);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(r.rows() == 144);
  CHECK(r.dse.size() == 144);
  CHECK(seconds < 60.0);
  CHECK(compute_metrics({r}, EstimateSource::Dse).at("v:h19").samples == 144);
}

}
