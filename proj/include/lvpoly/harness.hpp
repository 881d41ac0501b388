#pragma once

#include "lvpoly/dse.hpp"
#include "lvpoly/estimator.hpp"
#include "lvpoly/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace lvpoly {

/// Uniform generation level per timestep, percent of rating.
struct IrradianceProfile {
  int resolution_min = 10;
  std::vector<double> p_level_pct;

  std::size_t steps() const { return p_level_pct.size(); }
};

/// Clear-sky bell: sin^2 between sunrise and sunset, scaled to `peak_pct`.
IrradianceProfile clear_sky_profile(std::size_t steps = 144, double sunrise_h = 6.0, double sunset_h = 20.0,
                                    double peak_pct = 100.0);
/// timestep,p_level (percent). Rows must cover 0..n-1 in order.
IrradianceProfile read_irradiance_csv(std::istream& in);
IrradianceProfile load_irradiance(const std::string& path);
void write_irradiance_csv(std::ostream& out, const IrradianceProfile& profile);

/// The demand scenario in force at each timestep.
struct DemandSchedule {
  std::size_t id = 0;  // distinguishes runs when seeding noise
  std::vector<DemandScenario> by_timestep;

  static DemandSchedule constant(const DemandScenario& scenario, std::size_t steps);
  /// Representative k of each timestep's clustering (as in the pooled validation runs).
  static DemandSchedule representative(const std::vector<DemandScenario>& scenarios,
                                       const std::vector<TimestepClusters>& clusters, std::size_t k);
};

/// Extra constant loads, e.g. electric vehicles charging.
struct ExtraLoad {
  std::string customer;
  double kw = 0.0;
  std::size_t start = 0;  // first timestep, inclusive
  std::size_t stop = 0;   // exclusive; may exceed the day length, wrapping past midnight
};

struct RunOptions {
  double pf = 0.95;
  bool dse = false;
  bool allow_hash_mismatch = false;
  std::vector<std::size_t> timesteps;  // empty = every timestep in the bundle
  std::vector<ExtraLoad> extra_loads;
  std::shared_ptr<const DemandPool> pseudo_pool;  // DSE statistics; defaults to the schedule's pool
  SolverOptions solver;
  DseOptions dse_options;
};

/// Per-timestep actual values (power-flow oracle), polynomial estimates and
/// optional DSE estimates, as variable magnitudes in bundle order.
struct TimeSeriesRun {
  std::size_t id = 0;
  std::shared_ptr<const CoeffBundle> bundle;
  std::vector<std::size_t> timesteps;
  std::vector<double> p_level_pct;
  double pf = 0.95;
  std::vector<double> v_local;  // as fed to the estimator
  std::vector<std::vector<double>> actual;
  std::vector<std::vector<double>> poly;
  std::vector<std::vector<double>> dse;  // empty unless requested

  std::size_t rows() const { return timesteps.size(); }
};

/// Throws std::invalid_argument on a feeder-hash mismatch unless allowed.
TimeSeriesRun run_timeseries(const Feeder& feeder, std::shared_ptr<const CoeffBundle> bundle,
                             const IrradianceProfile& irradiance, const DemandSchedule& schedule,
                             const RunOptions& options = {});

/// Multiplies each local voltage by (1 + e), e ~ N(0, (p997 / 300)^2) drawn per row
/// from a substream of (seed, run id, timestep), and re-evaluates the polynomials.
/// DSE estimates are dropped.
TimeSeriesRun inject_transducer_noise(const TimeSeriesRun& run, double percentile_997, std::uint64_t seed);

enum class EstimateSource { Polynomial, Dse };

struct VariableMetrics {
  std::string variable;
  std::string cls;
  std::size_t samples = 0;
  double mean_abs = 0.0;
  double median = 0.0;
  double p997_abs = 0.0;
  double r2 = 1.0;
};

struct ErrorReport {
  std::vector<VariableMetrics> variables;

  const VariableMetrics& at(const std::string& variable) const;
};

/// Linear interpolation between closest ranks (q in [0, 1]).
double percentile(std::vector<double> values, double q);
/// Squared Pearson correlation; 1 when both series are identical, 0 when one is constant otherwise.
double correlation_r2(const std::vector<double>& actual, const std::vector<double>& estimate);

/// Pooled over every row of every run (runs must share the variable layout).
ErrorReport compute_metrics(const std::vector<TimeSeriesRun>& runs,
                            EstimateSource source = EstimateSource::Polynomial);

/// Per variable, mean over rows of |polynomial error - DSE error|, and the maximum.
struct DseComparison {
  std::string variable;
  std::string cls;
  double mean_abs_difference = 0.0;
  double max_abs_difference = 0.0;
};
std::vector<DseComparison> compare_with_dse(const std::vector<TimeSeriesRun>& runs);

/// Keeps DG on round(percent / 100 * units) customers. Units are dropped in a seeded
/// order, so lower penetrations are subsets of higher ones; `keep` is never dropped.
Feeder pv_penetration(const Feeder& feeder, double percent, std::uint64_t seed, const std::string& keep = {});

struct EvOptions {
  double fraction = 1.0 / 3.0;
  double kw = 3.0;
  double window_start_h = 17.0;  // charging start drawn uniformly in [start, end - duration]
  double window_end_h = 23.0;
  double duration_h = 3.0;
};

/// One charging session per adopting customer; adopters and start times are seeded.
std::vector<ExtraLoad> add_evs(const Feeder& feeder, const EvOptions& options, int resolution_min, std::uint64_t seed);

/// Outcome of running an outdated bundle on a mutated system next to a control.
struct RobustnessOutcome {
  Feeder feeder;
  std::vector<TimeSeriesRun> outdated;
  std::vector<TimeSeriesRun> control;
  ErrorReport outdated_metrics;
  ErrorReport control_metrics;
  /// max over rows and variables of the class of |outdated estimate - control estimate|.
  double max_voltage_deviation = 0.0;
  double max_current_deviation = 0.0;
};

struct StudyInputs {
  const std::vector<DemandScenario>* scenarios = nullptr;
  const std::vector<TimestepClusters>* clusters = nullptr;  // reused by retraining
  TrainingConfig training;
  std::vector<DemandSchedule> schedules;
  IrradianceProfile irradiance;
  RunOptions run;
  std::uint64_t seed = 1;
};

/// The outdated bundle runs on the feeder at `percent` penetration; the control is a
/// bundle retrained on that feeder.
RobustnessOutcome pv_penetration_study(const Feeder& feeder, std::shared_ptr<const CoeffBundle> outdated,
                                       double percent, const StudyInputs& inputs);

/// The bundle runs with EV loads added; the control is the same bundle without them.
RobustnessOutcome ev_study(const Feeder& feeder, std::shared_ptr<const CoeffBundle> bundle, const EvOptions& evs,
                           const StudyInputs& inputs);

/// Largest (actual - polynomial estimate) of one variable over rows at or after `from_timestep`.
double max_underestimation(const std::vector<TimeSeriesRun>& runs, const std::string& variable,
                           std::size_t from_timestep = 0);
/// Largest |a - b| between the polynomial estimates of one variable in paired runs.
double max_estimate_deviation(const std::vector<TimeSeriesRun>& a, const std::vector<TimeSeriesRun>& b,
                              const std::string& variable);

/// Long format: run,timestep,p_level,variable,actual,poly_estimate,dse_estimate,poly_error,dse_error
void write_run_csv(std::ostream& out, const std::vector<TimeSeriesRun>& runs);
/// variable,class,samples,mean_abs_error,median_error,p997_abs_error,r2
void write_metrics_csv(std::ostream& out, const ErrorReport& report);
void write_dse_comparison_csv(std::ostream& out, const std::vector<DseComparison>& rows);

/// Customer on `phase` with the largest path resistance from the source.
std::string end_of_feeder_customer(const Network& net, Phase phase);

/// Comment line stating the per-unit conventions, used by every report.
std::string units_header(const Feeder& feeder, const Network& net);

}  // namespace lvpoly
