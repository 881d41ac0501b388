#pragma once

#include "lvpoly/clustering.hpp"
#include "lvpoly/demand.hpp"
#include "lvpoly/powerflow.hpp"
#include "lvpoly/regression.hpp"
#include "lvpoly/variables.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lvpoly {

/// tan(arccos(pf)): reactive-to-active ratio of a unit at power factor pf.
double tau_from_pf(double pf);

/// Regular setpoint grid, endpoints included. Sample n sits at
/// (p_level(n / pf_steps), pf(n % pf_steps)).
struct SetpointGrid {
  std::size_t p_steps = 20;
  double p_min = 0.0;  // percent
  double p_max = 100.0;
  std::size_t pf_steps = 20;
  double pf_min = 0.85;  // inductive
  double pf_max = 1.0;

  static SetpointGrid uniform(std::size_t steps) { return SetpointGrid{steps, 0.0, 100.0, steps, 0.85, 1.0}; }

  std::size_t size() const { return p_steps * pf_steps; }
  double p_level(std::size_t i) const;
  double pf(std::size_t j) const;
  /// Throws std::invalid_argument unless 0 <= p_min <= p_max <= 100 and 0.85 <= pf_min <= pf_max <= 1.
  void validate() const;

  bool operator==(const SetpointGrid&) const = default;
};

struct SweepSample {
  double p_level = 0.0;  // percent
  double pf = 1.0;
  double tau = 0.0;
  std::span<const double> values;  // TargetExtractor layout
};

/// Tracked-variable values over a setpoint grid for one demand scenario and timestep.
struct SweepResult {
  std::vector<double> p;    // fraction of rating, per sample
  std::vector<double> tau;  // per sample
  std::vector<double> pf;   // per sample
  std::size_t width = 0;
  std::vector<double> values;              // samples x width, row-major
  std::vector<double> reference_voltage;   // per customer, at the grid's lower bounds

  std::size_t samples() const { return p.size(); }
  double value(std::size_t n, std::size_t component) const { return values[n * width + component]; }
  std::vector<double> column(std::size_t component) const;
  SweepSample sample(std::size_t n) const;
};

/// Every DG unit injects P = (P_level / 100) rating and Q = -P tau; demand comes
/// from `scenario` at `timestep`. Non-convergence is reported with the grid point.
SweepResult sweep(const PowerFlowSolver& solver, const TargetExtractor& extractor, const DemandScenario& scenario,
                  std::size_t timestep, const SetpointGrid& grid, const SolverOptions& options = {});

/// Least-squares quadratic surface of one variable component.
struct PolySurface {
  std::string variable;
  std::size_t scenario = 0;
  std::size_t timestep = 0;
  QuadCoeffs b{};
  double r2 = 0.0;
};

PolySurface fit_surface(const SweepResult& samples, std::size_t component, const std::string& name = {});

/// Current magnitude composed from independently fitted real and imaginary surfaces.
struct CurrentMagnitudeModel {
  QuadCoeffs re{};
  QuadCoeffs im{};

  double operator()(double p, double tau) const;
};

CurrentMagnitudeModel fit_current_magnitude(const PolySurface& re, const PolySurface& im);
/// R^2 of the composed magnitude against the magnitudes in the sweep.
double magnitude_r2(const CurrentMagnitudeModel& model, const SweepResult& samples, std::size_t re_component,
                    std::size_t im_component);

/// b_i = a1 V_l* + a2, with the weighted R^2 of that line.
struct CoeffPair {
  double a1 = 0.0;
  double a2 = 0.0;
  double r2 = 0.0;

  bool operator==(const CoeffPair&) const = default;
};
using CoeffModels = std::array<CoeffPair, 6>;

inline QuadCoeffs instantiate(const CoeffModels& m, double v_ref) {
  QuadCoeffs b;
  for (std::size_t i = 0; i < 6; ++i) b[i] = m[i].a1 * v_ref + m[i].a2;
  return b;
}

/// Weighted linear models of each surface coefficient against the reference local
/// voltage. Needs at least two distinct reference voltages.
CoeffModels fit_coeff_models(const std::vector<QuadCoeffs>& surfaces, const std::vector<double>& reference_voltages,
                             const std::vector<double>& omegas);

struct BundleHeader {
  std::string feeder_hash;
  std::string location;  // customer id of the DG unit
  Phase phase = Phase::A;
  SetpointGrid grid;
  std::size_t k = 0;
  std::string algorithm = "ward";
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  int resolution_min = 10;
  std::size_t steps = 144;

  bool operator==(const BundleHeader&) const = default;
};

/// The per-DG-unit deployable: coefficient models per timestep for every tracked
/// variable component, including the unit's own voltage.
class CoeffBundle {
public:
  BundleHeader header;

  CoeffBundle() = default;
  CoeffBundle(BundleHeader header, std::vector<TrackedVariable> variables);

  const std::vector<TrackedVariable>& variables() const { return variables_; }
  std::size_t width() const { return width_; }
  std::size_t offset(std::size_t variable) const { return offsets_[variable]; }
  std::size_t find(const std::string& name) const;
  /// Index of v:<location>.
  std::size_t local_variable() const;

  /// Component-indexed models at t; throws std::out_of_range if t was not trained.
  const std::vector<CoeffModels>& at(std::size_t timestep) const;
  bool has(std::size_t timestep) const { return timesteps_.count(timestep) != 0; }
  void set(std::size_t timestep, std::vector<CoeffModels> models);
  const std::map<std::size_t, std::vector<CoeffModels>>& timesteps() const { return timesteps_; }

  /// Throws std::invalid_argument when the local-voltage entry is missing or a value is not finite.
  void validate() const;

  bool operator==(const CoeffBundle&) const = default;

private:
  std::vector<TrackedVariable> variables_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
  std::map<std::size_t, std::vector<CoeffModels>> timesteps_;
};

void write_bundle(std::ostream& out, const CoeffBundle& bundle);
CoeffBundle read_bundle(std::istream& in);
void save_bundle(const std::string& path, const CoeffBundle& bundle);
CoeffBundle load_bundle(const std::string& path);

struct TrainingConfig {
  std::size_t k = 400;
  ClusterAlgorithm algorithm = ClusterAlgorithm::Ward;
  std::uint64_t seed = 1;
  SetpointGrid grid;
  std::vector<std::string> locations;       // DG customers to train; empty = every DG customer
  std::vector<TrackedVariable> variables;   // empty = default set
  std::vector<std::size_t> timesteps;       // empty = every timestep
  bool diagnostics = true;                  // degree-1 and degree-2 R^2 summaries
  bool degree3 = false;                     // adds degree-3 R^2 summaries
  bool keep_surfaces = false;               // keep stage-1 output for every timestep
  std::vector<std::size_t> keep_timesteps;  // ... or only for these
  SolverOptions solver;
  KMeansOptions kmeans;
  unsigned threads = 0;
};

struct FitStats {
  double min = 1.0;
  double sum = 0.0;
  std::size_t count = 0;

  void add(double r2);
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

/// Surface R^2 summary of one variable (or current magnitude) at one degree.
struct SurfaceR2 {
  std::string variable;
  std::string cls;
  int degree = 2;
  FitStats stats;
};

/// Stage-1 output for one timestep, kept on request.
struct TimestepSurfaces {
  std::size_t timestep = 0;
  std::vector<std::size_t> representatives;   // scenario index per cluster
  std::vector<double> omegas;
  std::vector<std::vector<double>> reference_voltage;  // [cluster][customer]
  std::vector<std::vector<QuadCoeffs>> coeffs;         // [cluster][component]
  std::vector<std::vector<double>> r2;                 // [cluster][component]
};

struct TrainingResult {
  std::vector<CoeffBundle> bundles;  // one per location
  std::vector<TimestepClusters> clusters;
  std::vector<SurfaceR2> surface_r2;
  std::vector<TimestepSurfaces> surfaces;  // only with keep_surfaces
  double seconds = 0.0;

  const CoeffBundle& bundle(const std::string& location) const;
};

/// Patterns, normalization and clustering for every listed timestep.
std::vector<TimestepClusters> reduce_scenarios(const PowerFlowSolver& solver,
                                               const std::vector<DemandScenario>& scenarios,
                                               const std::vector<std::size_t>& timesteps, std::size_t k,
                                               ClusterAlgorithm algorithm, std::uint64_t seed,
                                               const KMeansOptions& kmeans = {}, const SolverOptions& options = {},
                                               unsigned threads = 0);

/// Full offline stage. Precomputed clusters (which depend on demand only) may be
/// passed to skip the reduction step; they must cover the trained timesteps.
TrainingResult train(const Feeder& feeder, const std::vector<DemandScenario>& scenarios, const TrainingConfig& config,
                     const std::vector<TimestepClusters>* clusters = nullptr);

/// variable,class,degree,min_r2,mean_r2,fits
void write_surface_report(std::ostream& out, const TrainingResult& result);
/// variable,i,min_r2,mean_r2 over trained timesteps.
void write_coefficient_report(std::ostream& out, const CoeffBundle& bundle);
/// timestep,variable,i,scenario,v_ref,omega,b,b_hat for kept surfaces.
void write_coefficient_scatter(std::ostream& out, const TrainingResult& result, const CoeffBundle& bundle,
                               const Feeder& feeder);
/// p_level,pf,tau,variable,actual,fitted for every component of one sweep.
void write_surface_samples(std::ostream& out, const SweepResult& samples, const TargetExtractor& extractor);

}  // namespace lvpoly
