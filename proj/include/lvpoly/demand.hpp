#pragma once

#include "lvpoly/feeder.hpp"
#include "lvpoly/powerflow.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace lvpoly {

struct ProfileClass {
  std::string name = "residential";
  double power_factor = 0.95;  // inductive
};

struct TimestepStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over the pool
};

/// Library of daily demand profiles (kW per timestep) with per-timestep statistics.
class DemandPool {
public:
  DemandPool(std::vector<std::vector<double>> profiles_kw, int resolution_min,
             std::vector<ProfileClass> classes = {ProfileClass{}}, std::vector<std::size_t> profile_class = {});

  std::size_t size() const { return profiles_.size(); }
  std::size_t steps() const { return steps_; }
  int resolution_min() const { return resolution_min_; }
  const std::vector<ProfileClass>& classes() const { return classes_; }
  std::size_t class_of(std::size_t profile) const { return profile_class_[profile]; }

  double kw(std::size_t profile, std::size_t t) const { return profiles_[profile][t]; }
  double kvar(std::size_t profile, std::size_t t) const { return profiles_[profile][t] * q_ratio_[class_of(profile)]; }
  const std::vector<double>& profile(std::size_t i) const { return profiles_[i]; }

  const TimestepStats& active_stats(std::size_t t) const { return p_stats_.at(t); }
  const TimestepStats& reactive_stats(std::size_t t) const { return q_stats_.at(t); }
  /// Statistics restricted to one profile class.
  TimestepStats class_active_stats(std::size_t cls, std::size_t t) const;

private:
  std::vector<std::vector<double>> profiles_;
  std::size_t steps_ = 0;
  int resolution_min_ = 10;
  std::vector<ProfileClass> classes_;
  std::vector<std::size_t> profile_class_;
  std::vector<double> q_ratio_;
  std::vector<TimestepStats> p_stats_, q_stats_;
};

struct SyntheticPoolOptions {
  std::size_t profiles = 1000;
  int resolution_min = 10;
  double power_factor = 0.95;
  std::uint64_t seed = 7;
  // Daily template, kW: base + gaussian morning and evening peaks.
  double base_kw = 0.30;
  double morning_kw = 0.45;
  double morning_hour = 7.75;
  double morning_width_h = 1.0;
  double evening_kw = 1.10;
  double evening_hour = 18.75;
  double evening_width_h = 1.6;
  double household_sigma = 0.35;  // log-std of the per-profile scale
  double noise_sigma = 0.55;      // log-std of the per-step variation
  double noise_rho = 0.7;         // step-to-step correlation of the log variation
};

/// Template shape, kW per timestep, before household scaling and noise.
std::vector<double> daily_template(const SyntheticPoolOptions& options);

/// Lognormal draws shaped by the daily template; deterministic given options.seed.
DemandPool synthetic_pool(const SyntheticPoolOptions& options = {});

/// One profile per row, one column per timestep (header row of timestep labels), kW.
/// The resolution is 1440 / column count.
DemandPool read_profile_pool_csv(std::istream& in, ProfileClass cls = {});
void write_profile_pool_csv(std::ostream& out, const DemandPool& pool);

/// One Monte Carlo demand allocation: each customer draws one pool profile.
struct DemandScenario {
  std::size_t id = 0;
  std::shared_ptr<const DemandPool> pool;
  std::vector<std::uint32_t> profile;  // per customer

  std::size_t steps() const { return pool->steps(); }
  int resolution_min() const { return pool->resolution_min(); }
  double active_kw(std::size_t h, std::size_t t) const { return pool->kw(profile[h], t); }
  double reactive_kvar(std::size_t h, std::size_t t) const { return pool->kvar(profile[h], t); }
  /// Writes this scenario's loads at timestep t into `inj` (DG entries untouched).
  void apply(InjectionSet& inj, std::size_t t) const;
};

/// Uniform, independent profile allocation per customer. Each (scenario, customer)
/// pair has its own RNG substream, so the result does not depend on scheduling.
std::vector<DemandScenario> sample_scenarios(std::shared_ptr<const DemandPool> pool, const Feeder& feeder,
                                             std::size_t s_count, std::uint64_t seed);

/// Samples needed so that the standard error of the mean is `sigma_ratio` of the
/// population standard deviation: ceil(1 / sigma_ratio^2).
std::size_t required_sample_size(double sigma_ratio);

/// Long format: scenario,customer,timestep,kw,kvar
void write_scenarios_csv(std::ostream& out, const Feeder& feeder, const std::vector<DemandScenario>& scenarios);

}  // namespace lvpoly
