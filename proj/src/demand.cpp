#include "lvpoly/demand.hpp"

#include "lvpoly/parallel.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lvpoly {

namespace {

TimestepStats stats_of(const std::vector<double>& xs) {
  TimestepStats s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

DemandPool::DemandPool(std::vector<std::vector<double>> profiles_kw, int resolution_min,
                       std::vector<ProfileClass> classes, std::vector<std::size_t> profile_class)
    : profiles_(std::move(profiles_kw)),
      resolution_min_(resolution_min),
      classes_(std::move(classes)),
      profile_class_(std::move(profile_class)) {
  if (profiles_.empty()) throw std::invalid_argument("demand pool is empty");
  if (resolution_min_ <= 0 || 1440 % resolution_min_ != 0)
    throw std::invalid_argument("resolution must divide a day evenly");
  steps_ = profiles_.front().size();
  if (steps_ == 0) throw std::invalid_argument("profiles have no timesteps");
  for (const auto& p : profiles_) {
    if (p.size() != steps_) throw std::invalid_argument("profiles must share one timestep grid");
    for (double v : p)
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("profile demand must be finite and >= 0");
  }
  if (classes_.empty()) classes_.push_back(ProfileClass{});
  if (profile_class_.empty()) profile_class_.assign(profiles_.size(), 0);
  if (profile_class_.size() != profiles_.size()) throw std::invalid_argument("one class index per profile required");
  for (auto c : profile_class_)
    if (c >= classes_.size()) throw std::invalid_argument("profile class index out of range");
  for (const auto& c : classes_) {
    if (!(c.power_factor > 0.0) || c.power_factor > 1.0) throw std::invalid_argument("class power factor out of range");
    q_ratio_.push_back(std::tan(std::acos(c.power_factor)));
  }

  std::vector<double> col(profiles_.size());
  for (std::size_t t = 0; t < steps_; ++t) {
    for (std::size_t i = 0; i < profiles_.size(); ++i) col[i] = kw(i, t);
    p_stats_.push_back(stats_of(col));
    for (std::size_t i = 0; i < profiles_.size(); ++i) col[i] = kvar(i, t);
    q_stats_.push_back(stats_of(col));
  }
}

TimestepStats DemandPool::class_active_stats(std::size_t cls, std::size_t t) const {
  std::vector<double> col;
  for (std::size_t i = 0; i < profiles_.size(); ++i)
    if (profile_class_[i] == cls) col.push_back(profiles_[i].at(t));
  if (col.empty()) throw std::invalid_argument("no profiles in class");
  return stats_of(col);
}

std::vector<double> daily_template(const SyntheticPoolOptions& o) {
  if (o.resolution_min <= 0 || 1440 % o.resolution_min != 0)
    throw std::invalid_argument("resolution must divide a day evenly");
  const std::size_t steps = static_cast<std::size_t>(1440 / o.resolution_min);
  std::vector<double> shape(steps);
  auto bump = [](double h, double centre, double width) {
    // Wrap around midnight so late-evening demand carries into the early hours.
    double d = std::fabs(h - centre);
    d = std::min(d, 24.0 - d);
    return std::exp(-0.5 * (d / width) * (d / width));
  };
  for (std::size_t t = 0; t < steps; ++t) {
    const double hour = (static_cast<double>(t) + 0.5) * o.resolution_min / 60.0;
    shape[t] = o.base_kw + o.morning_kw * bump(hour, o.morning_hour, o.morning_width_h) +
               o.evening_kw * bump(hour, o.evening_hour, o.evening_width_h);
  }
  return shape;
}

DemandPool synthetic_pool(const SyntheticPoolOptions& o) {
  if (o.profiles == 0) throw std::invalid_argument("demand pool is empty");
  const auto shape = daily_template(o);
  std::vector<std::vector<double>> profiles(o.profiles);
  const double innov = o.noise_sigma * std::sqrt(1.0 - o.noise_rho * o.noise_rho);
  for (std::size_t i = 0; i < o.profiles; ++i) {
    std::mt19937_64 gen(substream_seed(o.seed, i));
    std::normal_distribution<double> z(0.0, 1.0);
    // Mean-one lognormal factors.
    const double scale = std::exp(o.household_sigma * z(gen) - 0.5 * o.household_sigma * o.household_sigma);
    double x = o.noise_sigma * z(gen);
    auto& p = profiles[i];
    p.resize(shape.size());
    for (std::size_t t = 0; t < shape.size(); ++t) {
      if (t > 0) x = o.noise_rho * x + innov * z(gen);
      p[t] = shape[t] * scale * std::exp(x - 0.5 * o.noise_sigma * o.noise_sigma);
    }
  }
  return DemandPool(std::move(profiles), o.resolution_min, {ProfileClass{"residential", o.power_factor}});
}

DemandPool read_profile_pool_csv(std::istream& in, ProfileClass cls) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("profile pool CSV is empty");
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (1440 % columns != 0) throw std::invalid_argument("timestep count must divide 1440 minutes");
  std::vector<std::vector<double>> profiles;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> p;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        p.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw std::invalid_argument("profile pool CSV row " + std::to_string(row) + ": bad value '" + cell + "'");
      }
    }
    if (p.size() != columns)
      throw std::invalid_argument("profile pool CSV row " + std::to_string(row) + " has the wrong column count");
    profiles.push_back(std::move(p));
  }
  return DemandPool(std::move(profiles), static_cast<int>(1440 / columns), {std::move(cls)});
}

void write_profile_pool_csv(std::ostream& out, const DemandPool& pool) {
  char buf[32];
  for (std::size_t t = 0; t < pool.steps(); ++t) {
    const int minute = static_cast<int>(t) * pool.resolution_min();
    std::snprintf(buf, sizeof buf, "%02d:%02d", minute / 60, minute % 60);
    out << (t ? "," : "") << buf;
  }
  out << '\n';
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t t = 0; t < pool.steps(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", pool.kw(i, t));
      out << (t ? "," : "") << buf;
    }
    out << '\n';
  }
}

void DemandScenario::apply(InjectionSet& inj, std::size_t t) const {
  for (std::size_t h = 0; h < profile.size(); ++h) {
    inj.load_kw[h] = active_kw(h, t);
    inj.load_kvar[h] = reactive_kvar(h, t);
  }
}

std::vector<DemandScenario> sample_scenarios(std::shared_ptr<const DemandPool> pool, const Feeder& feeder,
                                             std::size_t s_count, std::uint64_t seed) {
  if (!pool || pool->size() == 0) throw std::invalid_argument("demand pool is empty");
  if (s_count == 0) throw std::invalid_argument("at least one scenario is required");
  const std::size_t h_count = feeder.customers.size();
  std::vector<DemandScenario> out(s_count);
  parallel_for(s_count, [&](std::size_t s) {
    DemandScenario& sc = out[s];
    sc.id = s;
    sc.pool = pool;
    sc.profile.resize(h_count);
    for (std::size_t h = 0; h < h_count; ++h) {
      std::mt19937_64 gen(substream_seed(seed, s, h));
      std::uniform_int_distribution<std::size_t> pick(0, pool->size() - 1);
      sc.profile[h] = static_cast<std::uint32_t>(pick(gen));
    }
  });
  return out;
}

std::size_t required_sample_size(double sigma_ratio) {
  if (!(sigma_ratio > 0.0) || sigma_ratio > 1.0) throw std::invalid_argument("sigma ratio must be in (0, 1]");
  // The small slack absorbs rounding in 1 / r^2 for exact decimal ratios such as 0.01.
  return static_cast<std::size_t>(std::ceil(1.0 / (sigma_ratio * sigma_ratio) - 1e-9));
}

void write_scenarios_csv(std::ostream& out, const Feeder& feeder, const std::vector<DemandScenario>& scenarios) {
  out << "scenario,customer,timestep,kw,kvar\n";
  char buf[96];
  for (const auto& sc : scenarios)
    for (std::size_t h = 0; h < feeder.customers.size(); ++h)
      for (std::size_t t = 0; t < sc.steps(); ++t) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g", sc.active_kw(h, t), sc.reactive_kvar(h, t));
        out << sc.id << ',' << feeder.customers[h].id << ',' << t << ',' << buf << '\n';
      }
}

}  // namespace lvpoly
