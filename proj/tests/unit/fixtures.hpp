#pragma once

#include "lvpoly/harness.hpp"

#include <memory>
#include <string>
#include <vector>

#ifndef LVPOLY_DATA_DIR
#define LVPOLY_DATA_DIR "data"
#endif

namespace fixture {

inline const std::string desk_path = LVPOLY_DATA_DIR "/desk_feeder.txt";

inline const lvpoly::Feeder& desk() {
  static const lvpoly::Feeder f = lvpoly::load_feeder(desk_path);
  return f;
}

inline const char* const two_bus_text = R"(# two buses
[source]
bus=s v_pu=1,1,1 angle_deg=0,-120,120 base_voltage_v=230.94 base_power_kva=100

[buses]
id=s
id=r

[branches]
from=s to=r length_m=100 ampacity_a=300 r_ohm_per_km=0.2,0,0,0,0.2,0,0,0,0.2 x_ohm_per_km=0.1,0.02,0.02,0.02,0.1,0.02,0.02,0.02,0.1

[customers]
id=c1 bus=r phase=a dg_kw=2
)";

inline std::shared_ptr<const lvpoly::DemandPool> pool() {
  static const auto p = std::make_shared<const lvpoly::DemandPool>(lvpoly::synthetic_pool({}));
  return p;
}

inline const std::vector<lvpoly::DemandScenario>& scenarios() {
  static const auto s = lvpoly::sample_scenarios(pool(), desk(), 200, 17);
  return s;
}

inline const std::vector<std::size_t> trained_timesteps{0, 36, 72, 102, 108, 120};
inline const std::string location = "h21";

/// K = 50 on 200 scenarios at a handful of timesteps, stage-1 output kept.
inline const lvpoly::TrainingResult& training() {
  static const lvpoly::TrainingResult r = [] {
    lvpoly::TrainingConfig cfg;
    cfg.k = 50;
    cfg.seed = 3;
    cfg.locations = {location};
    cfg.timesteps = trained_timesteps;
    cfg.keep_surfaces = true;
    return lvpoly::train(desk(), scenarios(), cfg);
  }();
  return r;
}

inline std::shared_ptr<const lvpoly::CoeffBundle> bundle() {
  static const auto b = std::make_shared<const lvpoly::CoeffBundle>(training().bundle(location));
  return b;
}

}  // namespace fixture
