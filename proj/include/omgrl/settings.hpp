#pragma once

// Typed views of a Config. Every section-level "seed" key falls back to the
// top-level "seed" (default 1).

#include "omgrl/config.hpp"
#include "omgrl/dynamics.hpp"
#include "omgrl/eval.hpp"
#include "omgrl/orchestrator.hpp"
#include "omgrl/synth.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace omgrl::settings {

std::uint64_t global_seed(const Config& cfg);

// "64,64" -> {64, 64}
std::vector<int> parse_widths(const std::string& text);

synth::SynthConfig synth(const Config& cfg);
dynamics::DynamicsConfig dynamics(const Config& cfg);
orchestrator::TrainConfig train(const Config& cfg);

struct EvalSettings {
  int episodes = 100;
  int steps = 36;
  int seeds = 5;
  eval::SuccessConfig success{};
  eval::BehaviorConfig behavior{};
  eval::WisConfig wis{};
  int tendency_bins = 10;
  std::uint64_t seed = 1;
};
EvalSettings evaluation(const Config& cfg);

}  // namespace omgrl::settings
