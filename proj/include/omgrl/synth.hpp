#pragma once

// Ground-truth synthetic patient MDP: linear-Gaussian feature dynamics with an
// aPTT channel driven by the dose class, rewarded through r_p.
//
// The aPTT recursion is embedded in the PT feature: for the seeded dynamics,
// pt = (aPTT - baseline) / aptt_scale holds at every step, so a policy that
// only sees the 16 features can still observe the anticoagulation state.

#include "omgrl/config.hpp"
#include "omgrl/data.hpp"
#include "omgrl/mdp.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace omgrl::synth {

struct SynthConfig {
  int state_dim = kStateDim;
  int n_actions = kNumActions;
  double noise_std = 0.05;
  std::array<double, kNumActions> aptt_gains = {0.0, 4.0, 9.0, 14.0, 20.0, 26.0};
  double aptt_drift = 0.25;
  double baseline_aptt = 30.0;
  double aptt_scale = 40.0;
  double target_aptt = 80.0;
  double expert_epsilon = 0.05;
  // 0 samples horizons uniformly in [min_horizon, max_horizon].
  int horizon = 0;
  int min_horizon = 7;
  int max_horizon = 72;
  double initial_aptt_min = 20.0;
  double initial_aptt_max = 140.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Keys under [synth]; absent keys keep their defaults.
SynthConfig from_config(const Config& cfg);
void save_config(const std::string& path, const SynthConfig& c);
SynthConfig load_config(const std::string& path);

struct GroundTruthDynamics {
  Eigen::Matrix<double, kStateDim, kStateDim> transition;        // A
  Eigen::Matrix<double, kStateDim, kNumActions> action_effects;  // column a is B_a
  std::array<double, kNumActions> aptt_gains{};
  double aptt_drift = 0.0;
  double baseline_aptt = 30.0;
  double aptt_scale = 40.0;
  // Feature whose noise also drives aPTT; -1 for an independent aPTT channel.
  int aptt_feature = kFeaturePt;

  // Seeded construction with spectral radius of A below one.
  static GroundTruthDynamics generate(const SynthConfig& c);
  double spectral_radius() const;
  // aPTT after one step without noise.
  double mean_next_aptt(double aptt, ActionClass a) const;
};

// Dose levels used when exporting synthetic trajectories to CSV.
BinEdges dose_bin_edges();

class SynthEnv final : public Environment {
 public:
  SynthEnv(GroundTruthDynamics dynamics, double noise_std)
      : dynamics_(std::move(dynamics)), noise_std_(noise_std) {}
  explicit SynthEnv(const SynthConfig& c) : SynthEnv(GroundTruthDynamics::generate(c), c.noise_std) {}

  // s' = A s + B_a + eps, eps ~ N(0, sigma^2 I);
  // aPTT' = aPTT + drift (baseline - aPTT) + gain_a + aptt_scale * eps[aptt_feature];
  // reward = r_p(aPTT').
  StepResult step(const PatientState& s, ActionClass a, Rng& rng) const override;

  // Noise-free expected reward r_p(mean aPTT').
  double mean_reward(const PatientState& s, ActionClass a) const;

  PatientState initial_state(Rng& rng, double aptt_min, double aptt_max) const;
  const GroundTruthDynamics& dynamics() const { return dynamics_; }
  double noise_std() const { return noise_std_; }

 private:
  GroundTruthDynamics dynamics_;
  double noise_std_;
};

// Proportional aPTT controller with epsilon-uniform noise. Reads the raw aPTT
// carried with the state, so it works on raw and normalized states alike.
class ExpertPolicy final : public Policy {
 public:
  ExpertPolicy(const GroundTruthDynamics& dynamics, double target_aptt, double epsilon)
      : dynamics_(dynamics), target_(target_aptt), epsilon_(epsilon) {}

  ActionProbs probabilities(const PatientState& s) const override;
  ActionClass controller_action(double aptt) const;

 private:
  GroundTruthDynamics dynamics_;
  double target_;
  double epsilon_;
};

// One trajectory per patient; patient i uses the RNG stream (seed, i).
std::vector<Trajectory> generate_expert_dataset(const SynthConfig& c, int n_patients);
std::vector<Trajectory> generate_dataset(const SynthConfig& c, const Policy& policy, int n_patients);

}  // namespace omgrl::synth
