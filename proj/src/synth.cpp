#include "omgrl/synth.hpp"

#include "omgrl/config.hpp"
#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>

namespace omgrl::synth {

void SynthConfig::validate() const {
  if (state_dim != kStateDim || n_actions != kNumActions) {
    throw ArgumentError("synthetic MDP is fixed at 16 features and 6 actions");
  }
  if (!(noise_std >= 0.0)) throw ArgumentError("noise_std must be >= 0");
  for (int a = 1; a < kNumActions; ++a) {
    if (!(aptt_gains[a] > aptt_gains[a - 1])) {
      throw ArgumentError("aPTT gains must be strictly increasing in the action index");
    }
  }
  if (!(aptt_drift >= 0.0 && aptt_drift < 1.0)) throw ArgumentError("aptt_drift must lie in [0, 1)");
  if (!(aptt_scale > 0.0)) throw ArgumentError("aptt_scale must be positive");
  if (horizon < 0 || min_horizon < 1 || max_horizon < min_horizon) {
    throw ArgumentError("invalid horizon bounds");
  }
  if (!(expert_epsilon >= 0.0 && expert_epsilon <= 1.0)) throw ArgumentError("expert_epsilon must lie in [0, 1]");
  if (!(initial_aptt_max >= initial_aptt_min)) throw ArgumentError("invalid initial aPTT range");
}

namespace {

Config to_config(const SynthConfig& c) {
  Config out;
  auto put = [&](const std::string& k, double v) { out.set("synth." + k, textio::format_double(v)); };
  put("noise_std", c.noise_std);
  for (int a = 0; a < kNumActions; ++a) put("gain_" + std::to_string(a), c.aptt_gains[a]);
  put("aptt_drift", c.aptt_drift);
  put("baseline_aptt", c.baseline_aptt);
  put("aptt_scale", c.aptt_scale);
  put("target_aptt", c.target_aptt);
  put("expert_epsilon", c.expert_epsilon);
  put("initial_aptt_min", c.initial_aptt_min);
  put("initial_aptt_max", c.initial_aptt_max);
  out.set("synth.horizon", std::to_string(c.horizon));
  out.set("synth.min_horizon", std::to_string(c.min_horizon));
  out.set("synth.max_horizon", std::to_string(c.max_horizon));
  out.set("synth.seed", std::to_string(c.seed));
  return out;
}

}  // namespace

void save_config(const std::string& path, const SynthConfig& c) { to_config(c).save(path); }

SynthConfig load_config(const std::string& path) { return from_config(Config::load(path)); }

SynthConfig from_config(const Config& cfg) {
  SynthConfig c;
  c.noise_std = cfg.get_double("synth.noise_std", c.noise_std);
  for (int a = 0; a < kNumActions; ++a) {
    c.aptt_gains[a] = cfg.get_double("synth.gain_" + std::to_string(a), c.aptt_gains[a]);
  }
  c.aptt_drift = cfg.get_double("synth.aptt_drift", c.aptt_drift);
  c.baseline_aptt = cfg.get_double("synth.baseline_aptt", c.baseline_aptt);
  c.aptt_scale = cfg.get_double("synth.aptt_scale", c.aptt_scale);
  c.target_aptt = cfg.get_double("synth.target_aptt", c.target_aptt);
  c.expert_epsilon = cfg.get_double("synth.expert_epsilon", c.expert_epsilon);
  c.initial_aptt_min = cfg.get_double("synth.initial_aptt_min", c.initial_aptt_min);
  c.initial_aptt_max = cfg.get_double("synth.initial_aptt_max", c.initial_aptt_max);
  c.horizon = static_cast<int>(cfg.get_int("synth.horizon", c.horizon));
  c.min_horizon = static_cast<int>(cfg.get_int("synth.min_horizon", c.min_horizon));
  c.max_horizon = static_cast<int>(cfg.get_int("synth.max_horizon", c.max_horizon));
  c.seed = cfg.get_u64("synth.seed", c.seed);
  c.validate();
  return c;
}

GroundTruthDynamics GroundTruthDynamics::generate(const SynthConfig& c) {
  c.validate();
  Rng rng = derive_rng(c.seed, 0x5eedULL);
  GroundTruthDynamics d;
  d.aptt_gains = c.aptt_gains;
  d.aptt_drift = c.aptt_drift;
  d.baseline_aptt = c.baseline_aptt;
  d.aptt_scale = c.aptt_scale;
  d.aptt_feature = kFeaturePt;

  // Random coupling among the non-aPTT features, rescaled to spectral radius 0.9.
  constexpr int kOther = kStateDim - 1;
  Eigen::Matrix<double, kOther, kOther> sub;
  for (int i = 0; i < kOther; ++i) {
    for (int j = 0; j < kOther; ++j) sub(i, j) = standard_normal(rng) / std::sqrt(double(kOther));
  }
  const double radius = Eigen::EigenSolver<decltype(sub)>(sub).eigenvalues().cwiseAbs().maxCoeff();
  sub *= 0.9 / radius;

  auto full_index = [](int k) { return k < kFeaturePt ? k : k + 1; };
  d.transition.setZero();
  for (int i = 0; i < kOther; ++i) {
    for (int j = 0; j < kOther; ++j) d.transition(full_index(i), full_index(j)) = sub(i, j);
  }
  // The PT row only carries the aPTT recursion; other features may read PT.
  d.transition(kFeaturePt, kFeaturePt) = 1.0 - c.aptt_drift;
  for (int i = 0; i < kOther; ++i) d.transition(full_index(i), kFeaturePt) = 0.1 * standard_normal(rng);
  d.transition(kFeatureInr, kFeaturePt) = 0.5;

  Eigen::Matrix<double, kStateDim, 1> dose_response;
  for (int i = 0; i < kStateDim; ++i) dose_response[i] = 0.05 * standard_normal(rng);
  for (int a = 0; a < kNumActions; ++a) {
    d.action_effects.col(a) = static_cast<double>(a) * dose_response;
    d.action_effects(kFeaturePt, a) = c.aptt_gains[a] / c.aptt_scale;
  }
  return d;
}

double GroundTruthDynamics::spectral_radius() const {
  return Eigen::EigenSolver<Eigen::Matrix<double, kStateDim, kStateDim>>(transition)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

double GroundTruthDynamics::mean_next_aptt(double aptt, ActionClass a) const {
  return aptt + aptt_drift * (baseline_aptt - aptt) + aptt_gains[a.index()];
}

BinEdges dose_bin_edges() { return {200.0, 600.0, 1000.0, 1400.0, 1800.0}; }

StepResult SynthEnv::step(const PatientState& s, ActionClass a, Rng& rng) const {
  StateVector eps;
  for (int i = 0; i < kStateDim; ++i) eps[i] = noise_std_ * standard_normal(rng);
  StepResult r;
  r.next.features = dynamics_.transition * s.features + dynamics_.action_effects.col(a.index()) + eps;
  double aptt_noise = 0.0;
  if (dynamics_.aptt_feature >= 0) aptt_noise = dynamics_.aptt_scale * eps[dynamics_.aptt_feature];
  r.next.aptt = dynamics_.mean_next_aptt(s.aptt, a) + aptt_noise;
  r.reward = rp_reward(r.next.aptt);
  return r;
}

double SynthEnv::mean_reward(const PatientState& s, ActionClass a) const {
  return rp_reward(dynamics_.mean_next_aptt(s.aptt, a));
}

PatientState SynthEnv::initial_state(Rng& rng, double aptt_min, double aptt_max) const {
  PatientState s;
  for (int i = 0; i < kStateDim; ++i) s.features[i] = standard_normal(rng);
  s.aptt = uniform_real(rng, aptt_min, aptt_max);
  if (dynamics_.aptt_feature >= 0) {
    s.features[dynamics_.aptt_feature] = (s.aptt - dynamics_.baseline_aptt) / dynamics_.aptt_scale;
  }
  return s;
}

ActionClass ExpertPolicy::controller_action(double aptt) const {
  int best = 0;
  double best_gap = std::abs(dynamics_.mean_next_aptt(aptt, ActionClass(0)) - target_);
  for (int a = 1; a < kNumActions; ++a) {
    const double gap = std::abs(dynamics_.mean_next_aptt(aptt, ActionClass(a)) - target_);
    if (gap < best_gap) {
      best = a;
      best_gap = gap;
    }
  }
  return ActionClass(best);
}

ActionProbs ExpertPolicy::probabilities(const PatientState& s) const {
  ActionProbs p;
  p.fill(epsilon_ / kNumActions);
  p[controller_action(s.aptt).index()] += 1.0 - epsilon_;
  return p;
}

std::vector<Trajectory> generate_dataset(const SynthConfig& c, const Policy& policy, int n_patients) {
  if (n_patients < 1) throw ArgumentError("n_patients must be >= 1");
  c.validate();
  const SynthEnv env(c);
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_patients));
  for (int i = 0; i < n_patients; ++i) {
    Rng rng = derive_rng(c.seed, static_cast<std::uint64_t>(i) + 1);
    const int horizon = c.horizon > 0
                            ? c.horizon
                            : static_cast<int>(c.min_horizon +
                                               uniform_index(rng, static_cast<std::size_t>(c.max_horizon - c.min_horizon + 1)));
    Trajectory traj;
    char id[16];
    std::snprintf(id, sizeof(id), "P%05d", i + 1);
    traj.patient_id = id;
    PatientState s = env.initial_state(rng, c.initial_aptt_min, c.initial_aptt_max);
    for (int t = 0; t < horizon; ++t) {
      const ActionClass a = policy.act(s, rng);
      StepResult r = env.step(s, a, rng);
      traj.transitions.push_back({s, a, r.reward, r.next, false});
      s = r.next;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> generate_expert_dataset(const SynthConfig& c, int n_patients) {
  const ExpertPolicy expert(GroundTruthDynamics::generate(c), c.target_aptt, c.expert_epsilon);
  return generate_dataset(c, expert, n_patients);
}

}  // namespace omgrl::synth
