#pragma once

// Policy evaluation: simulated returns under r_p or r_psi, behavior-policy
// estimation, weighted importance sampling, treatment success, clinician
// agreement and dosing tendencies, plus CSV report writers.

#include "omgrl/data.hpp"
#include "omgrl/mdp.hpp"
#include "omgrl/nn.hpp"
#include "omgrl/reward.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace omgrl::eval {

struct EvalReport {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;           // sample standard deviation of `values`
  std::vector<double> values;  // one per run (episode or seed)
  int episodes = 0;
  int steps = 0;
  std::string fingerprint;
};

EvalReport make_report(std::string metric, std::vector<double> values, int episodes, int steps);
// Report over per-seed means of several reports of the same metric.
EvalReport aggregate(const std::vector<EvalReport>& per_seed);

// Reward used when scoring simulated episodes: the environment's own reward
// (r_p for the synthetic env) or a learned reward network.
struct RewardSource {
  const reward::RewardNet* net = nullptr;  // null selects r_p

  static RewardSource rp() { return {}; }
  static RewardSource rpsi(const reward::RewardNet& n) { return {&n}; }
  bool is_rp() const { return net == nullptr; }
};

// Per-step rewards of each simulated episode. Episode e draws its initial
// state uniformly from `initial_states`, then alternates one action sample
// and one environment step.
std::vector<std::vector<double>> simulate_episodes(const Policy& policy, const Environment& env,
                                                   const std::vector<PatientState>& initial_states,
                                                   int episodes, int steps, const RewardSource& source,
                                                   Rng& rng);

// Mean undiscounted return over seeded episodes.
EvalReport evaluate_return(const Policy& policy, const Environment& env,
                           const std::vector<PatientState>& initial_states, int episodes, int steps,
                           const RewardSource& source, Rng& rng);

inline constexpr double kBehaviorFloor = 1e-3;

struct BehaviorConfig {
  std::vector<int> hidden = {32, 32};
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  int epochs = 30;
  int batch_size = 64;
  double validation_fraction = 0.2;
  double floor = kBehaviorFloor;
  std::uint64_t seed = 1;
};

class BehaviorPolicy final : public Policy {
 public:
  BehaviorPolicy() = default;
  BehaviorPolicy(nn::DenseNet classifier, double floor);

  // Raw softmax output; the floor is applied by floored().
  ActionProbs probabilities(const PatientState& s) const override;
  std::vector<ActionProbs> probabilities(const std::vector<PatientState>& states) const override;
  double floored(const PatientState& s, ActionClass a) const;

  const nn::DenseNet& classifier() const { return net_; }
  double floor() const { return floor_; }

 private:
  nn::DenseNet net_;
  double floor_ = kBehaviorFloor;
};

struct BehaviorFit {
  BehaviorPolicy policy;
  double heldout_accuracy = 0.0;
  bool single_class = false;  // warning: the data contain one action only
};

// Cross-entropy fit of logged actions given states.
BehaviorFit fit_behavior_policy(const std::vector<Transition>& data, const BehaviorConfig& config);

struct WisConfig {
  double gamma = 0.99;
  double floor = kBehaviorFloor;
  double ratio_min = 1e-4;
  double ratio_max = 1e4;
};

struct WisResult {
  double estimate = 0.0;
  std::vector<double> ratios;
  std::vector<double> returns;
};

double discounted_return(const Trajectory& t, double gamma);

// sum_i rho_i G_i / sum_i rho_i. Throws DegenerateEstimateError if every
// ratio sits at the clip floor.
double weighted_estimate(const std::vector<double>& ratios, const std::vector<double>& returns,
                         double ratio_min = 0.0);

WisResult wis_estimate(const Policy& eval_policy, const BehaviorPolicy& behavior,
                       const std::vector<Trajectory>& trajectories, const WisConfig& config = {});

struct SuccessConfig {
  int episodes = 380;
  int steps = 36;
  double threshold = 0.8;
  int duration = 2;
};

// True when some run of at least `duration` consecutive rewards exceeds
// `threshold`.
bool episode_succeeds(const std::vector<double>& rewards, double threshold, int duration);

EvalReport success_rate(const Policy& policy, const Environment& env,
                        const std::vector<PatientState>& initial_states, const SuccessConfig& config,
                        Rng& rng);

struct AgreementMatrix {
  Eigen::Matrix<double, kNumActions, kNumActions> rates = Eigen::Matrix<double, kNumActions, kNumActions>::Zero();
  std::array<long, kNumActions> support{};  // logged actions per row

  bool row_empty(int i) const { return support[static_cast<std::size_t>(i)] == 0; }
};

// Row i: distribution of the policy's greedy action over states where the
// clinician chose i.
AgreementMatrix agreement_matrix(const Policy& policy, const std::vector<Trajectory>& trajectories);

struct TendencyCurve {
  std::string indicator;
  std::vector<double> edges;  // bins + 1
  std::vector<long> counts;
  std::vector<double> policy_mean;     // mean greedy action index, 0 if empty
  std::vector<double> clinician_mean;  // mean logged action index, 0 if empty

  bool empty(std::size_t bin) const { return counts[bin] == 0; }
};

// Indicator: any feature name or "aptt". Raw indicator values are read from
// `raw`; the policy sees `policy_states` (same trajectories, possibly
// normalized) when given.
TendencyCurve dosing_tendency(const Policy& policy, const std::vector<Trajectory>& raw,
                              const std::string& indicator, int bins,
                              const std::vector<Trajectory>* policy_states = nullptr);

// One row per value plus mean and std rows.
void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports);
void write_agreement_csv(std::ostream& out, const AgreementMatrix& m);
void write_tendency_csv(std::ostream& out, const TendencyCurve& curve);

struct LongRow {
  std::string metric;
  double x = 0.0;
  double y = 0.0;
  std::string series;
};
void write_long_csv(std::ostream& out, const std::vector<LongRow>& rows);

// Spearman rank correlation; tied values share their average rank.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// (v - min) / (max - min) across the values; all zeros when the range is 0.
std::vector<double> minmax_normalize(const std::vector<double>& values);

}  // namespace omgrl::eval
