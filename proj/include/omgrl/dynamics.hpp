#pragma once

// Ensemble of probabilistic dynamics models T(s', r | s, a) = N(mu, diag(sigma^2)),
// trained by maximum likelihood, plus the dyna-style rollout engine.

#include "omgrl/data.hpp"
#include "omgrl/mdp.hpp"
#include "omgrl/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace omgrl::dynamics {

inline constexpr int kInputDim = kStateDim + kNumActions;  // state ++ one-hot action
inline constexpr int kOutputDim = kStateDim + 1;           // next state ++ reward

struct DynamicsConfig {
  std::vector<int> hidden = {64, 64, 64};  // four fully-connected layers
  nn::Activation activation = nn::Activation::relu;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  int epochs = 60;
  int batch_size = 64;
  int members = 7;
  int keep = 5;
  std::uint64_t seed = 1;
};

// (22 x n) network inputs.
Eigen::MatrixXd encode_inputs(const std::vector<PatientState>& states,
                              const std::vector<ActionClass>& actions);
Eigen::MatrixXd encode_inputs(const std::vector<Transition>& batch);

class ProbabilisticDynamicsModel {
 public:
  ProbabilisticDynamicsModel() = default;
  explicit ProbabilisticDynamicsModel(nn::DenseNet net);
  static ProbabilisticDynamicsModel create(const DynamicsConfig& config, Rng& rng);

  struct Prediction {
    Eigen::MatrixXd mean;     // (17 x n): next-state features then reward
    Eigen::MatrixXd log_var;  // (17 x n), inside the soft clamp bounds
  };
  // The network predicts the state change; the returned mean is absolute.
  Prediction predict(const Eigen::MatrixXd& inputs) const;
  Prediction predict(const std::vector<PatientState>& states,
                     const std::vector<ActionClass>& actions) const;

  // Mean Gaussian NLL per sample over a set of transitions.
  double mean_nll(const std::vector<Transition>& data) const;

  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }

 private:
  nn::DenseNet net_;
};

// Network-space regression targets: [s' - s; r].
Eigen::MatrixXd encode_targets(const std::vector<Transition>& batch);

// Mean NLL over the batch and dLoss/dOutput for the Gaussian head.
struct BatchNll {
  double loss = 0.0;
  Eigen::MatrixXd upstream;
};
BatchNll batch_gaussian_nll(const Eigen::MatrixXd& head_output, const Eigen::MatrixXd& targets);

struct TrainedMember {
  ProbabilisticDynamicsModel model;
  int index = 0;
  double val_nll = 0.0;
  std::vector<double> train_curve;  // full-train-set NLL after each epoch
  std::vector<double> val_curve;
  bool failed = false;
  std::string diagnostic;
};

// Trains config.members models that differ by initialization and shuffling
// seeds. Members with a non-finite loss are marked failed; if fewer than
// config.keep survive, throws NumericError.
std::vector<TrainedMember> train_dynamics(const std::vector<Transition>& train,
                                          const std::vector<Transition>& val,
                                          const DynamicsConfig& config);

struct DynamicsEnsemble {
  std::vector<ProbabilisticDynamicsModel> members;
  std::vector<double> val_nll;  // ascending
  std::string normalizer_fingerprint;

  std::size_t size() const { return members.size(); }
};

// Keeps the k members with the lowest validation NLL; ties go to the lower
// member index. Failed members are never selected.
DynamicsEnsemble select_top(const std::vector<TrainedMember>& members, int k);

struct EnsembleSample {
  StateVector next_state;
  double reward = 0.0;
  int member = 0;
};

// Uniform member choice, then a draw from its diagonal Gaussian. noise_scale
// multiplies the standard deviation (0 returns the member's mean).
EnsembleSample ensemble_sample(const DynamicsEnsemble& ensemble, const PatientState& state,
                               ActionClass action, Rng& rng, double noise_scale = 1.0);

// The ensemble as an environment over normalized states. Successor aPTT is
// not modeled and is reported as 0.
class EnsembleEnvironment final : public Environment {
 public:
  explicit EnsembleEnvironment(const DynamicsEnsemble& ensemble, double noise_scale = 1.0)
      : ensemble_(ensemble), noise_scale_(noise_scale) {}
  StepResult step(const PatientState& s, ActionClass a, Rng& rng) const override;
  std::vector<StepResult> step_batch(const std::vector<PatientState>& states,
                                     const std::vector<ActionClass>& actions, Rng& rng) const override;

 private:
  const DynamicsEnsemble& ensemble_;
  double noise_scale_;
};

struct RolloutConfig {
  int horizon = 5;
  int batch = 64;
  std::uint64_t seed = 1;
};

struct RolloutResult {
  std::size_t added = 0;
  std::vector<std::vector<Transition>> segments;  // one per surviving branch
  int rejected_samples = 0;
  int dropped_branches = 0;
};

inline constexpr int kMaxRedraws = 10;

// b branches of h steps each from initial states drawn uniformly from
// `initial_states`; actions sampled from the policy. Appends b*h transitions
// to `sink` (branches whose sample stays non-finite after kMaxRedraws redraws
// are dropped).
RolloutResult rollout_batch(const Environment& model, const Policy& policy,
                            const std::vector<PatientState>& initial_states, const RolloutConfig& config,
                            ReplayBuffer& sink, Rng& rng);

// "OMGRL-DYN v1"
void save_ensemble(std::ostream& out, const DynamicsEnsemble& ensemble);
DynamicsEnsemble load_ensemble(std::istream& in);
void save_ensemble(const std::string& path, const DynamicsEnsemble& ensemble);
DynamicsEnsemble load_ensemble(const std::string& path);

}  // namespace omgrl::dynamics
