#pragma once

// Training loops: OMG-RL (rollouts, reward learning, conservative
// actor-critic), the COMBO ablation with the fixed reward and the model-free
// ablation without rollouts. Includes metric logging and resumable run
// checkpoints.

#include "omgrl/agent.hpp"
#include "omgrl/data.hpp"
#include "omgrl/dynamics.hpp"
#include "omgrl/eval.hpp"
#include "omgrl/reward.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace omgrl::orchestrator {

enum class Mode { omgrl, combo, modelfree };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct TrainConfig {
  Mode mode = Mode::omgrl;
  int epochs = 500;
  int reward_steps = 10;       // K reward updates per epoch
  int updates_per_epoch = 1;   // critic + actor updates per epoch
  dynamics::RolloutConfig rollout{};
  agent::AgentConfig agent{};
  reward::RewardConfig reward{};
  int eval_interval = 10;      // 0 disables evaluation
  int eval_episodes = 32;
  int eval_steps = 36;
  std::size_t sample_capacity = 100000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MetricRow {
  int epoch = 0;
  double bellman_loss = 0.0;
  double cql_penalty = 0.0;
  double policy_loss = 0.0;
  std::optional<double> reward_loss;
  std::optional<double> eval_rp;
  std::optional<double> eval_rpsi;

  bool operator==(const MetricRow&) const = default;
};

// epoch,bellman_loss,cql_penalty,policy_loss,reward_loss,eval_rp,eval_rpsi
const std::vector<std::string>& metric_columns();
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

struct TrainState {
  agent::Actor actor;
  agent::Critic critic;
  reward::RewardNet reward_net;
  ReplayBuffer d_sample;
  Rng rng;
  int epoch = 0;
  long reward_steps = 0;
  long critic_steps = 0;
  long actor_steps = 0;
  long rollout_transitions = 0;
  std::vector<MetricRow> metrics;
  // Size and content hash of the batch data the run was started on.
  std::string batch_provenance;

  bool operator==(const TrainState&) const = default;
};

struct TrainData {
  std::vector<Trajectory> batch;  // D_batch (= D_expert), normalized
  const dynamics::DynamicsEnsemble* ensemble = nullptr;
  // Environment for evaluation returns; may be null when no evaluation runs.
  const Environment* eval_env = nullptr;
  std::vector<PatientState> eval_initial_states;
};

std::string batch_provenance(const std::vector<Trajectory>& batch);

class Trainer {
 public:
  Trainer(TrainConfig config, TrainData data);
  // Continues from a restored state; the batch provenance must match.
  Trainer(TrainConfig config, TrainData data, TrainState resumed);

  // One epoch: rollouts, K reward steps (omgrl), critic and actor updates,
  // evaluation at the configured interval. Throws NumericError on any
  // non-finite loss; the state is then unusable and should be discarded.
  const MetricRow& run_epoch();
  // Runs epochs until state().epoch == last_epoch, calling `after_epoch`
  // after each completed one.
  void run(int last_epoch, const std::function<void(const TrainState&)>& after_epoch = {});

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }

 private:
  void init_buffers();
  double lambda() const;
  double reward_phase(const std::vector<reward::Segment>& rollout_segments);
  std::optional<double> evaluate(const eval::RewardSource& source) const;

  TrainConfig config_;
  TrainData data_;
  ReplayBuffer d_batch_;
  std::vector<PatientState> initial_states_;
  TrainState state_;
};

// Fresh training state for a config (all networks seeded from config.seed).
TrainState initial_state(const TrainConfig& config, const std::vector<Trajectory>& batch);

// Runs config.epochs epochs in the given mode.
TrainState train_omgrl(TrainConfig config, TrainData data);
TrainState train_combo(TrainConfig config, TrainData data);
TrainState train_modelfree(TrainConfig config, TrainData data);

// "OMGRL-RUN v1": counters, RNG, metric history, embedded agent and reward
// checkpoints and the full D_sample contents.
void save_run(std::ostream& out, const TrainState& state, const TrainConfig& config,
              const std::string& config_fingerprint);
TrainState load_run(std::istream& in, std::string* config_fingerprint = nullptr);
// Writes through a temporary file so a failed save keeps the previous checkpoint.
void save_run(const std::string& path, const TrainState& state, const TrainConfig& config,
              const std::string& config_fingerprint);
TrainState load_run(const std::string& path, std::string* config_fingerprint = nullptr);

}  // namespace omgrl::orchestrator
