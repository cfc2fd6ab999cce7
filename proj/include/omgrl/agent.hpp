#pragma once

// Discrete soft actor-critic with a conservative (CQL-style) critic objective
// over a lambda-mixture of batch and model-rollout data.

#include "omgrl/data.hpp"
#include "omgrl/mdp.hpp"
#include "omgrl/nn.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace omgrl::agent {

struct CqlConfig {
  double alpha = 1.0;   // conservatism weight
  double lambda = 0.5;  // fraction of each batch drawn from D_batch
  double gamma = 0.99;

  void validate() const;
};

struct AgentConfig {
  std::vector<int> hidden = {64, 64};  // three fully-connected layers
  nn::Activation activation = nn::Activation::relu;
  nn::AdamConfig critic_adam{};
  nn::AdamConfig actor_adam{};
  double entropy_temperature = 0.05;
  double target_tau = 0.005;
  CqlConfig cql{};
  int batch_size = 128;
  // |cql_penalty| above this is reported as a warning.
  double penalty_ceiling = 1e4;
};

// (16 x n) feature matrix.
Eigen::MatrixXd state_matrix(const std::vector<PatientState>& states);

class Critic {
 public:
  Critic() = default;
  Critic(nn::DenseNet q_net, double tau, nn::AdamConfig adam);
  static Critic create(const AgentConfig& config, Rng& rng);

  // (6 x n) Q-values of the online / target network.
  Eigen::MatrixXd q_values(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd target_q_values(const Eigen::MatrixXd& states) const;

  // target <- tau * online + (1 - tau) * target
  void soft_update();

  nn::DenseNet& online() { return online_; }
  const nn::DenseNet& online() const { return online_; }
  nn::DenseNet& target() { return target_; }
  const nn::DenseNet& target() const { return target_; }
  nn::AdamState& adam() { return adam_; }
  const nn::AdamState& adam() const { return adam_; }
  double tau() const { return tau_; }

  bool operator==(const Critic& o) const {
    return online_ == o.online_ && target_ == o.target_ && adam_ == o.adam_ && tau_ == o.tau_;
  }

 private:
  nn::DenseNet online_;
  nn::DenseNet target_;
  nn::AdamState adam_;
  double tau_ = 0.005;
};

class Actor final : public Policy {
 public:
  Actor() = default;
  Actor(nn::DenseNet policy_net, double entropy_temperature, nn::AdamConfig adam);
  static Actor create(const AgentConfig& config, Rng& rng);

  ActionProbs probabilities(const PatientState& s) const override;
  std::vector<ActionProbs> probabilities(const std::vector<PatientState>& states) const override;
  // (6 x n) probabilities and log-probabilities.
  Eigen::MatrixXd probability_matrix(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd log_probability_matrix(const Eigen::MatrixXd& states) const;

  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }
  nn::AdamState& adam() { return adam_; }
  const nn::AdamState& adam() const { return adam_; }
  double entropy_temperature() const { return entropy_temperature_; }

  bool operator==(const Actor& o) const {
    return net_ == o.net_ && adam_ == o.adam_ && entropy_temperature_ == o.entropy_temperature_;
  }

 private:
  nn::DenseNet net_;
  nn::AdamState adam_;
  double entropy_temperature_ = 0.05;
};

enum class Origin { batch, model };

struct MixedBatch {
  std::vector<Transition> transitions;
  std::vector<Origin> origins;

  std::size_t size() const { return transitions.size(); }
  std::vector<PatientState> states() const;
};

// ceil(lambda * n) transitions from D_batch and the rest from D_sample, each
// uniform (without replacement when the buffer is large enough).
MixedBatch sample_mixed_batch(const ReplayBuffer& d_batch, const ReplayBuffer& d_sample, std::size_t n,
                              double lambda, Rng& rng);

struct CriticLoss {
  double total = 0.0;
  double bellman = 0.0;
  double cql_penalty = 0.0;  // alpha * (E_rho[Q] - E_batch[Q])
  nn::Params grads;
};

// Loss and exact gradient with respect to the online critic parameters.
// `rewards`, when given, replaces the stored transition rewards.
CriticLoss critic_loss(const Critic& critic, const Actor& actor, const MixedBatch& batch,
                       const CqlConfig& cql, double entropy_temperature,
                       const std::optional<Eigen::VectorXd>& rewards = std::nullopt);

// Bellman targets r + gamma * E_{a'~pi}[Q_target(s', a') - alpha_ent log pi(a'|s')].
Eigen::VectorXd bellman_targets(const Critic& critic, const Actor& actor, const MixedBatch& batch,
                                double gamma, double entropy_temperature, const Eigen::VectorXd& rewards);

// One Adam step on the critic followed by the soft target update.
CriticLoss conservative_critic_update(Critic& critic, const Actor& actor, const MixedBatch& batch,
                                      const CqlConfig& cql, double entropy_temperature,
                                      const std::optional<Eigen::VectorXd>& rewards = std::nullopt);

struct PolicyLoss {
  double loss = 0.0;
  nn::Params grads;
};

// E_s[sum_a pi(a|s) (alpha_ent log pi(a|s) - Q(s, a))] and its gradient.
PolicyLoss policy_loss(const Actor& actor, const Critic& critic, const std::vector<PatientState>& states);
double policy_improvement(Actor& actor, const Critic& critic, const std::vector<PatientState>& states);

// "OMGRL-AGT v1"
void save_agent(std::ostream& out, const Actor& actor, const Critic& critic, const CqlConfig& cql);
void load_agent(std::istream& in, Actor& actor, Critic& critic, CqlConfig& cql);

}  // namespace omgrl::agent
