#include "omgrl/agent.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <cmath>

namespace omgrl::agent {

void CqlConfig::validate() const {
  if (!(alpha >= 0.0)) throw ArgumentError("cql alpha must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
}

Eigen::MatrixXd state_matrix(const std::vector<PatientState>& states) {
  Eigen::MatrixXd m(kStateDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = states[i].features;
  return m;
}

namespace {

std::vector<int> sizes_for(const AgentConfig& config) {
  std::vector<int> sizes{kStateDim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(kNumActions);
  return sizes;
}

}  // namespace

Critic::Critic(nn::DenseNet q_net, double tau, nn::AdamConfig adam)
    : online_(std::move(q_net)), target_(online_), adam_(nn::AdamState::for_net(online_, adam)), tau_(tau) {
  if (online_.input_dim() != kStateDim || online_.output_dim() != kNumActions ||
      online_.output_head() != nn::OutputHead::linear) {
    throw ShapeError("critic must map 16 features to 6 linear Q-values");
  }
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("target_tau must lie in (0, 1]");
}

Critic Critic::create(const AgentConfig& config, Rng& rng) {
  return Critic(nn::DenseNet::initialized(sizes_for(config), config.activation, nn::OutputHead::linear, rng),
                config.target_tau, config.critic_adam);
}

Eigen::MatrixXd Critic::q_values(const Eigen::MatrixXd& states) const {
  return nn::forward(online_, states).output;
}

Eigen::MatrixXd Critic::target_q_values(const Eigen::MatrixXd& states) const {
  return nn::forward(target_, states).output;
}

void Critic::soft_update() {
  auto& dst = target_.params();
  const auto& src = online_.params();
  for (std::size_t l = 0; l < dst.size(); ++l) {
    dst[l].weight = tau_ * src[l].weight + (1.0 - tau_) * dst[l].weight;
    dst[l].bias = tau_ * src[l].bias + (1.0 - tau_) * dst[l].bias;
  }
}

Actor::Actor(nn::DenseNet policy_net, double entropy_temperature, nn::AdamConfig adam)
    : net_(std::move(policy_net)),
      adam_(nn::AdamState::for_net(net_, adam)),
      entropy_temperature_(entropy_temperature) {
  if (net_.input_dim() != kStateDim || net_.output_dim() != kNumActions ||
      net_.output_head() != nn::OutputHead::softmax) {
    throw ShapeError("actor must map 16 features to a 6-way softmax");
  }
  if (!(entropy_temperature >= 0.0)) throw ArgumentError("entropy temperature must be >= 0");
}

Actor Actor::create(const AgentConfig& config, Rng& rng) {
  return Actor(nn::DenseNet::initialized(sizes_for(config), config.activation, nn::OutputHead::softmax, rng),
               config.entropy_temperature, config.actor_adam);
}

Eigen::MatrixXd Actor::probability_matrix(const Eigen::MatrixXd& states) const {
  return nn::forward(net_, states).output;
}

Eigen::MatrixXd Actor::log_probability_matrix(const Eigen::MatrixXd& states) const {
  return nn::log_softmax(nn::forward(net_, states).pre.back());
}

ActionProbs Actor::probabilities(const PatientState& s) const {
  const Eigen::VectorXd p = nn::forward(net_, Eigen::VectorXd(s.features));
  ActionProbs out;
  for (int a = 0; a < kNumActions; ++a) out[a] = p[a];
  return out;
}

std::vector<ActionProbs> Actor::probabilities(const std::vector<PatientState>& states) const {
  const Eigen::MatrixXd p = probability_matrix(state_matrix(states));
  std::vector<ActionProbs> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (int a = 0; a < kNumActions; ++a) out[i][a] = p(a, static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<PatientState> MixedBatch::states() const {
  std::vector<PatientState> out;
  out.reserve(transitions.size());
  for (const auto& t : transitions) out.push_back(t.state);
  return out;
}

MixedBatch sample_mixed_batch(const ReplayBuffer& d_batch, const ReplayBuffer& d_sample, std::size_t n,
                              double lambda, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
  const auto n_batch = static_cast<std::size_t>(std::ceil(lambda * static_cast<double>(n) - 1e-12));
  const std::size_t n_model = n - std::min(n, n_batch);
  if (n_batch > 0 && d_batch.empty()) throw StateError("sample_mixed_batch: D_batch is empty");
  if (n_model > 0 && d_sample.empty()) throw StateError("sample_mixed_batch: D_sample is empty");
  auto draw = [&](const ReplayBuffer& buf, std::size_t k) {
    return k <= buf.size() ? buf.sample(k, rng) : buf.sample_with_replacement(k, rng);
  };
  MixedBatch out;
  if (n_batch > 0) {
    out.transitions = draw(d_batch, n_batch);
    out.origins.assign(n_batch, Origin::batch);
  }
  if (n_model > 0) {
    auto model = draw(d_sample, n_model);
    out.transitions.insert(out.transitions.end(), model.begin(), model.end());
    out.origins.insert(out.origins.end(), n_model, Origin::model);
  }
  return out;
}

namespace {

Eigen::VectorXd stored_rewards(const MixedBatch& batch) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) r[static_cast<Eigen::Index>(i)] = batch.transitions[i].reward;
  return r;
}

std::vector<PatientState> next_states(const MixedBatch& batch) {
  std::vector<PatientState> out;
  out.reserve(batch.size());
  for (const auto& t : batch.transitions) out.push_back(t.next_state);
  return out;
}

}  // namespace

Eigen::VectorXd bellman_targets(const Critic& critic, const Actor& actor, const MixedBatch& batch,
                                double gamma, double entropy_temperature, const Eigen::VectorXd& rewards) {
  const Eigen::MatrixXd s_next = state_matrix(next_states(batch));
  const Eigen::MatrixXd q_next = critic.target_q_values(s_next);
  const nn::ForwardCache pi_next = nn::forward(actor.net(), s_next);
  const Eigen::MatrixXd log_pi_next = nn::log_softmax(pi_next.pre.back());
  const Eigen::RowVectorXd soft_value =
      (pi_next.output.array() * (q_next.array() - entropy_temperature * log_pi_next.array())).colwise().sum();
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const double bootstrap = batch.transitions[i].terminal ? 0.0 : gamma * soft_value[c];
    y[c] = rewards[c] + bootstrap;
  }
  return y;
}

CriticLoss critic_loss(const Critic& critic, const Actor& actor, const MixedBatch& batch, const CqlConfig& cql,
                       double entropy_temperature, const std::optional<Eigen::VectorXd>& rewards) {
  if (batch.size() == 0) throw ArgumentError("critic update needs a nonempty batch");
  const Eigen::VectorXd r = rewards ? *rewards : stored_rewards(batch);
  if (r.size() != static_cast<Eigen::Index>(batch.size())) throw ShapeError("reward vector length != batch size");
  const Eigen::VectorXd y = bellman_targets(critic, actor, batch, cql.gamma, entropy_temperature, r);
  if (!y.allFinite()) {
    throw NumericError("non-finite Bellman target (batch of " + std::to_string(batch.size()) +
                       ", reward range [" + std::to_string(r.minCoeff()) + ", " + std::to_string(r.maxCoeff()) + "])");
  }

  const Eigen::MatrixXd s = state_matrix(batch.states());
  const nn::ForwardCache cache = nn::forward(critic.online(), s);
  const Eigen::MatrixXd& q = cache.output;
  const Eigen::MatrixXd pi = actor.probability_matrix(s);
  const auto n = static_cast<double>(batch.size());
  std::size_t n_batch_origin = 0;
  for (auto o : batch.origins) n_batch_origin += (o == Origin::batch) ? 1 : 0;

  Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(kNumActions, q.cols());
  double rho_term = 0.0;
  double batch_term = 0.0;
  double bellman = 0.0;
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const int a = batch.transitions[static_cast<std::size_t>(i)].action.index();
    rho_term += pi.col(i).dot(q.col(i));
    const double err = q(a, i) - y[i];
    bellman += 0.5 * err * err;
    upstream(a, i) += err / n;
    if (cql.alpha != 0.0) {
      upstream.col(i) += (cql.alpha / n) * pi.col(i);
      if (batch.origins[static_cast<std::size_t>(i)] == Origin::batch) {
        batch_term += q(a, i);
        upstream(a, i) -= cql.alpha / static_cast<double>(n_batch_origin);
      }
    }
  }
  CriticLoss out;
  out.bellman = bellman / n;
  if (cql.alpha != 0.0) {
    const double batch_mean = n_batch_origin > 0 ? batch_term / static_cast<double>(n_batch_origin) : 0.0;
    out.cql_penalty = cql.alpha * (rho_term / n - batch_mean);
  }
  out.total = out.bellman + out.cql_penalty;
  out.grads = nn::backward(critic.online(), cache, upstream).params;
  return out;
}

CriticLoss conservative_critic_update(Critic& critic, const Actor& actor, const MixedBatch& batch,
                                      const CqlConfig& cql, double entropy_temperature,
                                      const std::optional<Eigen::VectorXd>& rewards) {
  CriticLoss loss = critic_loss(critic, actor, batch, cql, entropy_temperature, rewards);
  if (!std::isfinite(loss.total)) throw NumericError("non-finite critic loss");
  nn::adam_step(critic.online(), loss.grads, critic.adam());
  critic.soft_update();
  return loss;
}

PolicyLoss policy_loss(const Actor& actor, const Critic& critic, const std::vector<PatientState>& states) {
  if (states.empty()) throw ArgumentError("policy improvement needs a nonempty state batch");
  const Eigen::MatrixXd s = state_matrix(states);
  const Eigen::MatrixXd q = critic.q_values(s);
  const nn::ForwardCache cache = nn::forward(actor.net(), s);
  const Eigen::MatrixXd& pi = cache.output;
  const Eigen::MatrixXd log_pi = nn::log_softmax(cache.pre.back());
  const double temp = actor.entropy_temperature();
  const auto n = static_cast<double>(states.size());
  PolicyLoss out;
  out.loss = (pi.array() * (temp * log_pi.array() - q.array())).sum() / n;
  const Eigen::MatrixXd upstream = ((temp * (log_pi.array() + 1.0) - q.array()) / n).matrix();
  out.grads = nn::backward(actor.net(), cache, upstream).params;
  return out;
}

double policy_improvement(Actor& actor, const Critic& critic, const std::vector<PatientState>& states) {
  PolicyLoss loss = policy_loss(actor, critic, states);
  if (!std::isfinite(loss.loss)) throw NumericError("non-finite policy loss");
  nn::adam_step(actor.net(), loss.grads, actor.adam());
  return loss.loss;
}

void save_agent(std::ostream& out, const Actor& actor, const Critic& critic, const CqlConfig& cql) {
  textio::Writer w(out);
  w.magic("OMGRL-AGT v1");
  w.key("cql");
  w.value(cql.alpha);
  w.value(cql.lambda);
  w.value(cql.gamma);
  w.endl();
  w.key("entropy_temperature");
  w.value(actor.entropy_temperature());
  w.endl();
  w.key("target_tau");
  w.value(critic.tau());
  w.endl();
  w.key("actor");
  w.endl();
  nn::save_net(out, actor.net(), &actor.adam());
  w.key("critic");
  w.endl();
  nn::save_net(out, critic.online(), &critic.adam());
  w.key("target");
  w.endl();
  nn::save_net(out, critic.target());
  w.key("end");
  w.endl();
}

void load_agent(std::istream& in, Actor& actor, Critic& critic, CqlConfig& cql) {
  textio::Reader r(in);
  r.expect_magic("OMGRL-AGT v1");
  r.expect_key("cql");
  cql.alpha = r.real();
  cql.lambda = r.real();
  cql.gamma = r.real();
  r.expect_key("entropy_temperature");
  const double temp = r.real();
  r.expect_key("target_tau");
  const double tau = r.real();
  r.expect_key("actor");
  nn::AdamState actor_adam;
  nn::DenseNet actor_net = nn::load_net(in, &actor_adam);
  r.expect_key("critic");
  nn::AdamState critic_adam;
  nn::DenseNet critic_net = nn::load_net(in, &critic_adam);
  r.expect_key("target");
  nn::DenseNet target_net = nn::load_net(in);
  r.expect_key("end");

  actor = Actor(std::move(actor_net), temp, actor_adam.config);
  actor.adam() = std::move(actor_adam);
  critic = Critic(std::move(critic_net), tau, critic_adam.config);
  critic.adam() = std::move(critic_adam);
  critic.target() = std::move(target_net);
}

}  // namespace omgrl::agent
