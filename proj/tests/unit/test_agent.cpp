#include "omgrl/agent.hpp"
#include "omgrl/error.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace omgrl;
using namespace omgrl::agent;
using omgrl::testing::numeric_param_gradient;

TEST_CASE("critic loss gradient matches finite differences") {
  Rng rng = derive_rng(7, 1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cfg = omgrl::testing::small_agent();
    Critic critic = Critic::create(cfg, rng);
    omgrl::testing::perturb_target(critic, rng);
    const Actor actor = Actor::create(cfg, rng);
    const MixedBatch batch = omgrl::testing::random_mixed_batch(rng, 9);
    const CqlConfig cql{uniform_real(rng, 0.0, 3.0), 0.5, 0.9};
    const auto loss = critic_loss(critic, actor, batch, cql, 0.1);
    const auto fd = numeric_param_gradient(critic.online(), [&] { return critic_loss(critic, actor, batch, cql, 0.1).total; });
    CHECK(nn::max_relative_error(nn::flatten(loss.grads), fd) <= 1e-4);
  }
}

TEST_CASE("critic loss decomposes into Bellman error and the conservative gap") {
  Rng rng = derive_rng(7, 2);
  const auto cfg = omgrl::testing::small_agent();
  Critic critic = Critic::create(cfg, rng);
  omgrl::testing::perturb_target(critic, rng);
  const Actor actor = Actor::create(cfg, rng);
  const MixedBatch batch = omgrl::testing::random_mixed_batch(rng, 6);
  const CqlConfig cql{2.0, 0.5, 0.95};
  const double temp = 0.2;
  const auto loss = critic_loss(critic, actor, batch, cql, temp);

  // Independent per-sample evaluation.
  double bellman = 0.0, rho = 0.0, data = 0.0;
  int n_data = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& t = batch.transitions[i];
    const auto q = critic.q_values(state_matrix({t.state}));
    const auto qt = critic.target_q_values(state_matrix({t.next_state}));
    const auto pn = actor.probabilities(t.next_state);
    double v = 0.0;
    for (int a = 0; a < kNumActions; ++a) v += pn[a] * (qt(a, 0) - temp * std::log(pn[a]));
    const double y = t.reward + cql.gamma * (t.terminal ? 0.0 : 1.0) * v;
    bellman += 0.5 * std::pow(q(t.action.index(), 0) - y, 2);
    const auto p = actor.probabilities(t.state);
    for (int a = 0; a < kNumActions; ++a) rho += p[a] * q(a, 0);
    if (batch.origins[i] == Origin::batch) {
      data += q(t.action.index(), 0);
      ++n_data;
    }
  }
  const double n = static_cast<double>(batch.size());
  CHECK(loss.bellman == doctest::Approx(bellman / n).epsilon(1e-12));
  CHECK(loss.cql_penalty == doctest::Approx(cql.alpha * (rho / n - data / n_data)).epsilon(1e-12));
  CHECK(loss.total == doctest::Approx(loss.bellman + loss.cql_penalty).epsilon(1e-12));
}

TEST_CASE("alpha = 0 gives exactly zero penalty") {
  Rng rng = derive_rng(7, 3);
  const auto cfg = omgrl::testing::small_agent();
  const Critic critic = Critic::create(cfg, rng);
  const Actor actor = Actor::create(cfg, rng);
  const auto batch = omgrl::testing::random_mixed_batch(rng, 8);
  const auto loss = critic_loss(critic, actor, batch, CqlConfig{0.0, 0.5, 0.99}, 0.05);
  CHECK(loss.cql_penalty == 0.0);
  CHECK(loss.total == loss.bellman);
}

TEST_CASE("reward override replaces stored rewards") {
  Rng rng = derive_rng(7, 4);
  const auto cfg = omgrl::testing::small_agent();
  const Critic critic = Critic::create(cfg, rng);
  const Actor actor = Actor::create(cfg, rng);
  auto batch = omgrl::testing::random_mixed_batch(rng, 5);
  Eigen::VectorXd r(5);
  r << 1, 2, 3, 4, 5;
  const auto with_override = critic_loss(critic, actor, batch, {}, 0.05, r);
  for (int i = 0; i < 5; ++i) batch.transitions[static_cast<std::size_t>(i)].reward = r[i];
  const auto stored = critic_loss(critic, actor, batch, {}, 0.05);
  CHECK(with_override.total == stored.total);
  CHECK_THROWS_AS(critic_loss(critic, actor, batch, {}, 0.05, Eigen::VectorXd::Zero(2)), ShapeError);
  Eigen::VectorXd bad = r;
  bad[1] = std::nan("");
  CHECK_THROWS_AS(critic_loss(critic, actor, batch, {}, 0.05, bad), NumericError);
}

TEST_CASE("policy loss gradient matches finite differences and the closed form") {
  Rng rng = derive_rng(7, 5);
  for (int trial = 0; trial < 5; ++trial) {
    auto cfg = omgrl::testing::small_agent(trial % 2 ? nn::Activation::relu : nn::Activation::tanh);
    cfg.entropy_temperature = uniform_real(rng, 0.01, 0.5);
    Actor actor = Actor::create(cfg, rng);
    const Critic critic = Critic::create(cfg, rng);
    std::vector<PatientState> states;
    for (int i = 0; i < 7; ++i) states.push_back(omgrl::testing::random_state(rng));
    const auto loss = policy_loss(actor, critic, states);
    const auto fd = numeric_param_gradient(actor.net(), [&] { return policy_loss(actor, critic, states).loss; });
    CHECK(nn::max_relative_error(nn::flatten(loss.grads), fd) <= 1e-4);

    double expected = 0.0;
    for (const auto& s : states) {
      const auto p = actor.probabilities(s);
      const auto q = critic.q_values(state_matrix({s}));
      for (int a = 0; a < kNumActions; ++a) expected += p[a] * (cfg.entropy_temperature * std::log(p[a]) - q(a, 0));
    }
    CHECK(loss.loss == doctest::Approx(expected / 7.0).epsilon(1e-12));
  }
}

TEST_CASE("soft update blends target toward online by tau") {
  Rng rng = derive_rng(7, 6);
  auto cfg = omgrl::testing::small_agent();
  cfg.target_tau = 0.25;
  Critic critic = Critic::create(cfg, rng);
  omgrl::testing::perturb_target(critic, rng);
  const Eigen::VectorXd online = critic.online().flatten();
  const Eigen::VectorXd target = critic.target().flatten();
  critic.soft_update();
  CHECK((critic.target().flatten() - (0.25 * online + 0.75 * target)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(Critic(critic.online(), 0.0, {}), ArgumentError);
}

TEST_CASE("mixed batches take ceil(lambda n) from the batch buffer") {
  Rng rng = derive_rng(7, 7);
  ReplayBuffer d_batch, d_sample;
  for (int i = 0; i < 20; ++i) d_batch.push(omgrl::testing::random_transition(rng));
  for (int i = 0; i < 3; ++i) d_sample.push(omgrl::testing::random_transition(rng));
  const auto b = sample_mixed_batch(d_batch, d_sample, 10, 0.45, rng);
  REQUIRE(b.size() == 10);
  long from_batch = 0;
  for (auto o : b.origins) from_batch += o == Origin::batch;
  CHECK(from_batch == 5);
  CHECK(sample_mixed_batch(d_batch, ReplayBuffer(), 10, 1.0, rng).size() == 10);
  CHECK_THROWS_AS(sample_mixed_batch(d_batch, ReplayBuffer(), 10, 0.5, rng), StateError);
  CHECK_THROWS_AS(sample_mixed_batch(d_batch, d_sample, 10, 1.5, rng), ArgumentError);
}

TEST_CASE("a critic update lowers the loss on its batch") {
  Rng rng = derive_rng(7, 8);
  auto cfg = omgrl::testing::small_agent();
  cfg.critic_adam.lr = 1e-3;
  Critic critic = Critic::create(cfg, rng);
  const Actor actor = Actor::create(cfg, rng);
  const auto batch = omgrl::testing::random_mixed_batch(rng, 32);
  const CqlConfig cql{1.0, 0.5, 0.9};
  const double before = critic_loss(critic, actor, batch, cql, 0.05).total;
  for (int i = 0; i < 20; ++i) conservative_critic_update(critic, actor, batch, cql, 0.05);
  CHECK(critic_loss(critic, actor, batch, cql, 0.05).total < before);
}

TEST_CASE("actor probabilities are a distribution and log-probabilities agree") {
  Rng rng = derive_rng(7, 9);
  const Actor actor = Actor::create(omgrl::testing::small_agent(), rng);
  std::vector<PatientState> states;
  for (int i = 0; i < 4; ++i) states.push_back(omgrl::testing::random_state(rng));
  const auto s = state_matrix(states);
  const auto p = actor.probability_matrix(s);
  const auto lp = actor.log_probability_matrix(s);
  for (int j = 0; j < 4; ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK((p.col(j).array().log() - lp.col(j).array()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("agent checkpoints round-trip") {
  Rng rng = derive_rng(7, 10);
  const auto cfg = omgrl::testing::small_agent();
  Critic critic = Critic::create(cfg, rng);
  Actor actor = Actor::create(cfg, rng);
  const auto batch = omgrl::testing::random_mixed_batch(rng, 8);
  conservative_critic_update(critic, actor, batch, {}, 0.05);
  policy_improvement(actor, critic, batch.states());
  std::stringstream ss;
  save_agent(ss, actor, critic, CqlConfig{3.0, 0.25, 0.9});
  Actor a2;
  Critic c2;
  CqlConfig q2;
  load_agent(ss, a2, c2, q2);
  CHECK(a2 == actor);
  CHECK(c2 == critic);
  CHECK(q2.alpha == 3.0);
  CHECK(q2.lambda == 0.25);
}
