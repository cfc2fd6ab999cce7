#include "omgrl/error.hpp"
#include "omgrl/orchestrator.hpp"
#include "omgrl/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <memory>
#include <sstream>

using namespace omgrl;
using namespace omgrl::orchestrator;

namespace {

struct Fixture {
  synth::SynthConfig sc;
  std::vector<Trajectory> batch;
  dynamics::DynamicsEnsemble ensemble;
  std::unique_ptr<synth::SynthEnv> env;
  std::unique_ptr<NormalizedEnvironment> eval_env;
  std::vector<PatientState> init;

  Fixture() {
    sc.horizon = 10;
    const auto raw = synth::generate_expert_dataset(sc, 12);
    const Normalizer norm = fit_normalizer(raw);
    batch = apply_normalizer(raw, norm);
    dynamics::DynamicsConfig dc;
    dc.epochs = 1;
    dc.members = 2;
    dc.keep = 2;
    dc.hidden = {8, 8, 8};
    const auto all = all_transitions(batch);
    ensemble = dynamics::select_top(dynamics::train_dynamics(all, all, dc), 2);
    env = std::make_unique<synth::SynthEnv>(sc);
    eval_env = std::make_unique<NormalizedEnvironment>(*env, norm);
    for (const auto& t : batch) init.push_back(t.transitions.front().state);
  }

  TrainData data() const { return TrainData{batch, &ensemble, eval_env.get(), init}; }
};

TrainConfig small_config(Mode mode, int epochs) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.agent.hidden = {8, 8};
  c.agent.batch_size = 16;
  c.reward.hidden = {8, 8};
  c.reward.segment_batch = 4;
  c.rollout = {2, 3, 1};
  c.reward.segment_length = 2;
  c.reward_steps = 2;
  c.eval_interval = 2;
  c.eval_episodes = 3;
  c.eval_steps = 5;
  return c;
}

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("loop accounting for D_sample size and reward steps") {
  struct Case {
    int e, b, h, k;
  };
  for (const auto& c : {Case{1, 1, 1, 1}, Case{3, 4, 2, 5}}) {
    TrainConfig cfg = small_config(Mode::omgrl, c.e);
    cfg.rollout = {c.h, c.b, 1};
    cfg.reward.segment_length = c.h;
    cfg.reward_steps = c.k;
    const TrainState s = train_omgrl(cfg, fixture().data());
    CHECK(s.d_sample.size() == static_cast<std::size_t>(c.e * c.b * c.h));
    CHECK(s.reward_steps == c.e * c.k);
    CHECK(s.critic_steps == c.e);
    CHECK(s.actor_steps == c.e);
    CHECK(s.epoch == c.e);
  }
}

TEST_CASE("D_sample is capped at its capacity") {
  TrainConfig cfg = small_config(Mode::combo, 4);
  cfg.sample_capacity = 10;
  const TrainState s = train_combo(cfg, fixture().data());
  CHECK(s.d_sample.size() == 10);
  CHECK(s.rollout_transitions == 4 * 3 * 2);
}

TEST_CASE("modes log the expected metric columns") {
  const auto omgrl = train_omgrl(small_config(Mode::omgrl, 2), fixture().data());
  CHECK(omgrl.metrics[0].reward_loss.has_value());
  CHECK_FALSE(omgrl.metrics[0].eval_rp.has_value());
  CHECK(omgrl.metrics[1].eval_rp.has_value());
  CHECK(omgrl.metrics[1].eval_rpsi.has_value());
  const auto combo = train_combo(small_config(Mode::combo, 2), fixture().data());
  CHECK_FALSE(combo.metrics[1].reward_loss.has_value());
  CHECK_FALSE(combo.metrics[1].eval_rpsi.has_value());
  CHECK(combo.reward_steps == 0);
  const auto mf = train_modelfree(small_config(Mode::modelfree, 2), fixture().data());
  CHECK(mf.d_sample.size() == 0);

  std::ostringstream out;
  write_metrics_csv(out, omgrl.metrics);
  CHECK(out.str().rfind("epoch,bellman_loss,cql_penalty,policy_loss,reward_loss,eval_rp,eval_rpsi\n", 0) == 0);
}

TEST_CASE("combo without rollouts and lambda 1 reproduces modelfree") {
  TrainConfig combo = small_config(Mode::combo, 3);
  combo.rollout.batch = 0;
  combo.agent.cql.lambda = 1.0;
  const auto a = train_combo(combo, fixture().data());
  const auto b = train_modelfree(small_config(Mode::modelfree, 3), fixture().data());
  CHECK(a.actor == b.actor);
  CHECK(a.critic == b.critic);
  CHECK(a.metrics == b.metrics);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto a = train_omgrl(small_config(Mode::omgrl, 3), fixture().data());
  const auto b = train_omgrl(small_config(Mode::omgrl, 3), fixture().data());
  CHECK(a == b);
  TrainConfig other = small_config(Mode::omgrl, 3);
  other.seed = 2;
  CHECK_FALSE(train_omgrl(other, fixture().data()).actor == a.actor);
}

TEST_CASE("checkpoint and resume match an uninterrupted run") {
  const TrainConfig cfg = small_config(Mode::omgrl, 4);
  const auto full = train_omgrl(cfg, fixture().data());

  Trainer first(cfg, fixture().data());
  first.run(2);
  std::stringstream ss;
  save_run(ss, first.state(), cfg, "fp");
  std::string fp;
  TrainState restored = load_run(ss, &fp);
  CHECK(fp == "fp");
  CHECK(restored == first.state());
  Trainer second(cfg, fixture().data(), std::move(restored));
  second.run(4);
  CHECK(second.state() == full);
}

TEST_CASE("resume refuses different batch data") {
  const TrainConfig cfg = small_config(Mode::combo, 1);
  const auto s = train_combo(cfg, fixture().data());
  TrainData other = fixture().data();
  other.batch.pop_back();
  CHECK_THROWS_AS(Trainer(cfg, other, s), StateError);
}

TEST_CASE("configuration errors are reported before training") {
  TrainConfig cfg = small_config(Mode::omgrl, 1);
  cfg.reward.segment_length = 3;
  CHECK_THROWS_AS(Trainer(cfg, fixture().data()), ArgumentError);
  TrainData no_model = fixture().data();
  no_model.ensemble = nullptr;
  CHECK_THROWS_AS(Trainer(small_config(Mode::combo, 1), no_model), StateError);
  CHECK_NOTHROW(Trainer(small_config(Mode::modelfree, 1), no_model));
  CHECK_THROWS_AS(parse_mode("sac"), ArgumentError);
}

TEST_CASE("run checkpoints reject a wrong header") {
  std::stringstream bad("OMGRL-AGT v1\n");
  CHECK_THROWS_AS(load_run(bad), DataError);
}
