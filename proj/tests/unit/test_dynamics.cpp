#include "omgrl/dynamics.hpp"
#include "omgrl/error.hpp"
#include "omgrl/synth.hpp"

#include <doctest.h>

#include <sstream>

using namespace omgrl;
using namespace omgrl::dynamics;

namespace {

std::vector<TrainedMember> fake_members(const std::vector<double>& nll) {
  std::vector<TrainedMember> out;
  for (std::size_t i = 0; i < nll.size(); ++i) {
    TrainedMember m;
    m.index = static_cast<int>(i);
    m.val_nll = nll[i];
    m.model = ProbabilisticDynamicsModel(nn::DenseNet({kInputDim, 2 * kOutputDim}, nn::Activation::relu, nn::OutputHead::gaussian));
    m.model.net().params()[0].bias(0) = static_cast<double>(i);  // tag
    out.push_back(m);
  }
  return out;
}

std::vector<Transition> synthetic_transitions(double noise, int patients, std::uint64_t seed) {
  synth::SynthConfig c;
  c.noise_std = noise;
  c.seed = seed;
  c.horizon = 12;
  return all_transitions(synth::generate_expert_dataset(c, patients));
}

}  // namespace

TEST_CASE("select_top keeps the lowest validation NLLs in order") {
  const auto members = fake_members({3, 1, 2, 5, 4, 7, 6});
  const auto ens = select_top(members, 5);
  CHECK(ens.val_nll == std::vector<double>{1, 2, 3, 4, 5});
  CHECK(ens.members[0].net().params()[0].bias(0) == 1.0);
  CHECK(ens.members[4].net().params()[0].bias(0) == 3.0);
  CHECK(select_top(members, 1).val_nll == std::vector<double>{1});
  CHECK_THROWS_AS(select_top(members, 8), ArgumentError);
}

TEST_CASE("select_top breaks ties by index and skips failed members") {
  auto members = fake_members({2, 1, 1, 0});
  members[3].failed = true;
  const auto ens = select_top(members, 2);
  CHECK(ens.members[0].net().params()[0].bias(0) == 1.0);
  CHECK(ens.members[1].net().params()[0].bias(0) == 2.0);
  CHECK_THROWS_AS(select_top(members, 4), ArgumentError);
}

TEST_CASE("inputs are state then one-hot action, targets are delta and reward") {
  Transition t;
  t.state.features.setLinSpaced(0.0, 15.0);
  t.action = ActionClass(3);
  t.next_state.features.setConstant(2.0);
  t.reward = 0.5;
  const auto x = encode_inputs({t});
  CHECK(x.rows() == kInputDim);
  CHECK(x(5, 0) == 5.0);
  CHECK(x(kStateDim + 3, 0) == 1.0);
  CHECK(x.col(0).tail(kNumActions).sum() == 1.0);
  const auto y = encode_targets({t});
  CHECK(y(4, 0) == 2.0 - 4.0);
  CHECK(y(kStateDim, 0) == 0.5);
}

TEST_CASE("batch NLL upstream matches finite differences") {
  Rng rng = derive_rng(1, 3);
  Eigen::MatrixXd out = Eigen::MatrixXd::NullaryExpr(6, 4, [&] { return standard_normal(rng); });
  const Eigen::MatrixXd tgt = Eigen::MatrixXd::NullaryExpr(3, 4, [&] { return standard_normal(rng); });
  const auto b = batch_gaussian_nll(out, tgt);
  Eigen::VectorXd flat = Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
  auto f = [&](const Eigen::VectorXd& v) {
    return batch_gaussian_nll(Eigen::Map<const Eigen::MatrixXd>(v.data(), 6, 4), tgt).loss;
  };
  const Eigen::VectorXd analytic = Eigen::Map<const Eigen::VectorXd>(b.upstream.data(), b.upstream.size());
  CHECK(nn::max_relative_error(analytic, nn::numeric_gradient(f, flat, 1e-6)) < 1e-7);
}

TEST_CASE("predictions keep log-variances inside the clamp bounds") {
  Rng rng = derive_rng(2, 3);
  const auto model = ProbabilisticDynamicsModel::create(DynamicsConfig{}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(kInputDim, 50, [&] { return 100.0 * standard_normal(rng); });
  const auto p = model.predict(x);
  CHECK(p.log_var.minCoeff() >= nn::kLogVarMin);
  CHECK(p.log_var.maxCoeff() <= nn::kLogVarMax);
  CHECK(p.mean.rows() == kOutputDim);
}

TEST_CASE("seven members train reproducibly and NLL decreases") {
  const auto train = synthetic_transitions(0.05, 20, 1);
  const auto val = synthetic_transitions(0.05, 5, 2);
  DynamicsConfig c;
  c.epochs = 3;
  c.hidden = {16, 16, 16};
  const auto a = train_dynamics(train, val, c);
  const auto b = train_dynamics(train, val, c);
  REQUIRE(a.size() == 7);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].val_nll == b[i].val_nll);
    CHECK(a[i].train_curve.size() == 3);
    CHECK(a[i].train_curve.back() < a[i].train_curve.front());
  }
  CHECK(a[0].model.net() != a[1].model.net());
  CHECK_THROWS_AS(train_dynamics({}, val, c), ArgumentError);
}

TEST_CASE("ensemble sampling with zero noise returns a member mean") {
  const auto train = synthetic_transitions(0.05, 10, 1);
  DynamicsConfig c;
  c.epochs = 1;
  c.members = 2;
  c.keep = 2;
  c.hidden = {8, 8, 8};
  const auto ens = select_top(train_dynamics(train, train, c), 2);
  Rng rng = derive_rng(4, 4);
  const auto s = ensemble_sample(ens, train[0].state, train[0].action, rng, 0.0);
  const auto p = ens.members[static_cast<std::size_t>(s.member)].predict({train[0].state}, {train[0].action});
  CHECK((s.next_state - p.mean.col(0).head(kStateDim)).norm() == 0.0);
  CHECK(s.reward == p.mean(kStateDim, 0));

  std::stringstream ss;
  save_ensemble(ss, ens);
  const auto back = load_ensemble(ss);
  CHECK(back.val_nll == ens.val_nll);
  CHECK(back.members[1].net() == ens.members[1].net());
}

TEST_CASE("rollouts append b*h transitions of connected branches") {
  synth::SynthConfig sc;
  const synth::SynthEnv env(sc);
  Rng rng = derive_rng(5, 5);
  std::vector<PatientState> init = {env.initial_state(rng, 40, 120), env.initial_state(rng, 40, 120)};
  ReplayBuffer sink;
  UniformPolicy pi;
  RolloutConfig rc{3, 4, 1};
  const auto r = rollout_batch(env, pi, init, rc, sink, rng);
  CHECK(r.added == 12);
  CHECK(sink.size() == 12);
  REQUIRE(r.segments.size() == 4);
  for (const auto& seg : r.segments) {
    REQUIRE(seg.size() == 3);
    CHECK(seg[1].state == seg[0].next_state);
    CHECK(seg[2].state == seg[1].next_state);
  }
  CHECK_THROWS_AS(rollout_batch(env, pi, {}, rc, sink, rng), StateError);
  rc.horizon = 0;
  CHECK_THROWS_AS(rollout_batch(env, pi, init, rc, sink, rng), ArgumentError);
}

TEST_CASE("corrupted ensemble checkpoints are rejected") {
  std::stringstream bad("OMGRL-NET v1\n");
  CHECK_THROWS_AS(load_ensemble(bad), DataError);
}
