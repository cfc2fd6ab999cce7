#include "omgrl/error.hpp"
#include "omgrl/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace omgrl;
using namespace omgrl::synth;

TEST_CASE("ground-truth dynamics are stable and seeded") {
  SynthConfig c;
  const auto a = GroundTruthDynamics::generate(c);
  const auto b = GroundTruthDynamics::generate(c);
  CHECK(a.transition == b.transition);
  CHECK(a.spectral_radius() < 1.0);
  c.seed = 2;
  CHECK_FALSE(GroundTruthDynamics::generate(c).transition == a.transition);
}

TEST_CASE("a noiseless step follows the linear recursion and the aPTT update") {
  SynthConfig c;
  c.noise_std = 0.0;
  const SynthEnv env(c);
  const auto& d = env.dynamics();
  Rng rng = derive_rng(1, 1);
  PatientState s = env.initial_state(rng, 40.0, 120.0);
  for (int a = 0; a < kNumActions; ++a) {
    const auto r = env.step(s, ActionClass(a), rng);
    const StateVector expected = d.transition * s.features + d.action_effects.col(a);
    CHECK((r.next.features - expected).cwiseAbs().maxCoeff() < 1e-12);
    const double aptt = s.aptt + d.aptt_drift * (d.baseline_aptt - s.aptt) + d.aptt_gains[a];
    CHECK(r.next.aptt == doctest::Approx(aptt).epsilon(1e-12));
    CHECK(r.reward == doctest::Approx(rp_reward(aptt)).epsilon(1e-12));
    CHECK(env.mean_reward(s, ActionClass(a)) == doctest::Approx(r.reward).epsilon(1e-12));
  }
}

TEST_CASE("the PT feature tracks aPTT along noisy trajectories") {
  SynthConfig c;
  c.horizon = 20;
  const auto data = generate_expert_dataset(c, 5);
  for (const auto& t : data) {
    for (const auto& tr : t.transitions) {
      CHECK(tr.next_state.features[kFeaturePt] ==
            doctest::Approx((tr.next_state.aptt - c.baseline_aptt) / c.aptt_scale).epsilon(1e-9));
    }
  }
}

TEST_CASE("generated datasets are reproducible and respect horizons") {
  SynthConfig c;
  c.min_horizon = 7;
  c.max_horizon = 12;
  const auto a = generate_expert_dataset(c, 20);
  const auto b = generate_expert_dataset(c, 20);
  CHECK(a == b);
  for (const auto& t : a) {
    CHECK(t.horizon_hours() >= 7);
    CHECK(t.horizon_hours() <= 12);
    for (std::size_t i = 1; i < t.transitions.size(); ++i) CHECK(t.transitions[i].state == t.transitions[i - 1].next_state);
  }
}

TEST_CASE("expert controller steers toward the target aPTT") {
  SynthConfig c;
  const auto d = GroundTruthDynamics::generate(c);
  const ExpertPolicy expert(d, 80.0, 0.0);
  // Brute force: the chosen class minimizes the distance to the target.
  for (double aptt : {20.0, 50.0, 80.0, 110.0, 150.0}) {
    const int chosen = expert.controller_action(aptt).index();
    for (int a = 0; a < kNumActions; ++a) {
      CHECK(std::abs(d.mean_next_aptt(aptt, ActionClass(chosen)) - 80.0) <=
            std::abs(d.mean_next_aptt(aptt, ActionClass(a)) - 80.0));
    }
  }
  PatientState s;
  s.aptt = 150.0;
  CHECK(expert.act_greedy(s).index() == 0);
  const ExpertPolicy noisy(d, 80.0, 0.3);
  const auto p = noisy.probabilities(s);
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(p[0] == doctest::Approx(0.7 + 0.05));
}

TEST_CASE("synthetic config validation and round-trip") {
  SynthConfig c;
  c.aptt_gains = {0, 1, 1, 2, 3, 4};
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  SynthConfig d;
  d.noise_std = 0.0;
  d.seed = 42;
  const auto path = (std::filesystem::temp_directory_path() / "omgrl_synth_test.cfg").string();
  save_config(path, d);
  const auto back = load_config(path);
  CHECK(back.seed == 42);
  CHECK(back.noise_std == 0.0);
  CHECK(back.aptt_gains == d.aptt_gains);
  std::filesystem::remove(path);
}
