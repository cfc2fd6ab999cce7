#include "omgrl/mdp.hpp"

namespace omgrl {

std::vector<ActionProbs> Policy::probabilities(const std::vector<PatientState>& states) const {
  std::vector<ActionProbs> out;
  out.reserve(states.size());
  for (const auto& s : states) out.push_back(probabilities(s));
  return out;
}

ActionClass sample_action(const ActionProbs& p, Rng& rng) {
  const double u = uniform_real(rng, 0.0, 1.0);
  double acc = 0.0;
  int last_positive = 0;
  for (int a = 0; a < kNumActions; ++a) {
    if (p[a] > 0.0) last_positive = a;
    acc += p[a];
    if (u < acc) return ActionClass(a);
  }
  return ActionClass(last_positive);
}

ActionClass greedy_action(const ActionProbs& p) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (p[a] > p[best]) best = a;
  }
  return ActionClass(best);
}

ActionClass Policy::act(const PatientState& s, Rng& rng) const { return sample_action(probabilities(s), rng); }

ActionClass Policy::act_greedy(const PatientState& s) const { return greedy_action(probabilities(s)); }

ActionProbs UniformPolicy::probabilities(const PatientState&) const {
  ActionProbs p;
  p.fill(1.0 / kNumActions);
  return p;
}

ActionProbs point_mass(ActionClass a) {
  ActionProbs p{};
  p[a.index()] = 1.0;
  return p;
}

std::vector<StepResult> Environment::step_batch(const std::vector<PatientState>& states,
                                               const std::vector<ActionClass>& actions, Rng& rng) const {
  std::vector<StepResult> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(step(states[i], actions[i], rng));
  return out;
}

StepResult NormalizedEnvironment::step(const PatientState& s, ActionClass a, Rng& rng) const {
  StepResult r = inner_.step(normalizer_.invert(s), a, rng);
  r.next = normalizer_.apply(r.next);
  return r;
}

}  // namespace omgrl
