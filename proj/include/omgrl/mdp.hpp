#pragma once

// Interfaces shared by everything that acts in or simulates the MDP.

#include "omgrl/data.hpp"
#include "omgrl/random.hpp"

#include <functional>
#include <vector>

namespace omgrl {

class Policy {
 public:
  virtual ~Policy() = default;

  virtual ActionProbs probabilities(const PatientState& s) const = 0;
  virtual std::vector<ActionProbs> probabilities(const std::vector<PatientState>& states) const;

  // Samples from probabilities(s) with a single uniform draw.
  ActionClass act(const PatientState& s, Rng& rng) const;
  // Highest probability; ties go to the lowest class index.
  ActionClass act_greedy(const PatientState& s) const;
};

ActionClass sample_action(const ActionProbs& p, Rng& rng);
ActionClass greedy_action(const ActionProbs& p);

class UniformPolicy final : public Policy {
 public:
  ActionProbs probabilities(const PatientState&) const override;
};

class FunctionPolicy final : public Policy {
 public:
  explicit FunctionPolicy(std::function<ActionProbs(const PatientState&)> fn) : fn_(std::move(fn)) {}
  ActionProbs probabilities(const PatientState& s) const override { return fn_(s); }

 private:
  std::function<ActionProbs(const PatientState&)> fn_;
};

// Deterministic policy that always returns `a`.
ActionProbs point_mass(ActionClass a);

struct StepResult {
  PatientState next;
  double reward = 0.0;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual StepResult step(const PatientState& s, ActionClass a, Rng& rng) const = 0;
  // Default: sequential step() calls in index order.
  virtual std::vector<StepResult> step_batch(const std::vector<PatientState>& states,
                                             const std::vector<ActionClass>& actions, Rng& rng) const;
};

// Presents a raw-feature environment in normalized coordinates: states going
// in are de-normalized, successors coming out are normalized. aPTT is untouched.
class NormalizedEnvironment final : public Environment {
 public:
  NormalizedEnvironment(const Environment& inner, Normalizer normalizer)
      : inner_(inner), normalizer_(std::move(normalizer)) {}
  StepResult step(const PatientState& s, ActionClass a, Rng& rng) const override;

 private:
  const Environment& inner_;
  Normalizer normalizer_;
};

}  // namespace omgrl
