#pragma once

// Shared builders for unit and acceptance tests.

#include "omgrl/agent.hpp"
#include "omgrl/nn.hpp"
#include "omgrl/random.hpp"
#include "omgrl/reward.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace omgrl::testing {

inline PatientState random_state(Rng& rng) {
  PatientState s;
  for (int i = 0; i < kStateDim; ++i) s.features[i] = standard_normal(rng);
  s.aptt = uniform_real(rng, 20.0, 140.0);
  return s;
}

inline Transition random_transition(Rng& rng) {
  Transition t;
  t.state = random_state(rng);
  t.action = ActionClass(static_cast<int>(uniform_index(rng, kNumActions)));
  t.reward = uniform_real(rng, -1.0, 1.0);
  t.next_state = random_state(rng);
  t.terminal = uniform_index(rng, 4) == 0;
  return t;
}

inline agent::MixedBatch random_mixed_batch(Rng& rng, std::size_t n) {
  agent::MixedBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.transitions.push_back(random_transition(rng));
    b.origins.push_back(i % 3 == 2 ? agent::Origin::model : agent::Origin::batch);
  }
  return b;
}

inline reward::Segment random_segment(Rng& rng, int h) {
  reward::Segment s;
  for (int i = 0; i < h; ++i) s.push_back(random_transition(rng));
  return s;
}

inline agent::AgentConfig small_agent(nn::Activation act = nn::Activation::tanh) {
  agent::AgentConfig c;
  c.hidden = {12, 12};
  c.activation = act;
  return c;
}

// Moves the target network away from the online one so the Bellman target
// depends on different parameters than the online Q-values.
inline void perturb_target(agent::Critic& critic, Rng& rng) {
  Eigen::VectorXd flat = critic.target().flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += 0.1 * standard_normal(rng);
  critic.target().assign(flat);
}

// Finite-difference gradient of f over a network's flat parameter vector.
template <typename F>
Eigen::VectorXd numeric_param_gradient(nn::DenseNet& net, F&& f, double step = 1e-6) {
  const Eigen::VectorXd base = net.flatten();
  auto g = [&](const Eigen::VectorXd& v) {
    net.assign(v);
    return f();
  };
  Eigen::VectorXd out = nn::numeric_gradient(g, base, step);
  net.assign(base);
  return out;
}

// Fourth-order central differences: truncation error O(h^4), so a larger step
// keeps cancellation error well below the tolerance on small components.
inline Eigen::VectorXd stencil_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-4) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x;
  auto at = [&](Eigen::Index i, double d) {
    p[i] = x[i] + d;
    const double v = f(p);
    p[i] = x[i];
    return v;
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    g[i] = (8 * (at(i, h) - at(i, -h)) - (at(i, 2 * h) - at(i, -2 * h))) / (12 * h);
  }
  return g;
}

// Stencil gradient that also reports which components straddle a ReLU kink:
// any stencil point whose activation pattern differs from the centre.
struct KinkAwareGradient {
  Eigen::VectorXd gradient;
  std::vector<bool> crosses_kink;
};

inline KinkAwareGradient kink_aware_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                             const Eigen::VectorXd& x, double h = 1e-4) {
  nn::ReluPatternProbe probe;
  f(x);
  const std::uint64_t centre = probe.hash();
  KinkAwareGradient out{Eigen::VectorXd(x.size()), std::vector<bool>(static_cast<std::size_t>(x.size()), false)};
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    bool crossed = false;
    auto at = [&](double d) {
      p[i] = x[i] + d;
      probe.reset();
      const double v = f(p);
      crossed = crossed || probe.hash() != centre;
      p[i] = x[i];
      return v;
    };
    out.gradient[i] = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
    out.crosses_kink[static_cast<std::size_t>(i)] = crossed;
  }
  return out;
}

template <class F>
KinkAwareGradient kink_aware_param_gradient(nn::DenseNet& net, F&& f, double h = 1e-4) {
  const Eigen::VectorXd base = net.flatten();
  auto out = kink_aware_gradient(
      [&](const Eigen::VectorXd& v) {
        net.assign(v);
        return f();
      },
      base, h);
  net.assign(base);
  return out;
}

template <class F>
Eigen::VectorXd stencil_param_gradient(nn::DenseNet& net, F&& f, double h = 1e-4) {
  const Eigen::VectorXd base = net.flatten();
  Eigen::VectorXd out = stencil_gradient(
      [&](const Eigen::VectorXd& v) {
        net.assign(v);
        return f();
      },
      base, h);
  net.assign(base);
  return out;
}

}  // namespace omgrl::testing
