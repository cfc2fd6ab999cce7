#pragma once

// Learned per-step reward r_psi(s, a), trajectory sums, self-normalized
// importance weights and the sample-based MaxEnt (guided cost learning) step.

#include "omgrl/data.hpp"
#include "omgrl/mdp.hpp"
#include "omgrl/nn.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace omgrl::reward {

inline constexpr double kDefaultRewardMax = 10.0;

struct RewardConfig {
  std::vector<int> hidden = {64, 64};  // three fully-connected layers
  nn::Activation activation = nn::Activation::relu;
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
  double r_max = kDefaultRewardMax;
  int segment_length = 5;
  // Segments per population (expert and sampled) in each reward step.
  int segment_batch = 64;
  double l2 = 1e-4;
};

// A fixed-length window of consecutive transitions.
using Segment = std::vector<Transition>;

class RewardNet {
 public:
  RewardNet() = default;
  RewardNet(nn::DenseNet net, double r_max, nn::AdamConfig adam = {});
  static RewardNet create(const RewardConfig& config, Rng& rng);

  // r_max * tanh(z / r_max) of the linear network output z, one per column of
  // the (22 x n) encoded inputs.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& inputs) const;
  double operator()(const PatientState& s, ActionClass a) const;
  Eigen::VectorXd rewards(const std::vector<Transition>& batch) const;

  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }
  nn::AdamState& adam() { return adam_; }
  const nn::AdamState& adam() const { return adam_; }
  double r_max() const { return r_max_; }

  bool operator==(const RewardNet& o) const {
    return net_ == o.net_ && adam_ == o.adam_ && r_max_ == o.r_max_;
  }

 private:
  nn::DenseNet net_;
  nn::AdamState adam_;
  double r_max_ = kDefaultRewardMax;
};

// Sum of per-step rewards over the segment.
double trajectory_reward(const RewardNet& net, const Segment& segment);

struct WeightedSampleSet {
  std::vector<Segment> segments;
  Eigen::VectorXd log_weights;  // unnormalized
  Eigen::VectorXd weights;      // normalized, sums to 1
};

// log w_j = sum_t r_psi(s_t, a_t) - sum_t log pi(a_t | s_t), normalized in
// the log domain.
WeightedSampleSet importance_weights(const RewardNet& net, const Policy& policy,
                                     std::vector<Segment> segments);
// A sample set with caller-chosen unnormalized log-weights.
WeightedSampleSet with_log_weights(std::vector<Segment> segments, Eigen::VectorXd log_weights);

struct GclStep {
  // Importance-sampled MaxEnt log-likelihood estimate
  // mean_i R(tau_i) - log((1/M) sum_j w_j), the quantity being maximized.
  double objective = 0.0;
  // Gradient of the minimized loss -objective + (l2/2) |W|^2 over weight
  // matrices, with the sample weights held at their normalized values.
  nn::Params grads;
};

// Throws ArgumentError for empty sets or mismatched segment lengths.
GclStep gcl_gradient(const RewardNet& net, const std::vector<Segment>& expert,
                     const WeightedSampleSet& samples, double l2);
// The objective alone (used by finite-difference checks): weights are
// recomputed from `policy` so the result is a function of the parameters only.
double gcl_objective(const RewardNet& net, const Policy& policy, const std::vector<Segment>& expert,
                     const std::vector<Segment>& samples);

// One Adam step along the gradient; returns the objective before the step.
double gcl_update(RewardNet& net, const std::vector<Segment>& expert, const WeightedSampleSet& samples,
                  double l2);

// Total number of length-h windows across trajectories.
std::size_t window_count(const std::vector<Trajectory>& trajectories, int h);

// `count` windows drawn uniformly over all length-h windows, which picks a
// trajectory in proportion to its number of windows.
std::vector<Segment> segment_expert(const std::vector<Trajectory>& trajectories, int h, std::size_t count,
                                    Rng& rng);

// "OMGRL-RWD v1"
void save_reward(std::ostream& out, const RewardNet& net, int segment_length);
RewardNet load_reward(std::istream& in, int* segment_length = nullptr);

}  // namespace omgrl::reward
