#include "omgrl/reward.hpp"

#include "omgrl/dynamics.hpp"
#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>

namespace omgrl::reward {

RewardNet::RewardNet(nn::DenseNet net, double r_max, nn::AdamConfig adam)
    : net_(std::move(net)), adam_(nn::AdamState::for_net(net_, adam)), r_max_(r_max) {
  if (net_.input_dim() != dynamics::kInputDim || net_.output_dim() != 1 ||
      net_.output_head() != nn::OutputHead::linear) {
    throw ShapeError("reward net must map 22 inputs to one linear output");
  }
  if (!(r_max > 0.0)) throw ArgumentError("r_max must be positive");
}

RewardNet RewardNet::create(const RewardConfig& config, Rng& rng) {
  std::vector<int> sizes{dynamics::kInputDim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);
  return RewardNet(nn::DenseNet::initialized(sizes, config.activation, nn::OutputHead::linear, rng),
                   config.r_max, config.adam);
}

Eigen::VectorXd RewardNet::evaluate(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd z = nn::forward(net_, inputs).output;
  return (r_max_ * (z.row(0).array() / r_max_).tanh()).transpose();
}

double RewardNet::operator()(const PatientState& s, ActionClass a) const {
  return evaluate(dynamics::encode_inputs({s}, {a}))[0];
}

Eigen::VectorXd RewardNet::rewards(const std::vector<Transition>& batch) const {
  return evaluate(dynamics::encode_inputs(batch));
}

double trajectory_reward(const RewardNet& net, const Segment& segment) {
  if (segment.empty()) throw ArgumentError("trajectory_reward: empty segment");
  return net.rewards(segment).sum();
}

namespace {

double log_sum_exp(const Eigen::VectorXd& x) {
  const double m = x.maxCoeff();
  return m + std::log((x.array() - m).exp().sum());
}

std::vector<Transition> concat(const std::vector<Segment>& segments) {
  std::vector<Transition> out;
  for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// Per-segment sums of the reward over one batched forward pass.
Eigen::VectorXd segment_sums(const RewardNet& net, const std::vector<Segment>& segments) {
  const Eigen::VectorXd r = net.rewards(concat(segments));
  Eigen::VectorXd sums(static_cast<Eigen::Index>(segments.size()));
  Eigen::Index k = 0;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    const auto len = static_cast<Eigen::Index>(segments[j].size());
    sums[static_cast<Eigen::Index>(j)] = r.segment(k, len).sum();
    k += len;
  }
  return sums;
}

void check_segments(const std::vector<Segment>& segments, const char* what) {
  if (segments.empty()) throw ArgumentError(std::string(what) + " segment set is empty");
  for (const auto& s : segments) {
    if (s.empty()) throw ArgumentError(std::string(what) + " segment is empty");
  }
}

}  // namespace

WeightedSampleSet with_log_weights(std::vector<Segment> segments, Eigen::VectorXd log_weights) {
  if (log_weights.size() != static_cast<Eigen::Index>(segments.size())) {
    throw ShapeError("one log-weight per segment expected");
  }
  check_segments(segments, "sample");
  WeightedSampleSet out;
  out.segments = std::move(segments);
  out.weights = (log_weights.array() - log_sum_exp(log_weights)).exp();
  out.log_weights = std::move(log_weights);
  return out;
}

WeightedSampleSet importance_weights(const RewardNet& net, const Policy& policy,
                                     std::vector<Segment> segments) {
  check_segments(segments, "sample");
  const Eigen::VectorXd sums = segment_sums(net, segments);
  const std::vector<Transition> flat = concat(segments);
  std::vector<PatientState> states;
  states.reserve(flat.size());
  for (const auto& t : flat) states.push_back(t.state);
  const std::vector<ActionProbs> probs = policy.probabilities(states);

  Eigen::VectorXd log_w = sums;
  std::size_t k = 0;
  for (std::size_t j = 0; j < segments.size(); ++j) {
    for (std::size_t t = 0; t < segments[j].size(); ++t, ++k) {
      log_w[static_cast<Eigen::Index>(j)] -= std::log(probs[k][flat[k].action.index()]);
    }
  }
  return with_log_weights(std::move(segments), std::move(log_w));
}

GclStep gcl_gradient(const RewardNet& net, const std::vector<Segment>& expert,
                     const WeightedSampleSet& samples, double l2) {
  check_segments(expert, "expert");
  check_segments(samples.segments, "sample");
  const std::size_t h = expert.front().size();
  for (const auto* set : {&expert, &samples.segments}) {
    for (const auto& s : *set) {
      if (s.size() != h) throw ArgumentError("expert and sample segments must share one length");
    }
  }

  std::vector<Transition> flat = concat(expert);
  const std::vector<Transition> sample_flat = concat(samples.segments);
  flat.insert(flat.end(), sample_flat.begin(), sample_flat.end());

  const nn::ForwardCache cache = nn::forward(net.net(), dynamics::encode_inputs(flat));
  const double r_max = net.r_max();
  const Eigen::ArrayXd t = (cache.output.row(0).array() / r_max).tanh().transpose();
  const Eigen::ArrayXd r = r_max * t;

  const auto n_expert = static_cast<double>(expert.size());
  const auto m = static_cast<double>(samples.segments.size());
  const auto expert_steps = static_cast<Eigen::Index>(expert.size() * h);

  GclStep out;
  out.objective = r.head(expert_steps).sum() / n_expert - (log_sum_exp(samples.log_weights) - std::log(m));

  // dLoss/dr for every step, then through the squashing.
  Eigen::ArrayXd d_r(r.size());
  d_r.head(expert_steps) = -1.0 / n_expert;
  for (std::size_t j = 0; j < samples.segments.size(); ++j) {
    d_r.segment(expert_steps + static_cast<Eigen::Index>(j * h), static_cast<Eigen::Index>(h)) =
        samples.weights[static_cast<Eigen::Index>(j)];
  }
  const Eigen::MatrixXd upstream = (d_r * (1.0 - t.square())).matrix().transpose();
  out.grads = nn::backward(net.net(), cache, upstream).params;
  if (l2 != 0.0) {
    for (std::size_t l = 0; l < out.grads.size(); ++l) out.grads[l].weight += l2 * net.net().params()[l].weight;
  }
  return out;
}

double gcl_objective(const RewardNet& net, const Policy& policy, const std::vector<Segment>& expert,
                     const std::vector<Segment>& samples) {
  check_segments(expert, "expert");
  const WeightedSampleSet ws = importance_weights(net, policy, samples);
  return segment_sums(net, expert).mean() -
         (log_sum_exp(ws.log_weights) - std::log(static_cast<double>(samples.size())));
}

double gcl_update(RewardNet& net, const std::vector<Segment>& expert, const WeightedSampleSet& samples,
                  double l2) {
  GclStep step = gcl_gradient(net, expert, samples, l2);
  if (!std::isfinite(step.objective)) throw NumericError("non-finite reward objective");
  nn::adam_step(net.net(), step.grads, net.adam());
  return step.objective;
}

std::size_t window_count(const std::vector<Trajectory>& trajectories, int h) {
  if (h < 1) throw ArgumentError("segment length must be >= 1");
  std::size_t total = 0;
  for (const auto& t : trajectories) {
    const std::size_t n = t.transitions.size();
    if (n >= static_cast<std::size_t>(h)) total += n - static_cast<std::size_t>(h) + 1;
  }
  return total;
}

std::vector<Segment> segment_expert(const std::vector<Trajectory>& trajectories, int h, std::size_t count,
                                    Rng& rng) {
  const std::size_t total = window_count(trajectories, h);
  if (total == 0) throw DataError("no trajectory has at least " + std::to_string(h) + " transitions");
  std::vector<std::size_t> cumulative;
  cumulative.reserve(trajectories.size());
  std::size_t acc = 0;
  for (const auto& t : trajectories) {
    const std::size_t n = t.transitions.size();
    acc += n >= static_cast<std::size_t>(h) ? n - static_cast<std::size_t>(h) + 1 : 0;
    cumulative.push_back(acc);
  }
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t w = uniform_index(rng, total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), w);
    const auto traj = static_cast<std::size_t>(it - cumulative.begin());
    const std::size_t start = w - (traj == 0 ? 0 : cumulative[traj - 1]);
    const auto& tr = trajectories[traj].transitions;
    out.emplace_back(tr.begin() + static_cast<std::ptrdiff_t>(start),
                     tr.begin() + static_cast<std::ptrdiff_t>(start) + h);
  }
  return out;
}

void save_reward(std::ostream& out, const RewardNet& net, int segment_length) {
  textio::Writer w(out);
  w.magic("OMGRL-RWD v1");
  w.key("r_max");
  w.value(net.r_max());
  w.endl();
  w.key("segment_length");
  w.value(segment_length);
  w.endl();
  w.key("net");
  w.endl();
  nn::save_net(out, net.net(), &net.adam());
  w.key("end");
  w.endl();
}

RewardNet load_reward(std::istream& in, int* segment_length) {
  textio::Reader r(in);
  r.expect_magic("OMGRL-RWD v1");
  r.expect_key("r_max");
  const double r_max = r.real();
  r.expect_key("segment_length");
  const auto h = static_cast<int>(r.integer());
  r.expect_key("net");
  nn::AdamState adam;
  nn::DenseNet net = nn::load_net(in, &adam);
  r.expect_key("end");
  RewardNet out(std::move(net), r_max, adam.config);
  out.adam() = std::move(adam);
  if (segment_length) *segment_length = h;
  return out;
}

}  // namespace omgrl::reward
