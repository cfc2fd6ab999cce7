#include "omgrl/eval.hpp"

#include "omgrl/agent.hpp"
#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace omgrl::eval {

EvalReport make_report(std::string metric, std::vector<double> values, int episodes, int steps) {
  EvalReport r;
  r.metric = std::move(metric);
  r.episodes = episodes;
  r.steps = steps;
  if (!values.empty()) {
    const auto n = static_cast<double>(values.size());
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - r.mean) * (v - r.mean);
      r.std = std::sqrt(ss / (n - 1.0));
    }
  }
  r.values = std::move(values);
  return r;
}

EvalReport aggregate(const std::vector<EvalReport>& per_seed) {
  if (per_seed.empty()) throw ArgumentError("aggregate: no reports");
  std::vector<double> means;
  for (const auto& r : per_seed) {
    if (r.metric != per_seed.front().metric) throw ArgumentError("aggregate: mixed metrics");
    means.push_back(r.mean);
  }
  EvalReport out = make_report(per_seed.front().metric, std::move(means), per_seed.front().episodes,
                               per_seed.front().steps);
  out.fingerprint = per_seed.front().fingerprint;
  return out;
}

std::vector<std::vector<double>> simulate_episodes(const Policy& policy, const Environment& env,
                                                   const std::vector<PatientState>& initial_states,
                                                   int episodes, int steps, const RewardSource& source,
                                                   Rng& rng) {
  if (steps < 1) throw ArgumentError("evaluation needs steps >= 1");
  if (episodes < 0) throw ArgumentError("episodes must be >= 0");
  if (initial_states.empty()) throw StateError("evaluation initial-state pool is empty");
  std::vector<std::vector<double>> out(static_cast<std::size_t>(episodes));
  for (auto& rewards : out) {
    PatientState s = initial_states[uniform_index(rng, initial_states.size())];
    rewards.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      const ActionClass a = policy.act(s, rng);
      StepResult step = env.step(s, a, rng);
      rewards.push_back(source.is_rp() ? step.reward : (*source.net)(s, a));
      s = std::move(step.next);
    }
  }
  return out;
}

EvalReport evaluate_return(const Policy& policy, const Environment& env,
                           const std::vector<PatientState>& initial_states, int episodes, int steps,
                           const RewardSource& source, Rng& rng) {
  const auto rewards = simulate_episodes(policy, env, initial_states, episodes, steps, source, rng);
  std::vector<double> returns;
  returns.reserve(rewards.size());
  for (const auto& r : rewards) returns.push_back(std::accumulate(r.begin(), r.end(), 0.0));
  return make_report(source.is_rp() ? "return_rp" : "return_rpsi", std::move(returns), episodes, steps);
}

BehaviorPolicy::BehaviorPolicy(nn::DenseNet classifier, double floor) : net_(std::move(classifier)), floor_(floor) {
  if (net_.input_dim() != kStateDim || net_.output_dim() != kNumActions ||
      net_.output_head() != nn::OutputHead::softmax) {
    throw ShapeError("behavior classifier must map 16 features to a 6-way softmax");
  }
  if (!(floor >= 0.0 && floor < 1.0)) throw ArgumentError("behavior floor must lie in [0, 1)");
}

ActionProbs BehaviorPolicy::probabilities(const PatientState& s) const {
  const Eigen::VectorXd p = nn::forward(net_, Eigen::VectorXd(s.features));
  ActionProbs out;
  for (int a = 0; a < kNumActions; ++a) out[a] = p[a];
  return out;
}

std::vector<ActionProbs> BehaviorPolicy::probabilities(const std::vector<PatientState>& states) const {
  const Eigen::MatrixXd p = nn::forward(net_, agent::state_matrix(states)).output;
  std::vector<ActionProbs> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (int a = 0; a < kNumActions; ++a) out[i][a] = p(a, static_cast<Eigen::Index>(i));
  }
  return out;
}

double BehaviorPolicy::floored(const PatientState& s, ActionClass a) const {
  return std::max(probabilities(s)[a.index()], floor_);
}

BehaviorFit fit_behavior_policy(const std::vector<Transition>& data, const BehaviorConfig& config) {
  if (data.empty()) throw ArgumentError("fit_behavior_policy: empty dataset");
  Rng rng = derive_rng(config.seed, 0xbe4a);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(config.validation_fraction * static_cast<double>(data.size()));
  if (n_val >= data.size()) n_val = 0;
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  BehaviorFit fit;
  fit.single_class = std::all_of(data.begin(), data.end(),
                                 [&](const Transition& t) { return t.action == data.front().action; });

  std::vector<int> sizes{kStateDim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(kNumActions);
  nn::DenseNet net = nn::DenseNet::initialized(sizes, nn::Activation::relu, nn::OutputHead::softmax, rng);
  nn::AdamState adam = nn::AdamState::for_net(net, config.adam);

  const auto batch = static_cast<std::size_t>(std::max(1, config.batch_size));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t lo = 0; lo < train.size(); lo += batch) {
      const std::size_t hi = std::min(train.size(), lo + batch);
      const auto n = static_cast<Eigen::Index>(hi - lo);
      Eigen::MatrixXd x(kStateDim, n);
      for (Eigen::Index i = 0; i < n; ++i) x.col(i) = data[train[lo + static_cast<std::size_t>(i)]].state.features;
      const nn::ForwardCache cache = nn::forward(net, x);
      Eigen::MatrixXd up = Eigen::MatrixXd::Zero(kNumActions, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int a = data[train[lo + static_cast<std::size_t>(i)]].action.index();
        up(a, i) = -1.0 / (std::max(cache.output(a, i), 1e-300) * static_cast<double>(n));
      }
      nn::adam_step(net, nn::backward(net, cache, up).params, adam);
    }
  }

  const std::vector<std::size_t>& scored = val.empty() ? train : val;
  long correct = 0;
  for (std::size_t i : scored) {
    const Eigen::VectorXd p = nn::forward(net, Eigen::VectorXd(data[i].state.features));
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    correct += (static_cast<int>(best) == data[i].action.index()) ? 1 : 0;
  }
  fit.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(scored.size());
  fit.policy = BehaviorPolicy(std::move(net), config.floor);
  return fit;
}

double discounted_return(const Trajectory& t, double gamma) {
  double g = 0.0;
  double discount = 1.0;
  for (const auto& tr : t.transitions) {
    g += discount * tr.reward;
    discount *= gamma;
  }
  return g;
}

double weighted_estimate(const std::vector<double>& ratios, const std::vector<double>& returns, double ratio_min) {
  if (ratios.empty() || ratios.size() != returns.size()) {
    throw ArgumentError("weighted_estimate: need matching nonempty ratio and return lists");
  }
  const bool degenerate = std::all_of(ratios.begin(), ratios.end(), [&](double r) { return r <= ratio_min; });
  if (degenerate) {
    throw DegenerateEstimateError("every importance ratio is at the clip floor; the evaluation policy has no support on the logged actions");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    num += ratios[i] * returns[i];
    den += ratios[i];
  }
  return num / den;
}

WisResult wis_estimate(const Policy& eval_policy, const BehaviorPolicy& behavior,
                       const std::vector<Trajectory>& trajectories, const WisConfig& config) {
  if (trajectories.empty()) throw ArgumentError("wis_estimate: no trajectories");
  const double log_min = std::log(config.ratio_min);
  const double log_max = std::log(config.ratio_max);
  WisResult out;
  for (const auto& traj : trajectories) {
    std::vector<PatientState> states;
    for (const auto& t : traj.transitions) states.push_back(t.state);
    const auto pe = eval_policy.probabilities(states);
    const auto pb = behavior.probabilities(states);
    double log_ratio = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
      const int a = traj.transitions[k].action.index();
      log_ratio += std::log(pe[k][a]) - std::log(std::max(pb[k][a], config.floor));
    }
    if (log_ratio <= log_min) {
      out.ratios.push_back(config.ratio_min);
    } else if (log_ratio >= log_max) {
      out.ratios.push_back(config.ratio_max);
    } else {
      out.ratios.push_back(std::exp(log_ratio));
    }
    out.returns.push_back(discounted_return(traj, config.gamma));
  }
  out.estimate = weighted_estimate(out.ratios, out.returns, config.ratio_min);
  return out;
}

bool episode_succeeds(const std::vector<double>& rewards, double threshold, int duration) {
  if (duration < 1) throw ArgumentError("duration must be >= 1");
  int run = 0;
  for (double r : rewards) {
    run = r > threshold ? run + 1 : 0;
    if (run >= duration) return true;
  }
  return false;
}

EvalReport success_rate(const Policy& policy, const Environment& env,
                        const std::vector<PatientState>& initial_states, const SuccessConfig& config,
                        Rng& rng) {
  if (config.duration > config.steps) throw ArgumentError("success duration exceeds episode length");
  const auto rewards =
      simulate_episodes(policy, env, initial_states, config.episodes, config.steps, RewardSource::rp(), rng);
  std::vector<double> outcomes;
  outcomes.reserve(rewards.size());
  for (const auto& r : rewards) outcomes.push_back(episode_succeeds(r, config.threshold, config.duration) ? 1.0 : 0.0);
  return make_report("success_rate", std::move(outcomes), config.episodes, config.steps);
}

AgreementMatrix agreement_matrix(const Policy& policy, const std::vector<Trajectory>& trajectories) {
  AgreementMatrix m;
  Eigen::Matrix<double, kNumActions, kNumActions> counts = decltype(counts)::Zero();
  for (const auto& traj : trajectories) {
    for (const auto& t : traj.transitions) {
      const int chosen = policy.act_greedy(t.state).index();
      counts(t.action.index(), chosen) += 1.0;
      ++m.support[static_cast<std::size_t>(t.action.index())];
    }
  }
  for (int i = 0; i < kNumActions; ++i) {
    if (!m.row_empty(i)) m.rates.row(i) = counts.row(i) / static_cast<double>(m.support[static_cast<std::size_t>(i)]);
  }
  return m;
}

namespace {

double indicator_value(const PatientState& s, int feature) {
  return feature >= 0 ? s.features[feature] : s.aptt;
}

}  // namespace

TendencyCurve dosing_tendency(const Policy& policy, const std::vector<Trajectory>& raw,
                              const std::string& indicator, int bins,
                              const std::vector<Trajectory>* policy_states) {
  const int feature = feature_index(indicator);
  if (feature < 0 && indicator != "aptt") throw ArgumentError("unknown indicator column: " + indicator);
  if (bins < 2) throw ArgumentError("dosing_tendency needs at least 2 bins");
  if (policy_states && policy_states->size() != raw.size()) {
    throw ShapeError("policy-state trajectories do not match the raw trajectories");
  }

  std::vector<double> values;
  std::vector<int> logged;
  std::vector<PatientState> seen;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& tr = raw[i].transitions;
    if (policy_states && (*policy_states)[i].transitions.size() != tr.size()) {
      throw ShapeError("policy-state trajectory length mismatch");
    }
    for (std::size_t k = 0; k < tr.size(); ++k) {
      values.push_back(indicator_value(tr[k].state, feature));
      logged.push_back(tr[k].action.index());
      seen.push_back(policy_states ? (*policy_states)[i].transitions[k].state : tr[k].state);
    }
  }

  TendencyCurve c;
  c.indicator = indicator;
  const auto nb = static_cast<std::size_t>(bins);
  c.counts.assign(nb, 0);
  c.policy_mean.assign(nb, 0.0);
  c.clinician_mean.assign(nb, 0.0);
  if (values.empty()) {
    c.edges.assign(nb + 1, 0.0);
    return c;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= nb; ++b) c.edges.push_back(b == nb ? hi : lo + width * static_cast<double>(b));

  const auto probs = policy.probabilities(seen);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::size_t b = 0;
    if (width > 0.0) b = std::min(nb - 1, static_cast<std::size_t>((values[i] - lo) / width));
    ++c.counts[b];
    c.policy_mean[b] += greedy_action(probs[i]).index();
    c.clinician_mean[b] += logged[i];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (c.counts[b] > 0) {
      c.policy_mean[b] /= static_cast<double>(c.counts[b]);
      c.clinician_mean[b] /= static_cast<double>(c.counts[b]);
    }
  }
  return c;
}

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
  using textio::format_double;
  out << "metric,run,value,episodes,steps,fingerprint\n";
  for (const auto& r : reports) {
    const std::string tail = "," + std::to_string(r.episodes) + "," + std::to_string(r.steps) + "," + r.fingerprint + "\n";
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      out << r.metric << "," << i << "," << format_double(r.values[i]) << tail;
    }
    out << r.metric << ",mean," << format_double(r.mean) << tail;
    out << r.metric << ",std," << format_double(r.std) << tail;
  }
}

void write_agreement_csv(std::ostream& out, const AgreementMatrix& m) {
  out << "clinician_action,support";
  for (int j = 0; j < kNumActions; ++j) out << ",policy_" << j;
  out << "\n";
  for (int i = 0; i < kNumActions; ++i) {
    out << i << "," << m.support[static_cast<std::size_t>(i)];
    for (int j = 0; j < kNumActions; ++j) {
      out << "," << (m.row_empty(i) ? std::string("empty") : textio::format_double(m.rates(i, j)));
    }
    out << "\n";
  }
}

void write_tendency_csv(std::ostream& out, const TendencyCurve& curve) {
  using textio::format_double;
  out << "indicator,bin,lower,upper,count,policy_mean,clinician_mean\n";
  for (std::size_t b = 0; b < curve.counts.size(); ++b) {
    out << curve.indicator << "," << b << "," << format_double(curve.edges[b]) << ","
        << format_double(curve.edges[b + 1]) << "," << curve.counts[b] << ",";
    if (curve.empty(b)) {
      out << "empty,empty\n";
    } else {
      out << format_double(curve.policy_mean[b]) << "," << format_double(curve.clinician_mean[b]) << "\n";
    }
  }
}

void write_long_csv(std::ostream& out, const std::vector<LongRow>& rows) {
  out << "metric,x,y,series\n";
  for (const auto& r : rows) {
    out << r.metric << "," << textio::format_double(r.x) << "," << textio::format_double(r.y) << "," << r.series
        << "\n";
  }
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("spearman needs two equal-length samples of size >= 2");
  const auto n = static_cast<Eigen::Index>(x.size());
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  Eigen::ArrayXd a = Eigen::Map<const Eigen::ArrayXd>(rx.data(), n);
  Eigen::ArrayXd b = Eigen::Map<const Eigen::ArrayXd>(ry.data(), n);
  a -= a.mean();
  b -= b.mean();
  const double denom = std::sqrt((a * a).sum() * (b * b).sum());
  if (denom == 0.0) throw DegenerateEstimateError("spearman: a sample is constant");
  return (a * b).sum() / denom;
}

std::vector<double> minmax_normalize(const std::vector<double>& values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

}  // namespace omgrl::eval
