#include "omgrl/dynamics.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace omgrl::dynamics {

Eigen::MatrixXd encode_inputs(const std::vector<PatientState>& states,
                              const std::vector<ActionClass>& actions) {
  if (states.size() != actions.size()) throw ShapeError("encode_inputs: states/actions length mismatch");
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(kInputDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    x.col(c).head(kStateDim) = states[i].features;
    x(kStateDim + actions[i].index(), c) = 1.0;
  }
  return x;
}

Eigen::MatrixXd encode_inputs(const std::vector<Transition>& batch) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(kInputDim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    x.col(c).head(kStateDim) = batch[i].state.features;
    x(kStateDim + batch[i].action.index(), c) = 1.0;
  }
  return x;
}

Eigen::MatrixXd encode_targets(const std::vector<Transition>& batch) {
  Eigen::MatrixXd y(kOutputDim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    y.col(c).head(kStateDim) = batch[i].next_state.features - batch[i].state.features;
    y(kStateDim, c) = batch[i].reward;
  }
  return y;
}

ProbabilisticDynamicsModel::ProbabilisticDynamicsModel(nn::DenseNet net) : net_(std::move(net)) {
  if (net_.input_dim() != kInputDim || net_.output_dim() != 2 * kOutputDim ||
      net_.output_head() != nn::OutputHead::gaussian) {
    throw ShapeError("dynamics model must map 22 inputs to a 17-dim Gaussian head");
  }
}

ProbabilisticDynamicsModel ProbabilisticDynamicsModel::create(const DynamicsConfig& config, Rng& rng) {
  std::vector<int> sizes{kInputDim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(2 * kOutputDim);
  return ProbabilisticDynamicsModel(
      nn::DenseNet::initialized(sizes, config.activation, nn::OutputHead::gaussian, rng));
}

ProbabilisticDynamicsModel::Prediction ProbabilisticDynamicsModel::predict(const Eigen::MatrixXd& inputs) const {
  const Eigen::MatrixXd out = nn::forward(net_, inputs).output;
  Prediction p;
  p.mean = out.topRows(kOutputDim);
  p.mean.topRows(kStateDim) += inputs.topRows(kStateDim);
  p.log_var = out.bottomRows(kOutputDim);
  return p;
}

ProbabilisticDynamicsModel::Prediction ProbabilisticDynamicsModel::predict(
    const std::vector<PatientState>& states, const std::vector<ActionClass>& actions) const {
  return predict(encode_inputs(states, actions));
}

BatchNll batch_gaussian_nll(const Eigen::MatrixXd& head_output, const Eigen::MatrixXd& targets) {
  const Eigen::Index d = targets.rows();
  const Eigen::Index n = targets.cols();
  if (head_output.rows() != 2 * d || head_output.cols() != n) {
    throw ShapeError("batch_gaussian_nll: output/target shapes disagree");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::ArrayXXd log_var = head_output.bottomRows(d).array();
  const Eigen::ArrayXXd inv_var = (-log_var).exp();
  const Eigen::ArrayXXd diff = targets.array() - head_output.topRows(d).array();
  BatchNll out;
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss = (half_log_2pi + 0.5 * log_var + 0.5 * diff.square() * inv_var).sum() * inv_n;
  out.upstream.resize(2 * d, n);
  out.upstream.topRows(d) = (-diff * inv_var * inv_n).matrix();
  out.upstream.bottomRows(d) = ((0.5 - 0.5 * diff.square() * inv_var) * inv_n).matrix();
  return out;
}

double ProbabilisticDynamicsModel::mean_nll(const std::vector<Transition>& data) const {
  if (data.empty()) throw ArgumentError("mean_nll: empty data");
  const Eigen::MatrixXd out = nn::forward(net_, encode_inputs(data)).output;
  return batch_gaussian_nll(out, encode_targets(data)).loss;
}

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx,
                               std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) = m.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

}  // namespace

std::vector<TrainedMember> train_dynamics(const std::vector<Transition>& train,
                                          const std::vector<Transition>& val,
                                          const DynamicsConfig& config) {
  if (train.empty() || val.empty()) throw ArgumentError("train_dynamics: train and validation sets must be nonempty");
  if (config.members < 1 || config.epochs < 0 || config.batch_size < 1) {
    throw ArgumentError("train_dynamics: invalid configuration");
  }
  const Eigen::MatrixXd x = encode_inputs(train);
  const Eigen::MatrixXd y = encode_targets(train);
  const Eigen::MatrixXd x_val = encode_inputs(val);
  const Eigen::MatrixXd y_val = encode_targets(val);
  const std::size_t n = train.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);

  std::vector<TrainedMember> members;
  int survivors = 0;
  for (int m = 0; m < config.members; ++m) {
    Rng init_rng = derive_rng(config.seed, 2 * static_cast<std::uint64_t>(m) + 1);
    Rng shuffle_rng = derive_rng(config.seed, 2 * static_cast<std::uint64_t>(m) + 2);
    TrainedMember member;
    member.index = m;
    member.model = ProbabilisticDynamicsModel::create(config, init_rng);
    nn::DenseNet& net = member.model.net();
    nn::AdamState adam = nn::AdamState::for_net(net, config.adam);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    try {
      for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t b = 0; b < n; b += batch) {
          const std::size_t e = std::min(n, b + batch);
          const Eigen::MatrixXd xb = gather_columns(x, order, b, e);
          const Eigen::MatrixXd yb = gather_columns(y, order, b, e);
          const nn::ForwardCache cache = nn::forward(net, xb);
          const BatchNll nll = batch_gaussian_nll(cache.output, yb);
          if (!std::isfinite(nll.loss)) {
            throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
          }
          nn::adam_step(net, nn::backward(net, cache, nll.upstream).params, adam);
        }
        member.train_curve.push_back(batch_gaussian_nll(nn::forward(net, x).output, y).loss);
        member.val_curve.push_back(batch_gaussian_nll(nn::forward(net, x_val).output, y_val).loss);
        if (!std::isfinite(member.train_curve.back()) || !std::isfinite(member.val_curve.back())) {
          throw NumericError("non-finite epoch NLL at epoch " + std::to_string(epoch));
        }
      }
      member.val_nll = member.val_curve.empty()
                           ? batch_gaussian_nll(nn::forward(net, x_val).output, y_val).loss
                           : member.val_curve.back();
      ++survivors;
    } catch (const NumericError& err) {
      member.failed = true;
      member.diagnostic = "member " + std::to_string(m) + ": " + err.what();
      member.val_nll = std::numeric_limits<double>::infinity();
    }
    members.push_back(std::move(member));
  }
  if (survivors < config.keep) {
    std::string why = "train_dynamics: only " + std::to_string(survivors) + " of " +
                      std::to_string(config.members) + " members survived";
    for (const auto& m : members) {
      if (m.failed) why += "; " + m.diagnostic;
    }
    throw NumericError(why);
  }
  return members;
}

DynamicsEnsemble select_top(const std::vector<TrainedMember>& members, int k) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!members[i].failed) idx.push_back(i);
  }
  if (k < 1 || static_cast<std::size_t>(k) > idx.size()) {
    throw ArgumentError("select_top: cannot keep " + std::to_string(k) + " of " + std::to_string(idx.size()) +
                        " available members");
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (members[a].val_nll != members[b].val_nll) return members[a].val_nll < members[b].val_nll;
    return members[a].index < members[b].index;
  });
  DynamicsEnsemble e;
  for (int i = 0; i < k; ++i) {
    e.members.push_back(members[idx[static_cast<std::size_t>(i)]].model);
    e.val_nll.push_back(members[idx[static_cast<std::size_t>(i)]].val_nll);
  }
  return e;
}

EnsembleSample ensemble_sample(const DynamicsEnsemble& ensemble, const PatientState& state,
                               ActionClass action, Rng& rng, double noise_scale) {
  if (ensemble.members.empty()) throw StateError("ensemble_sample: empty ensemble");
  EnsembleSample s;
  s.member = static_cast<int>(uniform_index(rng, ensemble.members.size()));
  const auto pred = ensemble.members[static_cast<std::size_t>(s.member)].predict({state}, {action});
  Eigen::VectorXd draw(kOutputDim);
  for (int d = 0; d < kOutputDim; ++d) {
    draw[d] = pred.mean(d, 0) + noise_scale * std::exp(0.5 * pred.log_var(d, 0)) * standard_normal(rng);
  }
  s.next_state = draw.head(kStateDim);
  s.reward = draw[kStateDim];
  return s;
}

StepResult EnsembleEnvironment::step(const PatientState& s, ActionClass a, Rng& rng) const {
  const EnsembleSample e = ensemble_sample(ensemble_, s, a, rng, noise_scale_);
  StepResult r;
  r.next.features = e.next_state;
  r.next.aptt = 0.0;
  r.reward = e.reward;
  return r;
}

std::vector<StepResult> EnsembleEnvironment::step_batch(const std::vector<PatientState>& states,
                                                        const std::vector<ActionClass>& actions,
                                                        Rng& rng) const {
  if (ensemble_.members.empty()) throw StateError("ensemble step: empty ensemble");
  const std::size_t n = states.size();
  // Draw member indices and noise in index order, then evaluate grouped by member.
  std::vector<std::size_t> member(n);
  Eigen::MatrixXd noise(kOutputDim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    member[i] = uniform_index(rng, ensemble_.members.size());
    for (int d = 0; d < kOutputDim; ++d) noise(d, static_cast<Eigen::Index>(i)) = standard_normal(rng);
  }
  std::vector<StepResult> out(n);
  for (std::size_t m = 0; m < ensemble_.members.size(); ++m) {
    std::vector<std::size_t> rows;
    std::vector<PatientState> st;
    std::vector<ActionClass> ac;
    for (std::size_t i = 0; i < n; ++i) {
      if (member[i] == m) {
        rows.push_back(i);
        st.push_back(states[i]);
        ac.push_back(actions[i]);
      }
    }
    if (rows.empty()) continue;
    const auto pred = ensemble_.members[m].predict(st, ac);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      const auto i = rows[j];
      const Eigen::VectorXd draw =
          pred.mean.col(c).array() +
          noise_scale_ * (0.5 * pred.log_var.col(c).array()).exp() * noise.col(static_cast<Eigen::Index>(i)).array();
      out[i].next.features = draw.head(kStateDim);
      out[i].next.aptt = 0.0;
      out[i].reward = draw[kStateDim];
    }
  }
  return out;
}

namespace {

bool finite(const StepResult& r) { return r.next.features.allFinite() && std::isfinite(r.reward); }

}  // namespace

RolloutResult rollout_batch(const Environment& model, const Policy& policy,
                            const std::vector<PatientState>& initial_states, const RolloutConfig& config,
                            ReplayBuffer& sink, Rng& rng) {
  if (initial_states.empty()) throw StateError("rollout_batch: empty initial-state source");
  if (config.horizon < 1 || config.batch < 1) throw ArgumentError("rollout_batch: horizon and batch must be >= 1");
  const auto b = static_cast<std::size_t>(config.batch);
  RolloutResult result;
  std::vector<PatientState> current(b);
  for (auto& s : current) s = initial_states[uniform_index(rng, initial_states.size())];
  std::vector<std::vector<Transition>> branches(b);
  std::vector<bool> alive(b, true);

  for (int j = 0; j < config.horizon; ++j) {
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < b; ++i) {
      if (alive[i]) live.push_back(i);
    }
    if (live.empty()) break;
    std::vector<PatientState> st;
    for (auto i : live) st.push_back(current[i]);
    const auto probs = policy.probabilities(st);
    std::vector<ActionClass> actions;
    for (const auto& p : probs) actions.push_back(sample_action(p, rng));
    auto next = model.step_batch(st, actions, rng);
    for (std::size_t k = 0; k < live.size(); ++k) {
      const auto i = live[k];
      int redraws = 0;
      while (!finite(next[k]) && redraws < kMaxRedraws) {
        ++redraws;
        ++result.rejected_samples;
        next[k] = model.step(st[k], actions[k], rng);
      }
      if (!finite(next[k])) {
        alive[i] = false;
        ++result.dropped_branches;
        continue;
      }
      branches[i].push_back({st[k], actions[k], next[k].reward, next[k].next, false});
      current[i] = next[k].next;
    }
  }
  for (std::size_t i = 0; i < b; ++i) {
    if (!alive[i]) continue;
    sink.push_all(branches[i]);
    result.added += branches[i].size();
    result.segments.push_back(std::move(branches[i]));
  }
  return result;
}

void save_ensemble(std::ostream& out, const DynamicsEnsemble& ensemble) {
  textio::Writer w(out);
  w.magic("OMGRL-DYN v1");
  w.key("members");
  w.value(ensemble.members.size());
  w.endl();
  w.key("normalizer");
  w.value(ensemble.normalizer_fingerprint.empty() ? std::string("-") : ensemble.normalizer_fingerprint);
  w.endl();
  for (std::size_t i = 0; i < ensemble.members.size(); ++i) {
    w.key("val_nll");
    w.value(ensemble.val_nll[i]);
    w.endl();
    nn::save_net(out, ensemble.members[i].net());
  }
  w.key("end");
  w.endl();
}

DynamicsEnsemble load_ensemble(std::istream& in) {
  textio::Reader r(in);
  r.expect_magic("OMGRL-DYN v1");
  r.expect_key("members");
  const auto k = r.integer();
  r.expect_key("normalizer");
  DynamicsEnsemble e;
  e.normalizer_fingerprint = r.token();
  if (e.normalizer_fingerprint == "-") e.normalizer_fingerprint.clear();
  for (std::int64_t i = 0; i < k; ++i) {
    r.expect_key("val_nll");
    e.val_nll.push_back(r.real());
    e.members.emplace_back(nn::load_net(in));
  }
  r.expect_key("end");
  return e;
}

void save_ensemble(const std::string& path, const DynamicsEnsemble& ensemble) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  save_ensemble(out, ensemble);
}

DynamicsEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_ensemble(in);
}

}  // namespace omgrl::dynamics
