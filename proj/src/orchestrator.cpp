#include "omgrl/orchestrator.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace omgrl::orchestrator {

std::string to_string(Mode m) {
  switch (m) {
    case Mode::omgrl: return "omgrl";
    case Mode::combo: return "combo";
    case Mode::modelfree: return "modelfree";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "omgrl") return Mode::omgrl;
  if (s == "combo") return Mode::combo;
  if (s == "modelfree") return Mode::modelfree;
  throw ArgumentError("unknown training mode '" + s + "' (expected omgrl, combo or modelfree)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (mode == Mode::omgrl && reward_steps < 1) throw ArgumentError("omgrl mode needs reward_steps >= 1");
  if (updates_per_epoch < 0) throw ArgumentError("updates_per_epoch must be >= 0");
  if (rollout.horizon < 1 || rollout.batch < 0) throw ArgumentError("rollout horizon must be >= 1 and batch >= 0");
  if (reward.segment_length != rollout.horizon) {
    throw ArgumentError("reward segment length must equal the rollout horizon");
  }
  if (reward.segment_batch < 1) throw ArgumentError("reward segment_batch must be >= 1");
  if (agent.batch_size < 1) throw ArgumentError("agent batch_size must be >= 1");
  if (eval_interval < 0 || eval_episodes < 0 || eval_steps < 1) throw ArgumentError("invalid evaluation settings");
  agent.cql.validate();
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {"epoch",       "bellman_loss", "cql_penalty", "policy_loss",
                                                "reward_loss", "eval_rp",      "eval_rpsi"};
  return cols;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  using textio::format_double;
  const auto& cols = metric_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out << r.epoch << "," << format_double(r.bellman_loss) << "," << format_double(r.cql_penalty) << ","
        << format_double(r.policy_loss) << "," << opt(r.reward_loss) << "," << opt(r.eval_rp) << ","
        << opt(r.eval_rpsi) << "\n";
  }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_metrics_csv(out, rows);
}

std::string batch_provenance(const std::vector<Trajectory>& batch) {
  std::ostringstream text;
  textio::Writer w(text);
  std::size_t n = 0;
  for (const auto& traj : batch) {
    for (const auto& t : traj.transitions) {
      write_transition(w, t);
      ++n;
    }
  }
  return std::to_string(n) + ":" + textio::hex64(textio::fnv1a(text.str()));
}

TrainState initial_state(const TrainConfig& config, const std::vector<Trajectory>& batch) {
  TrainState s;
  Rng actor_rng = derive_rng(config.seed, 11);
  Rng critic_rng = derive_rng(config.seed, 12);
  Rng reward_rng = derive_rng(config.seed, 13);
  s.actor = agent::Actor::create(config.agent, actor_rng);
  s.critic = agent::Critic::create(config.agent, critic_rng);
  s.reward_net = reward::RewardNet::create(config.reward, reward_rng);
  s.d_sample = ReplayBuffer(config.sample_capacity);
  s.rng = derive_rng(config.seed, 14);
  s.batch_provenance = batch_provenance(batch);
  return s;
}

Trainer::Trainer(TrainConfig config, TrainData data) : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  state_ = initial_state(config_, data_.batch);
  init_buffers();
}

Trainer::Trainer(TrainConfig config, TrainData data, TrainState resumed)
    : config_(std::move(config)), data_(std::move(data)), state_(std::move(resumed)) {
  config_.validate();
  if (state_.batch_provenance != batch_provenance(data_.batch)) {
    throw StateError("checkpoint was trained on different batch data (" + state_.batch_provenance + ")");
  }
  init_buffers();
}

void Trainer::init_buffers() {
  const std::vector<Transition> all = all_transitions(data_.batch);
  if (all.empty()) throw StateError("training needs a nonempty D_batch");
  d_batch_ = ReplayBuffer();
  d_batch_.push_all(all);
  initial_states_.clear();
  initial_states_.reserve(all.size());
  for (const auto& t : all) initial_states_.push_back(t.state);
  const bool needs_model = config_.mode != Mode::modelfree && config_.rollout.batch > 0;
  if (needs_model && (!data_.ensemble || data_.ensemble->size() == 0)) {
    throw StateError(to_string(config_.mode) + " mode with rollouts needs a trained dynamics ensemble");
  }
}

double Trainer::lambda() const {
  return config_.mode == Mode::modelfree ? 1.0 : config_.agent.cql.lambda;
}

double Trainer::reward_phase(const std::vector<reward::Segment>& rollout_segments) {
  const auto& rc = config_.reward;
  const auto m = static_cast<std::size_t>(rc.segment_batch);
  const int h = config_.rollout.horizon;
  double loss = 0.0;
  for (int k = 0; k < config_.reward_steps; ++k) {
    std::vector<reward::Segment> expert = reward::segment_expert(data_.batch, h, m, state_.rng);
    std::vector<reward::Segment> samples;
    if (rollout_segments.size() >= m) {
      std::vector<std::size_t> idx(rollout_segments.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < m; ++i) {
        std::swap(idx[i], idx[i + uniform_index(state_.rng, idx.size() - i)]);
        samples.push_back(rollout_segments[idx[i]]);
      }
    } else {
      samples = rollout_segments;
      auto pad = reward::segment_expert(data_.batch, h, m - samples.size(), state_.rng);
      samples.insert(samples.end(), pad.begin(), pad.end());
    }
    const reward::WeightedSampleSet ws = reward::importance_weights(state_.reward_net, state_.actor, std::move(samples));
    loss = -reward::gcl_update(state_.reward_net, expert, ws, rc.l2);
    ++state_.reward_steps;
  }
  return loss;
}

std::optional<double> Trainer::evaluate(const eval::RewardSource& source) const {
  if (!data_.eval_env || data_.eval_initial_states.empty() || config_.eval_episodes == 0) return std::nullopt;
  Rng rng = derive_rng(config_.seed, 0xe0000 + static_cast<std::uint64_t>(state_.epoch) * 2 + (source.is_rp() ? 0 : 1));
  return eval::evaluate_return(state_.actor, *data_.eval_env, data_.eval_initial_states, config_.eval_episodes,
                               config_.eval_steps, source, rng)
      .mean;
}

const MetricRow& Trainer::run_epoch() {
  MetricRow row;
  row.epoch = state_.epoch + 1;

  // (1) model rollouts into D_sample
  dynamics::RolloutResult rollout;
  if (config_.mode != Mode::modelfree && config_.rollout.batch > 0) {
    dynamics::EnsembleEnvironment model(*data_.ensemble);
    rollout = dynamics::rollout_batch(model, state_.actor, initial_states_, config_.rollout, state_.d_sample,
                                      state_.rng);
    state_.rollout_transitions += static_cast<long>(rollout.added);
  }

  // (2) reward learning
  if (config_.mode == Mode::omgrl) row.reward_loss = reward_phase(rollout.segments);

  // (3) + (4) conservative critic, then policy improvement, with r_psi frozen
  const double lam = lambda();
  const auto n = static_cast<std::size_t>(config_.agent.batch_size);
  double bellman = 0.0, penalty = 0.0, policy = 0.0;
  for (int u = 0; u < config_.updates_per_epoch; ++u) {
    const agent::MixedBatch batch = agent::sample_mixed_batch(d_batch_, state_.d_sample, n, lam, state_.rng);
    std::optional<Eigen::VectorXd> rewards;
    if (config_.mode == Mode::omgrl) rewards = state_.reward_net.rewards(batch.transitions);
    const agent::CriticLoss cl = agent::conservative_critic_update(
        state_.critic, state_.actor, batch, config_.agent.cql, state_.actor.entropy_temperature(), rewards);
    ++state_.critic_steps;
    policy += agent::policy_improvement(state_.actor, state_.critic, batch.states());
    ++state_.actor_steps;
    bellman += cl.bellman;
    penalty += cl.cql_penalty;
  }
  if (config_.updates_per_epoch > 0) {
    const double u = config_.updates_per_epoch;
    row.bellman_loss = bellman / u;
    row.cql_penalty = penalty / u;
    row.policy_loss = policy / u;
  }
  if (!std::isfinite(row.bellman_loss) || !std::isfinite(row.cql_penalty) || !std::isfinite(row.policy_loss) ||
      (row.reward_loss && !std::isfinite(*row.reward_loss))) {
    throw NumericError("non-finite loss in epoch " + std::to_string(row.epoch));
  }

  state_.epoch = row.epoch;
  // (5) evaluation
  if (config_.eval_interval > 0 && state_.epoch % config_.eval_interval == 0) {
    row.eval_rp = evaluate(eval::RewardSource::rp());
    if (config_.mode == Mode::omgrl) row.eval_rpsi = evaluate(eval::RewardSource::rpsi(state_.reward_net));
  }
  state_.metrics.push_back(row);
  return state_.metrics.back();
}

void Trainer::run(int last_epoch, const std::function<void(const TrainState&)>& after_epoch) {
  while (state_.epoch < last_epoch) {
    run_epoch();
    if (after_epoch) after_epoch(state_);
  }
}

namespace {

TrainState train_in_mode(Mode mode, TrainConfig config, TrainData data) {
  config.mode = mode;
  const int epochs = config.epochs;
  Trainer trainer(std::move(config), std::move(data));
  trainer.run(epochs);
  return trainer.state();
}

}  // namespace

TrainState train_omgrl(TrainConfig config, TrainData data) {
  return train_in_mode(Mode::omgrl, std::move(config), std::move(data));
}

TrainState train_combo(TrainConfig config, TrainData data) {
  return train_in_mode(Mode::combo, std::move(config), std::move(data));
}

TrainState train_modelfree(TrainConfig config, TrainData data) {
  return train_in_mode(Mode::modelfree, std::move(config), std::move(data));
}

namespace {

void write_optional(textio::Writer& w, const std::optional<double>& v) {
  if (v) {
    w.value(*v);
  } else {
    w.value(std::string_view("-"));
  }
}

std::optional<double> read_optional(textio::Reader& r) {
  const std::string tok = r.token();
  if (tok == "-") return std::nullopt;
  return textio::parse_double(tok);
}

}  // namespace

void save_run(std::ostream& out, const TrainState& state, const TrainConfig& config,
              const std::string& config_fingerprint) {
  textio::Writer w(out);
  w.magic("OMGRL-RUN v1");
  w.key("config");
  w.value(std::string_view(config_fingerprint.empty() ? "-" : config_fingerprint));
  w.endl();
  w.key("batch");
  w.value(std::string_view(state.batch_provenance));
  w.endl();
  w.key("counters");
  w.value(state.epoch);
  w.value(static_cast<std::int64_t>(state.reward_steps));
  w.value(static_cast<std::int64_t>(state.critic_steps));
  w.value(static_cast<std::int64_t>(state.actor_steps));
  w.value(static_cast<std::int64_t>(state.rollout_transitions));
  w.endl();
  std::ostringstream rng_text;
  rng_text << state.rng;
  w.key("rng");
  w.value(std::string_view(rng_text.str()));
  w.endl();
  w.key("metrics");
  w.value(state.metrics.size());
  w.endl();
  for (const auto& m : state.metrics) {
    w.key("m");
    w.value(m.epoch);
    w.value(m.bellman_loss);
    w.value(m.cql_penalty);
    w.value(m.policy_loss);
    write_optional(w, m.reward_loss);
    write_optional(w, m.eval_rp);
    write_optional(w, m.eval_rpsi);
    w.endl();
  }
  w.key("agent");
  w.endl();
  agent::save_agent(out, state.actor, state.critic, config.agent.cql);
  w.key("reward");
  w.endl();
  reward::save_reward(out, state.reward_net, config.rollout.horizon);
  w.key("d_sample");
  w.endl();
  state.d_sample.save(w);
  w.key("end");
  w.endl();
}

TrainState load_run(std::istream& in, std::string* config_fingerprint) {
  textio::Reader r(in);
  r.expect_magic("OMGRL-RUN v1");
  TrainState s;
  r.expect_key("config");
  const std::string fp = r.token();
  if (config_fingerprint) *config_fingerprint = fp == "-" ? std::string() : fp;
  r.expect_key("batch");
  s.batch_provenance = r.token();
  r.expect_key("counters");
  s.epoch = static_cast<int>(r.integer());
  s.reward_steps = r.integer();
  s.critic_steps = r.integer();
  s.actor_steps = r.integer();
  s.rollout_transitions = r.integer();
  r.expect_key("rng");
  std::istringstream rng_text(r.rest_of_line());
  rng_text >> s.rng;
  if (!rng_text) throw DataError("OMGRL-RUN v1: malformed RNG state");
  r.expect_key("metrics");
  const auto n = r.integer();
  if (n < 0) throw DataError("OMGRL-RUN v1: negative metric count");
  for (std::int64_t i = 0; i < n; ++i) {
    r.expect_key("m");
    MetricRow m;
    m.epoch = static_cast<int>(r.integer());
    m.bellman_loss = r.real();
    m.cql_penalty = r.real();
    m.policy_loss = r.real();
    m.reward_loss = read_optional(r);
    m.eval_rp = read_optional(r);
    m.eval_rpsi = read_optional(r);
    s.metrics.push_back(m);
  }
  r.expect_key("agent");
  agent::CqlConfig cql;
  agent::load_agent(in, s.actor, s.critic, cql);
  r.expect_key("reward");
  s.reward_net = reward::load_reward(in);
  r.expect_key("d_sample");
  s.d_sample = ReplayBuffer::load(r);
  r.expect_key("end");
  return s;
}

void save_run(const std::string& path, const TrainState& state, const TrainConfig& config,
              const std::string& config_fingerprint) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + tmp);
    save_run(out, state, config, config_fingerprint);
    if (!out) throw DataError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot replace " + path);
}

TrainState load_run(const std::string& path, std::string* config_fingerprint) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_run(in, config_fingerprint);
}

}  // namespace omgrl::orchestrator
