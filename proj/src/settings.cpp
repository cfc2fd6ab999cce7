#include "omgrl/settings.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <sstream>

namespace omgrl::settings {

std::uint64_t global_seed(const Config& cfg) { return cfg.get_u64("seed", 1); }

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::string compact;
  for (char ch : text) {
    if (ch != ' ' && ch != '\t') compact.push_back(ch);
  }
  std::stringstream ss(compact);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::int64_t w = 0;
    try {
      w = textio::parse_int(item);
    } catch (const DataError&) {
      throw ArgumentError("layer widths must be integers: '" + text + "'");
    }
    if (w < 1) throw ArgumentError("layer widths must be positive: '" + text + "'");
    out.push_back(static_cast<int>(w));
  }
  if (out.empty()) throw ArgumentError("empty layer width list");
  return out;
}

namespace {

std::uint64_t seed_of(const Config& cfg, const std::string& section) {
  return cfg.get_u64(section + ".seed", global_seed(cfg));
}

std::vector<int> widths(const Config& cfg, const std::string& key, const std::vector<int>& fallback) {
  return cfg.has(key) ? parse_widths(cfg.get(key)) : fallback;
}

nn::Activation activation(const Config& cfg, const std::string& key, nn::Activation fallback) {
  return cfg.has(key) ? nn::parse_activation(cfg.get(key)) : fallback;
}

int positive(const Config& cfg, const std::string& key, int fallback, int minimum = 1) {
  const long v = cfg.get_int(key, fallback);
  if (v < minimum) throw ArgumentError("config key '" + key + "' must be >= " + std::to_string(minimum));
  return static_cast<int>(v);
}

}  // namespace

synth::SynthConfig synth(const Config& cfg) {
  synth::SynthConfig c = synth::from_config(cfg);
  c.seed = seed_of(cfg, "synth");
  return c;
}

dynamics::DynamicsConfig dynamics(const Config& cfg) {
  dynamics::DynamicsConfig c;
  c.hidden = widths(cfg, "dynamics.hidden", c.hidden);
  c.activation = activation(cfg, "dynamics.activation", c.activation);
  c.adam.lr = cfg.get_double("dynamics.lr", c.adam.lr);
  c.epochs = positive(cfg, "dynamics.epochs", c.epochs, 0);
  c.batch_size = positive(cfg, "dynamics.batch_size", c.batch_size);
  c.members = positive(cfg, "dynamics.members", c.members);
  c.keep = positive(cfg, "dynamics.keep", c.keep);
  if (c.keep > c.members) throw ArgumentError("dynamics.keep exceeds dynamics.members");
  c.seed = seed_of(cfg, "dynamics");
  return c;
}

orchestrator::TrainConfig train(const Config& cfg) {
  orchestrator::TrainConfig c;
  c.mode = orchestrator::parse_mode(cfg.get_or("orchestrator.mode", "omgrl"));
  c.epochs = positive(cfg, "orchestrator.epochs", c.epochs, 0);
  c.reward_steps = positive(cfg, "orchestrator.reward_steps", c.reward_steps, 0);
  c.updates_per_epoch = positive(cfg, "orchestrator.updates_per_epoch", c.updates_per_epoch, 0);
  c.rollout.horizon = positive(cfg, "orchestrator.rollout_horizon", c.rollout.horizon);
  c.rollout.batch = positive(cfg, "orchestrator.rollout_batch", c.rollout.batch, 0);
  c.eval_interval = positive(cfg, "orchestrator.eval_interval", c.eval_interval, 0);
  c.eval_episodes = positive(cfg, "orchestrator.eval_episodes", c.eval_episodes, 0);
  c.eval_steps = positive(cfg, "orchestrator.eval_steps", c.eval_steps);
  c.sample_capacity = static_cast<std::size_t>(positive(cfg, "orchestrator.sample_capacity", 100000, 0));
  c.seed = seed_of(cfg, "orchestrator");
  c.rollout.seed = c.seed;

  auto& a = c.agent;
  a.hidden = widths(cfg, "agent.hidden", a.hidden);
  a.activation = activation(cfg, "agent.activation", a.activation);
  a.critic_adam.lr = cfg.get_double("agent.critic_lr", a.critic_adam.lr);
  a.actor_adam.lr = cfg.get_double("agent.actor_lr", a.actor_adam.lr);
  a.entropy_temperature = cfg.get_double("agent.entropy_temperature", a.entropy_temperature);
  a.target_tau = cfg.get_double("agent.target_tau", a.target_tau);
  a.cql.alpha = cfg.get_double("agent.alpha", a.cql.alpha);
  a.cql.lambda = cfg.get_double("agent.lambda", a.cql.lambda);
  a.cql.gamma = cfg.get_double("agent.gamma", a.cql.gamma);
  a.batch_size = positive(cfg, "agent.batch_size", a.batch_size);
  a.penalty_ceiling = cfg.get_double("agent.penalty_ceiling", a.penalty_ceiling);

  auto& r = c.reward;
  r.hidden = widths(cfg, "reward.hidden", r.hidden);
  r.activation = activation(cfg, "reward.activation", r.activation);
  r.adam.lr = cfg.get_double("reward.lr", r.adam.lr);
  r.r_max = cfg.get_double("reward.r_max", r.r_max);
  r.segment_batch = positive(cfg, "reward.segment_batch", r.segment_batch);
  r.l2 = cfg.get_double("reward.l2", r.l2);
  r.segment_length = c.rollout.horizon;

  c.validate();
  return c;
}

EvalSettings evaluation(const Config& cfg) {
  EvalSettings e;
  e.episodes = positive(cfg, "eval.episodes", e.episodes);
  e.steps = positive(cfg, "eval.steps", e.steps);
  e.seeds = positive(cfg, "eval.seeds", e.seeds);
  e.success.episodes = positive(cfg, "eval.success_episodes", e.success.episodes);
  e.success.steps = positive(cfg, "eval.success_steps", e.success.steps);
  e.success.threshold = cfg.get_double("eval.success_threshold", e.success.threshold);
  e.success.duration = positive(cfg, "eval.success_duration", e.success.duration);
  e.behavior.epochs = positive(cfg, "eval.behavior_epochs", e.behavior.epochs, 0);
  e.behavior.hidden = widths(cfg, "eval.behavior_hidden", e.behavior.hidden);
  e.behavior.floor = cfg.get_double("eval.behavior_floor", e.behavior.floor);
  e.wis.gamma = cfg.get_double("eval.gamma", e.wis.gamma);
  e.wis.floor = e.behavior.floor;
  e.wis.ratio_min = cfg.get_double("eval.ratio_min", e.wis.ratio_min);
  e.wis.ratio_max = cfg.get_double("eval.ratio_max", e.wis.ratio_max);
  e.tendency_bins = positive(cfg, "eval.tendency_bins", e.tendency_bins, 2);
  e.seed = seed_of(cfg, "eval");
  e.behavior.seed = e.seed;
  return e;
}

}  // namespace omgrl::settings
