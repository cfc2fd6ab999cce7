#include "omgrl/cli.hpp"

#include "omgrl/config.hpp"
#include "omgrl/error.hpp"
#include "omgrl/settings.hpp"
#include "omgrl/textio.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace omgrl::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  std::string verb;
  Config config;
  fs::path out_dir;
  bool strict = false;
  std::ostream* log = nullptr;
  std::vector<std::pair<std::string, std::string>> inputs;   // name, path
  std::vector<std::pair<std::string, std::string>> outputs;  // name, path

  std::string path(const std::string& file) const { return (out_dir / file).string(); }
  void input(const std::string& name, const std::string& p) { inputs.emplace_back(name, p); }
  void output(const std::string& name, const std::string& p) { outputs.emplace_back(name, p); }
};

void write_manifest(const Context& ctx) {
  const std::string cfg_path = ctx.path("config-" + ctx.verb + ".cfg");
  ctx.config.save(cfg_path);
  std::ofstream m(ctx.path("manifest-" + ctx.verb + ".txt"));
  if (!m) throw DataError("cannot write manifest in " + ctx.out_dir.string());
  m << "verb=" << ctx.verb << "\n";
  m << "seed=" << settings::global_seed(ctx.config) << "\n";
  m << "strict=" << (ctx.strict ? 1 : 0) << "\n";
  m << "config=" << fs::path(cfg_path).filename().string() << "\n";
  m << "config_fingerprint=" << ctx.config.fingerprint() << "\n";
  for (const auto& [name, p] : ctx.inputs) m << "input." << name << "=" << textio::file_hash(p) << "\n";
  for (const auto& [name, p] : ctx.outputs) m << "output." << name << "=" << textio::file_hash(p) << "\n";
}

std::string existing(const std::string& p, const std::string& what) {
  if (!fs::exists(p)) throw StateError(what + " not found: " + p + " (run the producing command first)");
  return p;
}

BinEdges edges_for(const Context& ctx, const std::string& key, const std::string& fallback) {
  return load_bin_edges(existing(ctx.config.get_or(key, fallback), "bin edges"));
}

std::vector<Trajectory> load_split(Context& ctx, const std::string& name, const BinEdges& edges) {
  const std::string p = existing(ctx.path(name), name);
  ctx.input(name, p);
  LoadOptions opts;
  opts.edges = edges;
  opts.min_horizon = 1;
  return load_trajectories(p, opts).trajectories;
}

std::vector<PatientState> initial_states(const std::vector<Trajectory>& trajectories) {
  std::vector<PatientState> out;
  for (const auto& t : trajectories) {
    if (!t.transitions.empty()) out.push_back(t.transitions.front().state);
  }
  return out;
}

// Owns whichever environment evaluation runs against: the synthetic ground
// truth when its config is available, otherwise the learned ensemble.
struct EvalEnvironment {
  std::unique_ptr<synth::SynthEnv> truth;
  std::unique_ptr<NormalizedEnvironment> normalized;
  std::unique_ptr<dynamics::DynamicsEnsemble> ensemble;
  std::unique_ptr<dynamics::EnsembleEnvironment> model;
  std::string description;

  const Environment* get() const {
    if (normalized) return normalized.get();
    return model.get();
  }
};

EvalEnvironment eval_environment(Context& ctx, const Normalizer& normalizer,
                                 const dynamics::DynamicsEnsemble* ensemble) {
  EvalEnvironment env;
  const std::string synth_path = ctx.config.get_or("data.synth_config", ctx.path("synth.cfg"));
  if (fs::exists(synth_path)) {
    ctx.input("synth_config", synth_path);
    env.truth = std::make_unique<synth::SynthEnv>(synth::load_config(synth_path));
    env.normalized = std::make_unique<NormalizedEnvironment>(*env.truth, normalizer);
    env.description = "synthetic ground truth (" + synth_path + ")";
    return env;
  }
  if (ensemble) {
    env.model = std::make_unique<dynamics::EnsembleEnvironment>(*ensemble);
    env.description = "learned dynamics ensemble";
    return env;
  }
  const std::string dyn = ctx.path("ensemble.dyn");
  if (!fs::exists(dyn)) return env;
  ctx.input("ensemble", dyn);
  env.ensemble = std::make_unique<dynamics::DynamicsEnsemble>(dynamics::load_ensemble(dyn));
  env.model = std::make_unique<dynamics::EnsembleEnvironment>(*env.ensemble);
  env.description = "learned dynamics ensemble (" + dyn + ")";
  return env;
}

void gen_data(Context& ctx) {
  const synth::SynthConfig sc = settings::synth(ctx.config);
  const int n = static_cast<int>(ctx.config.get_int("synth.n_patients", 200));
  if (n < 1) throw ArgumentError("synth.n_patients must be >= 1");
  const auto data = synth::generate_expert_dataset(sc, n);
  const BinEdges edges = synth::dose_bin_edges();
  write_trajectories(ctx.path("data.csv"), data, edges);
  synth::save_config(ctx.path("synth.cfg"), sc);
  save_bin_edges(ctx.path("bin_edges.txt"), edges);
  ctx.output("data", ctx.path("data.csv"));
  ctx.output("synth_config", ctx.path("synth.cfg"));
  ctx.output("bin_edges", ctx.path("bin_edges.txt"));
  *ctx.log << "generated " << data.size() << " synthetic patients -> " << ctx.path("data.csv") << "\n";
}

void ingest(Context& ctx) {
  const std::string input = existing(ctx.config.get_or("data.csv", ctx.path("data.csv")), "input CSV");
  ctx.input("data", input);
  LoadOptions opts;
  opts.min_horizon = static_cast<int>(ctx.config.get_int("data.min_horizon", kMinHorizon));
  std::string edges_path = ctx.config.get_or("data.edges", "");
  if (edges_path.empty()) {
    const fs::path beside = fs::path(input).parent_path() / "bin_edges.txt";
    if (fs::exists(beside)) edges_path = beside.string();
  }
  if (!edges_path.empty()) {
    opts.edges = load_bin_edges(edges_path);
    ctx.input("edges", edges_path);
  }
  const LoadResult loaded = load_trajectories(input, opts);
  if (loaded.trajectories.size() < 2) throw DataError("need at least two patients after exclusion");
  const double ratio = ctx.config.get_double("data.train_ratio", 0.8);
  const Split split =
      split_train_test(loaded.trajectories, ratio, ctx.config.get_u64("data.seed", settings::global_seed(ctx.config)));
  if (split.train.empty() || split.test.empty()) throw DataError("train/test split left one side empty");
  const Normalizer norm = fit_normalizer(split.train);

  save_bin_edges(ctx.path("bin_edges.txt"), loaded.edges);
  save_normalizer(ctx.path("normalizer.txt"), norm);
  write_trajectories(ctx.path("train.csv"), apply_normalizer(split.train, norm), loaded.edges);
  write_trajectories(ctx.path("test.csv"), apply_normalizer(split.test, norm), loaded.edges);
  {
    std::ofstream rep(ctx.path("ingest.txt"));
    rep << "patients=" << loaded.trajectories.size() << "\n";
    rep << "excluded_short=" << loaded.excluded_short << "\n";
    rep << "train_patients=" << split.train.size() << "\n";
    rep << "test_patients=" << split.test.size() << "\n";
    rep << "normalizer_fingerprint=" << fingerprint(norm) << "\n";
  }
  for (const char* f : {"bin_edges.txt", "normalizer.txt", "train.csv", "test.csv", "ingest.txt"}) {
    ctx.output(f, ctx.path(f));
  }
  *ctx.log << "ingested " << loaded.trajectories.size() << " patients (" << loaded.excluded_short
           << " excluded as shorter than " << opts.min_horizon << " hours): " << split.train.size() << " train, "
           << split.test.size() << " test\n";
}

void train_dynamics(Context& ctx) {
  const BinEdges edges = edges_for(ctx, "data.edges", ctx.path("bin_edges.txt"));
  const auto train = load_split(ctx, "train.csv", edges);
  const Normalizer norm = load_normalizer(existing(ctx.path("normalizer.txt"), "normalizer"));
  const dynamics::DynamicsConfig dc = settings::dynamics(ctx.config);
  const double val_fraction = ctx.config.get_double("dynamics.val_fraction", 0.2);
  const Split fit_val = split_train_test(train, 1.0 - val_fraction, dc.seed);
  if (fit_val.train.empty() || fit_val.test.empty()) throw DataError("dynamics validation split left one side empty");

  const auto members = dynamics::train_dynamics(all_transitions(fit_val.train), all_transitions(fit_val.test), dc);
  dynamics::DynamicsEnsemble ens = dynamics::select_top(members, dc.keep);
  ens.normalizer_fingerprint = fingerprint(norm);
  dynamics::save_ensemble(ctx.path("ensemble.dyn"), ens);

  std::ofstream log(ctx.path("dynamics_nll.csv"));
  log << "member,epoch,train_nll,val_nll,failed\n";
  for (const auto& m : members) {
    for (std::size_t e = 0; e < m.train_curve.size(); ++e) {
      log << m.index << "," << e + 1 << "," << textio::format_double(m.train_curve[e]) << ","
          << textio::format_double(m.val_curve[e]) << "," << (m.failed ? 1 : 0) << "\n";
    }
    if (m.failed) *ctx.log << "warning: " << m.diagnostic << "\n";
  }
  log.close();
  ctx.output("ensemble", ctx.path("ensemble.dyn"));
  ctx.output("dynamics_nll", ctx.path("dynamics_nll.csv"));
  *ctx.log << "kept " << ens.size() << " of " << members.size() << " dynamics models; best validation NLL "
           << textio::format_double(ens.val_nll.front()) << "\n";
}

void train(Context& ctx) {
  const orchestrator::TrainConfig tc = settings::train(ctx.config);
  const BinEdges edges = edges_for(ctx, "data.edges", ctx.path("bin_edges.txt"));
  const auto train = load_split(ctx, "train.csv", edges);
  const auto test = load_split(ctx, "test.csv", edges);
  const Normalizer norm = load_normalizer(existing(ctx.path("normalizer.txt"), "normalizer"));

  std::unique_ptr<dynamics::DynamicsEnsemble> ensemble;
  if (tc.mode != orchestrator::Mode::modelfree && tc.rollout.batch > 0) {
    const std::string dyn = existing(ctx.path("ensemble.dyn"), "dynamics ensemble");
    ctx.input("ensemble", dyn);
    ensemble = std::make_unique<dynamics::DynamicsEnsemble>(dynamics::load_ensemble(dyn));
    if (!ensemble->normalizer_fingerprint.empty() && ensemble->normalizer_fingerprint != fingerprint(norm)) {
      throw StateError("ensemble was trained under a different normalizer");
    }
  }
  EvalEnvironment env = eval_environment(ctx, norm, ensemble.get());

  orchestrator::TrainData data;
  data.batch = train;
  data.ensemble = ensemble.get();
  data.eval_env = env.get();
  data.eval_initial_states = initial_states(test);
  if (data.eval_env) *ctx.log << "evaluating against " << env.description << "\n";

  const std::string fp = ctx.config.fingerprint();
  const std::string ckpt = ctx.path("run.ckpt");
  const std::string resume = ctx.config.get_or("orchestrator.resume", "");
  std::unique_ptr<orchestrator::Trainer> trainer;
  if (!resume.empty()) {
    ctx.input("resume", existing(resume, "resume checkpoint"));
    trainer = std::make_unique<orchestrator::Trainer>(tc, data, orchestrator::load_run(resume));
    *ctx.log << "resuming at epoch " << trainer->state().epoch << "\n";
  } else {
    trainer = std::make_unique<orchestrator::Trainer>(tc, data);
  }

  const int interval = static_cast<int>(ctx.config.get_int("orchestrator.checkpoint_interval", 10));
  const std::string metrics_path = ctx.path("metrics.csv");
  auto checkpoint = [&](const orchestrator::TrainState& s) {
    orchestrator::save_run(ckpt, s, tc, fp);
    orchestrator::write_metrics_csv(metrics_path, s.metrics);
  };
  try {
    trainer->run(tc.epochs, [&](const orchestrator::TrainState& s) {
      if (interval > 0 && s.epoch % interval == 0) checkpoint(s);
    });
  } catch (const NumericError& e) {
    *ctx.log << "numeric abort after epoch " << trainer->state().epoch << "; last good checkpoint kept at " << ckpt
             << "\n";
    throw;
  }
  const auto& s = trainer->state();
  checkpoint(s);
  {
    std::ofstream a(ctx.path("agent.agt"));
    agent::save_agent(a, s.actor, s.critic, tc.agent.cql);
    std::ofstream r(ctx.path("reward.rwd"));
    reward::save_reward(r, s.reward_net, tc.rollout.horizon);
  }
  for (const char* f : {"run.ckpt", "metrics.csv", "agent.agt", "reward.rwd"}) ctx.output(f, ctx.path(f));
  *ctx.log << to_string(tc.mode) << " training finished at epoch " << s.epoch << " (" << s.critic_steps
           << " critic steps, " << s.reward_steps << " reward steps, |D_sample| = " << s.d_sample.size() << ")\n";
}

std::vector<Trajectory> invert(const std::vector<Trajectory>& trajectories, const Normalizer& norm) {
  std::vector<Trajectory> out = trajectories;
  for (auto& t : out) {
    for (auto& tr : t.transitions) {
      tr.state = norm.invert(tr.state);
      tr.next_state = norm.invert(tr.next_state);
    }
  }
  return out;
}

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  fn(out);
}

void evaluate(Context& ctx) {
  const settings::EvalSettings es = settings::evaluation(ctx.config);
  const BinEdges edges = edges_for(ctx, "data.edges", ctx.path("bin_edges.txt"));
  const auto train = load_split(ctx, "train.csv", edges);
  const auto test = load_split(ctx, "test.csv", edges);
  const Normalizer norm = load_normalizer(existing(ctx.path("normalizer.txt"), "normalizer"));
  const std::string ckpt = existing(ctx.config.get_or("eval.checkpoint", ctx.path("run.ckpt")), "run checkpoint");
  ctx.input("run", ckpt);
  const orchestrator::TrainState state = orchestrator::load_run(ckpt);
  const agent::Actor& policy = state.actor;
  const std::string fp = ctx.config.fingerprint();

  EvalEnvironment env = eval_environment(ctx, norm, nullptr);
  if (!env.get()) throw StateError("no evaluation environment: provide synth.cfg or ensemble.dyn");
  *ctx.log << "evaluating against " << env.description << "\n";
  const auto init = initial_states(test);

  const bool with_rpsi = ctx.config.get_bool("eval.include_rpsi", ctx.config.get_or("orchestrator.mode", "omgrl") == "omgrl");
  std::vector<eval::EvalReport> returns;
  for (bool rpsi : {false, true}) {
    if (rpsi && !with_rpsi) continue;
    std::vector<eval::EvalReport> per_seed;
    for (int k = 0; k < es.seeds; ++k) {
      Rng rng = derive_rng(es.seed, 1000 + static_cast<std::uint64_t>(k));
      const auto source = rpsi ? eval::RewardSource::rpsi(state.reward_net) : eval::RewardSource::rp();
      per_seed.push_back(eval::evaluate_return(policy, *env.get(), init, es.episodes, es.steps, source, rng));
    }
    eval::EvalReport agg = eval::aggregate(per_seed);
    agg.fingerprint = fp;
    returns.push_back(agg);
  }
  write_file(ctx.path("returns.csv"), [&](std::ostream& o) { eval::write_report_csv(o, returns); });

  Rng success_rng = derive_rng(es.seed, 2000);
  eval::EvalReport success = eval::success_rate(policy, *env.get(), init, es.success, success_rng);
  success.fingerprint = fp;
  write_file(ctx.path("success.csv"), [&](std::ostream& o) {
    o << "metric,value,episodes,steps,threshold,duration,fingerprint\n";
    o << "success_rate," << textio::format_double(success.mean) << "," << success.episodes << "," << success.steps
      << "," << textio::format_double(es.success.threshold) << "," << es.success.duration << "," << fp << "\n";
  });

  const eval::BehaviorFit behavior = eval::fit_behavior_policy(all_transitions(train), es.behavior);
  if (behavior.single_class) *ctx.log << "warning: behavior data contain a single action class\n";
  write_file(ctx.path("wis.csv"), [&](std::ostream& o) {
    o << "metric,value\n";
    o << "behavior_heldout_accuracy," << textio::format_double(behavior.heldout_accuracy) << "\n";
    try {
      const eval::WisResult w = eval::wis_estimate(policy, behavior.policy, test, es.wis);
      std::size_t at_floor = 0, at_ceiling = 0;
      for (double r : w.ratios) {
        at_floor += r <= es.wis.ratio_min ? 1 : 0;
        at_ceiling += r >= es.wis.ratio_max ? 1 : 0;
      }
      o << "wis_policy," << textio::format_double(w.estimate) << "\n";
      o << "ratios_at_floor," << at_floor << "\n";
      o << "ratios_at_ceiling," << at_ceiling << "\n";
    } catch (const DegenerateEstimateError& e) {
      *ctx.log << "warning: " << e.what() << "\n";
      o << "wis_policy,degenerate\n";
    }
    double logged = 0.0;
    for (const auto& t : test) logged += eval::discounted_return(t, es.wis.gamma);
    o << "logged_mean_return," << textio::format_double(logged / static_cast<double>(test.size())) << "\n";
  });

  const eval::AgreementMatrix agreement = eval::agreement_matrix(policy, test);
  write_file(ctx.path("agreement.csv"), [&](std::ostream& o) { eval::write_agreement_csv(o, agreement); });

  const auto raw_test = invert(test, norm);
  for (const char* indicator : {"pt", "inr"}) {
    const eval::TendencyCurve curve = eval::dosing_tendency(policy, raw_test, indicator, es.tendency_bins, &test);
    write_file(ctx.path(std::string("tendency_") + indicator + ".csv"),
               [&](std::ostream& o) { eval::write_tendency_csv(o, curve); });
  }
  for (const char* f : {"returns.csv", "success.csv", "wis.csv", "agreement.csv", "tendency_pt.csv", "tendency_inr.csv"}) {
    ctx.output(f, ctx.path(f));
  }
  *ctx.log << "r_p return " << textio::format_double(returns.front().mean) << " over " << es.seeds << " x "
           << es.episodes << " episodes; success rate " << textio::format_double(success.mean) << " over "
           << success.episodes << " episodes of " << success.steps << " steps\n";
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

void report(Context& ctx) {
  std::vector<fs::path> runs;
  const std::string listed = ctx.config.get_or("report.runs", "");
  if (listed.empty()) {
    runs.push_back(ctx.out_dir);
  } else {
    std::stringstream ss(listed);
    std::string item;
    while (std::getline(ss, item, ',')) runs.emplace_back(item);
  }

  std::vector<eval::LongRow> rows;
  std::map<std::string, std::vector<std::size_t>> by_metric;  // indices of rows per metric, for min-max
  for (const auto& dir : runs) {
    const std::string label = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    const std::string metrics = (dir / "metrics.csv").string();
    if (fs::exists(metrics)) {
      ctx.input(label + ".metrics", metrics);
      const auto table = read_csv(metrics);
      if (table.empty()) throw DataError(metrics + " is empty");
      const auto& header = table.front();
      for (std::size_t r = 1; r < table.size(); ++r) {
        const double epoch = textio::parse_double(table[r].at(0));
        for (std::size_t c = 1; c < header.size() && c < table[r].size(); ++c) {
          if (table[r][c].empty()) continue;
          by_metric[header[c]].push_back(rows.size());
          rows.push_back({header[c], epoch, textio::parse_double(table[r][c]), label});
        }
      }
    }
    for (const char* indicator : {"pt", "inr"}) {
      const std::string p = (dir / (std::string("tendency_") + indicator + ".csv")).string();
      if (!fs::exists(p)) continue;
      ctx.input(label + ".tendency_" + indicator, p);
      const auto table = read_csv(p);
      for (std::size_t r = 1; r < table.size(); ++r) {
        if (table[r].size() < 7 || table[r][5] == "empty") continue;
        const double x = 0.5 * (textio::parse_double(table[r][2]) + textio::parse_double(table[r][3]));
        rows.push_back({std::string("tendency_") + indicator, x, textio::parse_double(table[r][5]), label + ":policy"});
        rows.push_back({std::string("tendency_") + indicator, x, textio::parse_double(table[r][6]), label + ":clinician"});
      }
    }
    const std::string agreement = (dir / "agreement.csv").string();
    if (fs::exists(agreement)) {
      ctx.input(label + ".agreement", agreement);
      const auto table = read_csv(agreement);
      for (std::size_t r = 1; r < table.size(); ++r) {
        for (std::size_t c = 2; c < table[r].size(); ++c) {
          if (table[r][c] == "empty") continue;
          rows.push_back({"agreement_clinician_" + table[r][0], static_cast<double>(c - 2),
                          textio::parse_double(table[r][c]), label});
        }
      }
    }
  }
  // Min-max normalized evaluation curves across all compared runs, labeled as such.
  for (const char* metric : {"eval_rp", "eval_rpsi"}) {
    const auto it = by_metric.find(metric);
    if (it == by_metric.end()) continue;
    std::vector<double> ys;
    for (std::size_t i : it->second) ys.push_back(rows[i].y);
    const auto scaled = eval::minmax_normalize(ys);
    for (std::size_t k = 0; k < it->second.size(); ++k) {
      const auto& src = rows[it->second[k]];
      rows.push_back({std::string(metric) + "_minmax", src.x, scaled[k], src.series});
    }
  }
  write_file(ctx.path("plot.csv"), [&](std::ostream& o) { eval::write_long_csv(o, rows); });
  ctx.output("plot", ctx.path("plot.csv"));
  *ctx.log << "wrote " << rows.size() << " plot rows from " << runs.size() << " run(s)\n";
}

using Handler = void (*)(Context&);

const std::map<std::string, Handler>& verbs() {
  static const std::map<std::string, Handler> table = {
      {"gen-data", gen_data}, {"ingest", ingest},     {"train-dynamics", train_dynamics},
      {"train", train},       {"evaluate", evaluate}, {"report", report}};
  return table;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Offline model-based guided reward learning toolkit", "omgrl"};
  std::string verb;
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  std::string out_dir;
  app.add_option("verb", verb, "gen-data | ingest | train-dynamics | train | evaluate | report")->required();
  app.add_option("--config", config_path, "key=value config file with [sections]");
  app.add_option("--set", overrides, "override KEY=VALUE (section.key), repeatable");
  app.add_option("--seed", seed, "global seed");
  app.add_flag("--strict", strict, "single-threaded, bitwise-reproducible execution");
  app.add_option("--out", out_dir, "output directory (default: $OMGRL_OUT or ./omgrl-out)");

  std::vector<std::string> argv_store = {"omgrl"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitInvalid;
  }

  const auto handler = verbs().find(verb);
  if (handler == verbs().end()) {
    err << "error: unknown verb '" << verb << "'\n" << app.help();
    return kExitInvalid;
  }

  try {
    Context ctx;
    ctx.verb = verb;
    ctx.strict = strict;
    ctx.log = &out;
    if (!config_path.empty()) ctx.config = Config::load(config_path);
    for (const auto& o : overrides) ctx.config.apply_override(o);
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    if (out_dir.empty()) {
      const char* env = std::getenv("OMGRL_OUT");
      out_dir = env && *env ? env : "omgrl-out";
    }
    ctx.out_dir = out_dir;
    fs::create_directories(ctx.out_dir);
    handler->second(ctx);
    write_manifest(ctx);
    return kExitOk;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

}  // namespace omgrl::cli
