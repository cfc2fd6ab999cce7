#include "omgrl/data.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace omgrl {

int feature_index(std::string_view name) {
  for (int i = 0; i < kStateDim; ++i) {
    if (kFeatureNames[i] == name) return i;
  }
  return -1;
}

ActionClass::ActionClass(int index) : index_(index) {
  if (index < 0 || index >= kNumActions) {
    throw ArgumentError("action class " + std::to_string(index) + " outside [0, " +
                        std::to_string(kNumActions - 1) + "]");
  }
}

Eigen::Matrix<double, kNumActions, 1> one_hot(ActionClass a) {
  Eigen::Matrix<double, kNumActions, 1> v = Eigen::Matrix<double, kNumActions, 1>::Zero();
  v[a.index()] = 1.0;
  return v;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double rp_reward(double aptt) {
  if (!std::isfinite(aptt)) throw NumericError("rp_reward: non-finite aPTT");
  return 2.0 * stable_sigmoid(aptt - 60.0) - 2.0 * stable_sigmoid(aptt - 100.0) - 1.0;
}

BinEdges compute_bin_edges(std::vector<double> doses) {
  for (double d : doses) {
    if (!std::isfinite(d)) throw NumericError("compute_bin_edges: non-finite dose");
  }
  std::sort(doses.begin(), doses.end());
  std::size_t n_distinct = doses.empty() ? 0 : 1;
  for (std::size_t i = 1; i < doses.size(); ++i) {
    if (doses[i] != doses[i - 1]) ++n_distinct;
  }
  if (n_distinct < static_cast<std::size_t>(kNumActions)) {
    throw DataError("compute_bin_edges: need at least 6 distinct doses, got " +
                    std::to_string(n_distinct));
  }
  BinEdges edges{};
  const double last = static_cast<double>(doses.size() - 1);
  for (int k = 1; k <= kNumEdges; ++k) {
    const double h = last * static_cast<double>(k) / kNumActions;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, doses.size() - 1);
    const double frac = h - static_cast<double>(lo);
    edges[k - 1] = doses[lo] + frac * (doses[hi] - doses[lo]);
  }
  return edges;
}

ActionClass discretize_dose(double dose, const BinEdges& edges) {
  if (!std::isfinite(dose)) throw NumericError("discretize_dose: non-finite dose");
  int k = 0;
  for (double e : edges) {
    if (e < dose) ++k;
  }
  return ActionClass(k);
}

double representative_dose(ActionClass a, const BinEdges& edges) {
  const int k = a.index();
  if (k == 0) {
    const double span = edges[1] - edges[0];
    return edges[0] - (span > 0.0 ? 0.5 * span : 1.0);
  }
  if (k == kNumActions - 1) {
    const double span = edges[kNumEdges - 1] - edges[kNumEdges - 2];
    return edges[kNumEdges - 1] + (span > 0.0 ? 0.5 * span : 1.0);
  }
  return 0.5 * (edges[k - 1] + edges[k]);
}

namespace {

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key,
                           const std::string& path) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError(path + ": missing key '" + key + "'");
  return it->second;
}

}  // namespace

void save_bin_edges(const std::string& path, const BinEdges& edges) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (int k = 0; k < kNumEdges; ++k) {
    out << "edge_" << (k + 1) << '=' << textio::format_double(edges[k]) << '\n';
  }
}

BinEdges load_bin_edges(const std::string& path) {
  const auto kv = read_key_values(path);
  BinEdges edges{};
  for (int k = 0; k < kNumEdges; ++k) {
    edges[k] = textio::parse_double(require(kv, "edge_" + std::to_string(k + 1), path));
  }
  for (int k = 1; k < kNumEdges; ++k) {
    if (edges[k] < edges[k - 1]) throw DataError(path + ": bin edges must be nondecreasing");
  }
  return edges;
}

const std::vector<std::string>& csv_schema() {
  static const std::vector<std::string> schema = [] {
    std::vector<std::string> s{"patient_id", "t"};
    for (auto name : kFeatureNames) s.emplace_back(name);
    s.emplace_back("aptt");
    s.emplace_back("heparin_dose");
    return s;
  }();
  return schema;
}

namespace {

struct Row {
  std::size_t line = 0;
  long t = 0;
  PatientState state;
  double dose = 0.0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

LoadResult load_trajectories(std::istream& in, const LoadOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV is empty (no header)");
  const auto header = split_csv(trim(line));
  std::vector<int> column_of(csv_schema().size(), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    auto it = std::find(csv_schema().begin(), csv_schema().end(), name);
    if (it != csv_schema().end()) column_of[it - csv_schema().begin()] = static_cast<int>(c);
  }
  for (std::size_t i = 0; i < column_of.size(); ++i) {
    if (column_of[i] < 0) throw DataError("CSV header is missing column '" + csv_schema()[i] + "'");
  }

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> by_patient;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    auto number = [&](int schema_index) {
      const std::string& cell = cells[column_of[schema_index]];
      double v = 0.0;
      try {
        v = textio::parse_double(trim(cell));
      } catch (const DataError&) {
        throw DataError("row " + std::to_string(line_no) + ": column '" + csv_schema()[schema_index] +
                        "' is not a number");
      }
      if (!std::isfinite(v)) {
        throw DataError("row " + std::to_string(line_no) + ": non-finite value in column '" +
                        csv_schema()[schema_index] + "'");
      }
      return v;
    };
    Row row;
    row.line = line_no;
    const double t = number(1);
    if (t != std::floor(t)) throw DataError("row " + std::to_string(line_no) + ": timestep must be an integer");
    row.t = static_cast<long>(t);
    for (int f = 0; f < kStateDim; ++f) row.state.features[f] = number(2 + f);
    row.state.aptt = number(2 + kStateDim);
    row.dose = number(3 + kStateDim);
    const std::string id = trim(cells[column_of[0]]);
    auto [it, inserted] = by_patient.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(row);
  }

  LoadResult result;
  std::vector<std::pair<std::string, std::vector<Row>>> kept;
  for (const auto& id : order) {
    auto rows = std::move(by_patient[id]);
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].t == rows[i - 1].t) {
        throw DataError("row " + std::to_string(rows[i].line) + ": duplicate timestep " +
                        std::to_string(rows[i].t) + " for patient '" + id + "'");
      }
      if (rows[i].t != rows[i - 1].t + 1) {
        throw DataError("row " + std::to_string(rows[i].line) + ": timesteps of patient '" + id +
                        "' are not at 1-hour intervals");
      }
    }
    if (static_cast<int>(rows.size()) < options.min_horizon || rows.size() < 2) {
      ++result.excluded_short;
      continue;
    }
    kept.emplace_back(id, std::move(rows));
  }

  if (options.edges) {
    result.edges = *options.edges;
  } else if (kept.empty()) {
    result.edges = BinEdges{};
  } else {
    std::vector<double> doses;
    for (const auto& [id, rows] : kept) {
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) doses.push_back(rows[i].dose);
    }
    result.edges = compute_bin_edges(std::move(doses));
  }

  for (auto& [id, rows] : kept) {
    Trajectory traj;
    traj.patient_id = id;
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      Transition tr;
      tr.state = rows[i].state;
      tr.action = discretize_dose(rows[i].dose, result.edges);
      tr.next_state = rows[i + 1].state;
      tr.reward = rp_reward(rows[i + 1].state.aptt);
      traj.transitions.push_back(tr);
    }
    result.trajectories.push_back(std::move(traj));
  }
  return result;
}

LoadResult load_trajectories(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_trajectories(in, options);
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories,
                        const BinEdges& edges) {
  const auto& schema = csv_schema();
  for (std::size_t i = 0; i < schema.size(); ++i) out << (i ? "," : "") << schema[i];
  out << '\n';
  auto emit = [&](const std::string& id, long t, const PatientState& s, double dose) {
    out << id << ',' << t;
    for (int f = 0; f < kStateDim; ++f) out << ',' << textio::format_double(s.features[f]);
    out << ',' << textio::format_double(s.aptt) << ',' << textio::format_double(dose) << '\n';
  };
  for (const auto& traj : trajectories) {
    long t = 0;
    for (const auto& tr : traj.transitions) {
      emit(traj.patient_id, t++, tr.state, representative_dose(tr.action, edges));
    }
    if (!traj.transitions.empty()) {
      const auto& last = traj.transitions.back();
      emit(traj.patient_id, t, last.next_state, representative_dose(last.action, edges));
    }
  }
}

void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories,
                        const BinEdges& edges) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_trajectories(out, trajectories, edges);
}

std::vector<PatientState> all_states(const std::vector<Trajectory>& trajectories) {
  std::vector<PatientState> states;
  for (const auto& traj : trajectories) {
    for (const auto& tr : traj.transitions) states.push_back(tr.state);
    if (!traj.transitions.empty()) states.push_back(traj.transitions.back().next_state);
  }
  return states;
}

std::vector<Transition> all_transitions(const std::vector<Trajectory>& trajectories) {
  std::vector<Transition> out;
  for (const auto& traj : trajectories) {
    out.insert(out.end(), traj.transitions.begin(), traj.transitions.end());
  }
  return out;
}

PatientState Normalizer::apply(const PatientState& s) const {
  PatientState out = s;
  out.features = ((s.features - mean).array() / std.array()).matrix();
  return out;
}

PatientState Normalizer::invert(const PatientState& s) const {
  PatientState out = s;
  out.features = (s.features.array() * std.array()).matrix() + mean;
  return out;
}

Transition Normalizer::apply(const Transition& t) const {
  Transition out = t;
  out.state = apply(t.state);
  out.next_state = apply(t.next_state);
  return out;
}

Normalizer fit_normalizer(const std::vector<Trajectory>& trajectories) {
  const auto states = all_states(trajectories);
  if (states.size() < 2) throw DataError("fit_normalizer: need at least two states");
  Normalizer n;
  StateVector sum = StateVector::Zero();
  for (const auto& s : states) sum += s.features;
  n.mean = sum / static_cast<double>(states.size());
  StateVector sq = StateVector::Zero();
  for (const auto& s : states) sq += (s.features - n.mean).cwiseAbs2();
  n.std = (sq / static_cast<double>(states.size())).cwiseSqrt().cwiseMax(kStdFloor);
  return n;
}

std::vector<Trajectory> apply_normalizer(const std::vector<Trajectory>& trajectories,
                                         const Normalizer& normalizer) {
  std::vector<Trajectory> out = trajectories;
  for (auto& traj : out) {
    for (auto& tr : traj.transitions) tr = normalizer.apply(tr);
  }
  return out;
}

void save_normalizer(const std::string& path, const Normalizer& n) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (int f = 0; f < kStateDim; ++f) {
    out << "mean_" << kFeatureNames[f] << '=' << textio::format_double(n.mean[f]) << '\n';
    out << "std_" << kFeatureNames[f] << '=' << textio::format_double(n.std[f]) << '\n';
  }
}

Normalizer load_normalizer(const std::string& path) {
  const auto kv = read_key_values(path);
  Normalizer n;
  for (int f = 0; f < kStateDim; ++f) {
    const std::string name(kFeatureNames[f]);
    n.mean[f] = textio::parse_double(require(kv, "mean_" + name, path));
    n.std[f] = textio::parse_double(require(kv, "std_" + name, path));
    if (!(n.std[f] > 0.0)) throw DataError(path + ": std must be positive");
  }
  return n;
}

std::string fingerprint(const Normalizer& n) {
  std::string bytes;
  for (int f = 0; f < kStateDim; ++f) {
    bytes += textio::format_double(n.mean[f]) + ";" + textio::format_double(n.std[f]) + ";";
  }
  return textio::hex64(textio::fnv1a(bytes));
}

Split split_train_test(const std::vector<Trajectory>& trajectories, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> idx(trajectories.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(trajectories.size()) + 1e-9));
  std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  Split s;
  for (auto i : train_idx) s.train.push_back(trajectories[i]);
  for (auto i : test_idx) s.test.push_back(trajectories[i]);
  return s;
}

void ReplayBuffer::push(const Transition& t) {
  if (capacity_ == 0 || storage_.size() < capacity_) {
    storage_.push_back(t);
    return;
  }
  storage_[cursor_] = t;
  cursor_ = (cursor_ + 1) % capacity_;
}

void ReplayBuffer::push_all(const std::vector<Transition>& ts) {
  for (const auto& t : ts) push(t);
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (storage_.empty()) throw StateError("cannot sample from an empty replay buffer");
  if (n > storage_.size()) {
    throw StateError("requested " + std::to_string(n) + " samples from a buffer of " +
                     std::to_string(storage_.size()));
  }
  std::vector<Transition> out;
  out.reserve(n);
  if (2 * n > storage_.size()) {
    std::vector<std::size_t> idx(storage_.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(storage_[idx[i]]);
    }
    return out;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < n) {
    const std::size_t j = uniform_index(rng, storage_.size());
    if (seen.insert(j).second) out.push_back(storage_[j]);
  }
  return out;
}

std::vector<Transition> ReplayBuffer::sample_with_replacement(std::size_t n, Rng& rng) const {
  if (storage_.empty()) throw StateError("cannot sample from an empty replay buffer");
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(storage_[uniform_index(rng, storage_.size())]);
  return out;
}

std::vector<Transition> ReplayBuffer::contents() const {
  if (capacity_ == 0 || storage_.size() < capacity_) return storage_;
  std::vector<Transition> out;
  out.reserve(storage_.size());
  for (std::size_t i = 0; i < storage_.size(); ++i) out.push_back(storage_[(cursor_ + i) % capacity_]);
  return out;
}

void write_transition(textio::Writer& w, const Transition& t) {
  w.key("tr");
  for (int f = 0; f < kStateDim; ++f) w.value(t.state.features[f]);
  w.value(t.state.aptt);
  w.value(t.action.index());
  w.value(t.reward);
  for (int f = 0; f < kStateDim; ++f) w.value(t.next_state.features[f]);
  w.value(t.next_state.aptt);
  w.value(t.terminal ? 1 : 0);
  w.endl();
}

Transition read_transition(textio::Reader& r) {
  r.expect_key("tr");
  Transition t;
  for (int f = 0; f < kStateDim; ++f) t.state.features[f] = r.real();
  t.state.aptt = r.real();
  t.action = ActionClass(static_cast<int>(r.integer()));
  t.reward = r.real();
  for (int f = 0; f < kStateDim; ++f) t.next_state.features[f] = r.real();
  t.next_state.aptt = r.real();
  t.terminal = r.integer() != 0;
  return t;
}

void ReplayBuffer::save(textio::Writer& w) const {
  w.key("buffer");
  w.value(capacity_);
  w.value(storage_.size());
  w.value(cursor_);
  w.endl();
  for (const auto& t : storage_) write_transition(w, t);
}

ReplayBuffer ReplayBuffer::load(textio::Reader& r) {
  r.expect_key("buffer");
  ReplayBuffer b(static_cast<std::size_t>(r.integer()));
  const auto n = r.integer();
  b.cursor_ = static_cast<std::size_t>(r.integer());
  b.storage_.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) b.storage_.push_back(read_transition(r));
  return b;
}

}  // namespace omgrl
