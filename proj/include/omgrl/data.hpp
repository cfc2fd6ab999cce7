#pragma once

// MDP data model: states, action classes, transitions, trajectories, the
// predefined aPTT reward, dose discretization, CSV ingestion, normalization,
// patient-level splitting and replay buffers.

#include "omgrl/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace omgrl {

namespace textio {
class Writer;
class Reader;
}  // namespace textio

inline constexpr int kStateDim = 16;
inline constexpr int kNumActions = 6;
inline constexpr int kNumEdges = kNumActions - 1;
inline constexpr int kMinHorizon = 7;

// Fixed schema order of the state features.
inline constexpr std::array<std::string_view, kStateDim> kFeatureNames = {
    "age", "gender", "gcs", "dbp", "sbp", "rr", "hgb", "temperature",
    "wbc", "platelet", "pt", "acd", "creatinine", "bilirubin", "inr", "weight"};

inline constexpr int kFeaturePt = 10;
inline constexpr int kFeatureInr = 14;

// Index of a feature name, or -1.
int feature_index(std::string_view name);

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using ActionProbs = std::array<double, kNumActions>;

struct PatientState {
  StateVector features = StateVector::Zero();
  // Observed aPTT in seconds; carried alongside the state, never part of it.
  // Zero for model-generated states where aPTT is not observed.
  double aptt = 0.0;

  bool operator==(const PatientState& o) const { return features == o.features && aptt == o.aptt; }
};

class ActionClass {
 public:
  constexpr ActionClass() = default;
  explicit ActionClass(int index);

  constexpr int index() const { return index_; }
  auto operator<=>(const ActionClass&) const = default;

 private:
  int index_ = 0;
};

Eigen::Matrix<double, kNumActions, 1> one_hot(ActionClass a);

struct Transition {
  PatientState state;
  ActionClass action;
  double reward = 0.0;
  PatientState next_state;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

struct Trajectory {
  std::string patient_id;
  std::vector<Transition> transitions;

  int horizon_hours() const { return static_cast<int>(transitions.size()); }
  bool operator==(const Trajectory&) const = default;
};

// r_p(aPTT) = 2 sigmoid(aPTT - 60) - 2 sigmoid(aPTT - 100) - 1.
double rp_reward(double aptt);
double stable_sigmoid(double x);

using BinEdges = std::array<double, kNumEdges>;

// Interior edges at the k/6 empirical quantiles (linear interpolation between
// order statistics).
BinEdges compute_bin_edges(std::vector<double> doses);
// Class k covers (edge[k-1], edge[k]]; a dose equal to an edge goes to the lower class.
ActionClass discretize_dose(double dose, const BinEdges& edges);
// A dose that discretizes back to `a`; used when writing trajectories.
double representative_dose(ActionClass a, const BinEdges& edges);

void save_bin_edges(const std::string& path, const BinEdges& edges);
BinEdges load_bin_edges(const std::string& path);

// CSV header, exact names, in order.
const std::vector<std::string>& csv_schema();

struct LoadOptions {
  std::optional<BinEdges> edges;  // computed from the file when absent
  int min_horizon = kMinHorizon;  // minimum number of hourly rows
};

struct LoadResult {
  std::vector<Trajectory> trajectories;
  BinEdges edges{};
  int excluded_short = 0;
};

LoadResult load_trajectories(std::istream& in, const LoadOptions& options = {});
LoadResult load_trajectories(const std::string& path, const LoadOptions& options = {});

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajectories,
                        const BinEdges& edges);
void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories,
                        const BinEdges& edges);

// All distinct states of a dataset: every transition state plus each final successor.
std::vector<PatientState> all_states(const std::vector<Trajectory>& trajectories);
std::vector<Transition> all_transitions(const std::vector<Trajectory>& trajectories);

inline constexpr double kStdFloor = 1e-8;

struct Normalizer {
  StateVector mean = StateVector::Zero();
  StateVector std = StateVector::Ones();

  PatientState apply(const PatientState& s) const;
  PatientState invert(const PatientState& s) const;
  Transition apply(const Transition& t) const;
  bool operator==(const Normalizer&) const = default;
};

// Population z-score statistics over all states.
Normalizer fit_normalizer(const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> apply_normalizer(const std::vector<Trajectory>& trajectories,
                                         const Normalizer& normalizer);
void save_normalizer(const std::string& path, const Normalizer& n);
Normalizer load_normalizer(const std::string& path);
std::string fingerprint(const Normalizer& n);

struct Split {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};

// Patient-level split; floor(ratio * n) patients go to train.
Split split_train_test(const std::vector<Trajectory>& trajectories, double ratio, std::uint64_t seed);

// FIFO ring buffer of transitions. capacity == 0 means unbounded.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(const Transition& t);
  void push_all(const std::vector<Transition>& ts);

  // Uniform without replacement within the batch; requires n <= size().
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  // Uniform with replacement; any n.
  std::vector<Transition> sample_with_replacement(std::size_t n, Rng& rng) const;

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }
  // Oldest first.
  std::vector<Transition> contents() const;
  const Transition& at(std::size_t storage_index) const { return storage_.at(storage_index); }

  void save(textio::Writer& w) const;
  static ReplayBuffer load(textio::Reader& r);
  bool operator==(const ReplayBuffer&) const = default;

 private:
  std::size_t capacity_ = 0;
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;
};

void write_transition(textio::Writer& w, const Transition& t);
Transition read_transition(textio::Reader& r);

}  // namespace omgrl
