#include "omgrl/data.hpp"
#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace omgrl;

namespace {

// Independent reference: the two logistic terms written out directly.
double rp_oracle(double x) { return 2.0 / (1.0 + std::exp(60.0 - x)) - 2.0 / (1.0 + std::exp(100.0 - x)) - 1.0; }

std::string csv_row(const std::string& id, int t, double aptt, double dose, double feature = 0.0) {
  std::ostringstream o;
  o << id << "," << t;
  for (int f = 0; f < kStateDim; ++f) o << "," << feature + f;
  o << "," << aptt << "," << dose << "\n";
  return o.str();
}

std::string header() {
  std::string h;
  for (const auto& c : csv_schema()) h += (h.empty() ? "" : ",") + c;
  return h + "\n";
}

Trajectory chain(const std::string& id, int n, double base) {
  Trajectory t;
  t.patient_id = id;
  for (int i = 0; i < n; ++i) {
    Transition tr;
    tr.state.features.setConstant(base + i);
    tr.state.aptt = 50.0 + i;
    tr.action = ActionClass(i % kNumActions);
    tr.next_state.features.setConstant(base + i + 1);
    tr.next_state.aptt = 51.0 + i;
    tr.reward = rp_reward(tr.next_state.aptt);
    t.transitions.push_back(tr);
  }
  return t;
}

}  // namespace

TEST_CASE("rp_reward matches the logistic closed form") {
  for (int i = 0; i <= 1000; ++i) {
    const double x = i * 0.2;
    CHECK(std::abs(rp_reward(x) - rp_oracle(x)) <= 1e-9);
  }
  CHECK(rp_reward(80.0) == doctest::Approx(rp_oracle(80.0)));
  CHECK(rp_reward(80.0) > 0.99);
  CHECK(rp_reward(20.0) < -0.99);
  CHECK(rp_reward(1e6) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(rp_reward(std::nan("")), NumericError);
}

TEST_CASE("feature lookup follows the schema order") {
  CHECK(feature_index("pt") == kFeaturePt);
  CHECK(feature_index("inr") == kFeatureInr);
  CHECK(feature_index("age") == 0);
  CHECK(feature_index("nope") == -1);
  CHECK(csv_schema().size() == 2 + kStateDim + 2);
}

TEST_CASE("action classes are bounded") {
  CHECK_THROWS_AS(ActionClass(-1), ArgumentError);
  CHECK_THROWS_AS(ActionClass(6), ArgumentError);
  CHECK(one_hot(ActionClass(2)).sum() == 1.0);
  CHECK(one_hot(ActionClass(2))(2) == 1.0);
}

TEST_CASE("bin edges are interpolated quantiles and discretization is lower-inclusive") {
  std::vector<double> doses;
  for (int i = 0; i <= 60; ++i) doses.push_back(i);
  const BinEdges e = compute_bin_edges(doses);
  for (int k = 0; k < kNumEdges; ++k) CHECK(e[k] == doctest::Approx(10.0 * (k + 1)));
  CHECK(discretize_dose(10.0, e).index() == 0);
  CHECK(discretize_dose(10.0001, e).index() == 1);
  CHECK(discretize_dose(-5.0, e).index() == 0);
  CHECK(discretize_dose(1e9, e).index() == 5);
  for (int a = 0; a < kNumActions; ++a) CHECK(discretize_dose(representative_dose(ActionClass(a), e), e).index() == a);
  CHECK_THROWS_AS(compute_bin_edges({1, 1, 2, 3}), DataError);
}

TEST_CASE("CSV ingestion builds transitions with next-step rewards") {
  std::string csv = header();
  for (int t = 0; t < 8; ++t) csv += csv_row("p1", t, 40.0 + 10 * t, 10.0 * (t % 6));
  for (int t = 0; t < 3; ++t) csv += csv_row("short", t, 70.0, 5.0);
  std::istringstream in(csv);
  LoadOptions opts;
  opts.edges = BinEdges{5, 15, 25, 35, 45};
  const LoadResult r = load_trajectories(in, opts);
  REQUIRE(r.trajectories.size() == 1);
  CHECK(r.excluded_short == 1);
  const auto& tr = r.trajectories[0].transitions;
  REQUIRE(tr.size() == 7);
  CHECK(tr[0].state.aptt == 40.0);
  CHECK(tr[0].reward == rp_reward(50.0));
  CHECK(tr[1].action.index() == 1);
  CHECK(tr[6].next_state.aptt == 110.0);
  CHECK_FALSE(tr[6].terminal);
}

TEST_CASE("CSV ingestion rejects malformed input with row numbers") {
  SUBCASE("missing column") {
    std::istringstream in("patient_id,t,age\n");
    CHECK_THROWS_AS(load_trajectories(in), DataError);
  }
  SUBCASE("gap in timesteps") {
    std::string csv = header() + csv_row("p", 0, 50, 1) + csv_row("p", 2, 50, 1);
    std::istringstream in(csv);
    CHECK_THROWS_WITH_AS(load_trajectories(in), doctest::Contains("row 3"), DataError);
  }
  SUBCASE("non-numeric value") {
    std::string csv = header() + csv_row("p", 0, 50, 1);
    csv.replace(csv.rfind(",1"), 2, ",x");
    std::istringstream in(csv);
    CHECK_THROWS_AS(load_trajectories(in), DataError);
  }
}

TEST_CASE("written trajectories load back identically") {
  std::vector<Trajectory> data = {chain("a", 8, 0.0), chain("b", 10, 3.0)};
  const BinEdges edges{1, 2, 3, 4, 5};
  std::stringstream ss;
  write_trajectories(ss, data, edges);
  LoadOptions opts;
  opts.edges = edges;
  const auto back = load_trajectories(ss, opts);
  CHECK(back.trajectories == data);
}

TEST_CASE("normalizer uses population statistics and inverts") {
  std::vector<Trajectory> data = {chain("a", 3, 0.0)};
  const Normalizer n = fit_normalizer(data);
  // States 0,1,2,3: mean 1.5, population variance 1.25.
  CHECK(n.mean[0] == doctest::Approx(1.5));
  CHECK(n.std[0] == doctest::Approx(std::sqrt(1.25)));
  PatientState s;
  s.features.setConstant(2.0);
  s.aptt = 77.0;
  const auto z = n.apply(s);
  CHECK(z.aptt == 77.0);
  CHECK(n.invert(z).features.isApprox(s.features, 1e-14));
  const auto normalized = apply_normalizer(data, n);
  const Normalizer again = fit_normalizer(normalized);
  CHECK(again.mean.norm() < 1e-12);
  CHECK((again.std.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("patient split is disjoint, seeded and sized by floor") {
  std::vector<Trajectory> data;
  for (int i = 0; i < 11; ++i) data.push_back(chain("p" + std::to_string(i), 2, i));
  const Split a = split_train_test(data, 0.8, 5);
  const Split b = split_train_test(data, 0.8, 5);
  CHECK(a.train.size() == 8);
  CHECK(a.test.size() == 3);
  CHECK(a.train == b.train);
  std::set<std::string> ids;
  for (const auto& t : a.train) ids.insert(t.patient_id);
  for (const auto& t : a.test) CHECK(ids.count(t.patient_id) == 0);
  CHECK_THROWS_AS(split_train_test(data, 1.0, 1), ArgumentError);
}

TEST_CASE("replay buffer is a FIFO ring with exact sampling semantics") {
  ReplayBuffer buf(3);
  const auto data = chain("x", 5, 0.0).transitions;
  buf.push_all(data);
  CHECK(buf.size() == 3);
  const auto c = buf.contents();
  CHECK(c[0] == data[2]);
  CHECK(c[2] == data[4]);
  Rng rng = derive_rng(1, 2);
  const auto s = buf.sample(3, rng);
  std::set<double> seen;
  for (const auto& t : s) seen.insert(t.state.features[0]);
  CHECK(seen.size() == 3);
  CHECK_THROWS_AS(buf.sample(4, rng), StateError);
  CHECK(buf.sample_with_replacement(10, rng).size() == 10);
  CHECK_THROWS_AS(ReplayBuffer().sample_with_replacement(1, rng), StateError);

  std::stringstream ss;
  textio::Writer w(ss);
  buf.save(w);
  textio::Reader r(ss);
  CHECK(ReplayBuffer::load(r) == buf);
}

TEST_CASE("unbounded replay buffer keeps everything") {
  ReplayBuffer buf;
  buf.push_all(chain("x", 50, 0.0).transitions);
  CHECK(buf.size() == 50);
}
