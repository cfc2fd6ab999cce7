#include "omgrl/config.hpp"
#include "omgrl/error.hpp"
#include "omgrl/settings.hpp"
#include "omgrl/textio.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace omgrl;

TEST_CASE("config parses sections, comments and overrides") {
  std::istringstream in("seed = 4\n# comment\n[agent]\nalpha = 5  # trailing\n[orchestrator]\nepochs=20\n");
  Config c = Config::parse(in);
  CHECK(c.get_int("seed", 0) == 4);
  CHECK(c.get_double("agent.alpha", 0) == 5.0);
  CHECK(c.get_int("orchestrator.epochs", 0) == 20);
  c.apply_override("agent.alpha=2.5");
  CHECK(c.get_double("agent.alpha", 0) == 2.5);
  CHECK_THROWS_AS(c.apply_override("noequals"), ArgumentError);
  CHECK_THROWS_AS(c.get("missing.key"), ArgumentError);
}

TEST_CASE("config dump round-trips and the fingerprint tracks overrides") {
  Config c;
  c.set("seed", "3");
  c.set("agent.alpha", "1");
  const std::string before = c.fingerprint();
  std::istringstream in(c.dump());
  const Config back = Config::parse(in);
  CHECK(back.entries() == c.entries());
  CHECK(back.fingerprint() == before);
  c.apply_override("agent.alpha=2");
  CHECK(c.fingerprint() != before);
  c.apply_override("agent.alpha=1");
  CHECK(c.fingerprint() == before);
}

TEST_CASE("malformed config values are argument errors") {
  Config c;
  c.set("a.n", "abc");
  CHECK_THROWS_AS(c.get_int("a.n", 0), ArgumentError);
  CHECK_THROWS_AS(c.get_double("a.n", 0), ArgumentError);
  std::istringstream bad("[open\n");
  CHECK_THROWS_AS(Config::parse(bad), ArgumentError);
}

TEST_CASE("format_double is shortest round-trip") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(textio::parse_double(textio::format_double(v)) == v);
  }
  CHECK(textio::format_double(0.1) == "0.1");
  CHECK(std::isnan(textio::parse_double(textio::format_double(std::numeric_limits<double>::quiet_NaN()))));
}

TEST_CASE("fnv1a matches reference vectors") {
  CHECK(textio::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(textio::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(textio::fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("settings map config keys onto typed configs") {
  Config c;
  c.set("seed", "9");
  c.set("agent.alpha", "5");
  c.set("reward.hidden", "32, 32");
  c.set("reward.activation", "tanh");
  c.set("orchestrator.mode", "combo");
  c.set("orchestrator.rollout_horizon", "3");
  c.set("dynamics.members", "4");
  c.set("dynamics.keep", "2");
  const auto tc = settings::train(c);
  CHECK(tc.seed == 9);
  CHECK(tc.mode == orchestrator::Mode::combo);
  CHECK(tc.agent.cql.alpha == 5.0);
  CHECK(tc.reward.hidden == std::vector<int>{32, 32});
  CHECK(tc.reward.activation == nn::Activation::tanh);
  CHECK(tc.reward.segment_length == 3);
  const auto dc = settings::dynamics(c);
  CHECK(dc.members == 4);
  CHECK(dc.keep == 2);
  CHECK(dc.seed == 9);
  CHECK_THROWS_AS(settings::parse_widths("64,x"), ArgumentError);
}
