#include "omgrl/error.hpp"
#include "omgrl/nn.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace omgrl;
using namespace omgrl::nn;

namespace {

GradCheckTrial random_trial(const DenseNet& net, LossHead head, Rng& rng) {
  GradCheckTrial t;
  t.input = Eigen::VectorXd::NullaryExpr(net.input_dim(), [&] { return standard_normal(rng); });
  const int target_dim = head == LossHead::gaussian_nll ? net.output_dim() / 2 : net.output_dim();
  t.target = Eigen::VectorXd::NullaryExpr(target_dim, [&] { return standard_normal(rng); });
  t.label = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(net.output_dim())));
  return t;
}

}  // namespace

TEST_CASE("backprop matches finite differences for every head") {
  Rng rng = derive_rng(1, 1);
  struct Case {
    Activation act;
    OutputHead head;
    LossHead loss;
    std::vector<int> sizes;
  };
  const std::vector<Case> cases = {
      {Activation::tanh, OutputHead::linear, LossHead::quadratic, {5, 7, 3}},
      {Activation::relu, OutputHead::linear, LossHead::quadratic, {4, 6, 6, 2}},
      {Activation::tanh, OutputHead::softmax, LossHead::cross_entropy, {5, 8, 6}},
      {Activation::relu, OutputHead::softmax, LossHead::cross_entropy, {3, 6}},
      {Activation::tanh, OutputHead::gaussian, LossHead::gaussian_nll, {4, 8, 6}},
      {Activation::relu, OutputHead::gaussian, LossHead::gaussian_nll, {22, 16, 16, 34}},
  };
  for (const auto& c : cases) {
    for (int i = 0; i < 10; ++i) {
      const DenseNet net = DenseNet::initialized(c.sizes, c.act, c.head, rng);
      const double err = grad_check(net, c.loss, random_trial(net, c.loss, rng));
      CHECK(err <= 1e-4);
    }
  }
}

TEST_CASE("softmax and log_softmax are stable and consistent") {
  Eigen::MatrixXd logits(3, 2);
  logits << 1000, -3, 1001, 0, 999, 2;
  const auto p = softmax(logits);
  const auto lp = log_softmax(logits);
  for (int j = 0; j < 2; ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-15));
    for (int i = 0; i < 3; ++i) CHECK(std::log(p(i, j)) == doctest::Approx(lp(i, j)).epsilon(1e-12));
  }
  const double z = std::exp(-1.0) + 1.0 + std::exp(-2.0);
  CHECK(p(1, 0) == doctest::Approx(1.0 / z).epsilon(1e-15));
}

TEST_CASE("gaussian_nll matches the closed form and its derivatives") {
  Eigen::VectorXd mean(2), lv(2), y(2);
  mean << 0.5, -1.0;
  lv << 0.2, -0.7;
  y << 1.0, 0.3;
  const auto g = gaussian_nll(mean, lv, y);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double d = y(i) - mean(i);
    expected += 0.5 * (lv(i) + d * d * std::exp(-lv(i)) + std::log(2.0 * std::numbers::pi));
  }
  CHECK(g.loss == doctest::Approx(expected).epsilon(1e-14));
  auto f_mean = [&](const Eigen::VectorXd& m) { return gaussian_nll(m, lv, y).loss; };
  auto f_lv = [&](const Eigen::VectorXd& l) { return gaussian_nll(mean, l, y).loss; };
  CHECK(max_relative_error(g.d_mean, numeric_gradient(f_mean, mean, 1e-6)) < 1e-7);
  CHECK(max_relative_error(g.d_log_var, numeric_gradient(f_lv, lv, 1e-6)) < 1e-7);
}

TEST_CASE("soft clamp stays inside the log-variance bounds") {
  for (double raw : {-1e6, -50.0, -10.0, -4.75, 0.0, 0.5, 3.0, 1e6}) {
    const double c = soft_clamp_logvar(raw);
    CHECK(c >= kLogVarMin);
    CHECK(c <= kLogVarMax);
  }
  CHECK(soft_clamp_logvar(-4.75) == doctest::Approx(-4.75));
  const double h = 1e-6;
  for (double raw : {-8.0, -3.0, 0.1}) {
    const double fd = (soft_clamp_logvar(raw + h) - soft_clamp_logvar(raw - h)) / (2 * h);
    CHECK(soft_clamp_logvar_derivative(raw) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("adam step matches a hand-computed first step") {
  DenseNet net({1, 1}, Activation::relu, OutputHead::linear);
  net.params()[0].weight(0, 0) = 1.0;
  net.params()[0].bias(0) = 2.0;
  AdamState st = AdamState::for_net(net, {0.1, 0.9, 0.999, 1e-8});
  Params g = zeros_like(net.params());
  g[0].weight(0, 0) = 0.5;
  g[0].bias(0) = -2.0;
  adam_step(net, g, st);
  // After bias correction the first step is lr * g / (|g| + eps').
  const double eps_hat = 1e-8;
  CHECK(net.params()[0].weight(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + eps_hat)).epsilon(1e-12));
  CHECK(net.params()[0].bias(0) == doctest::Approx(2.0 + 0.1 * 2.0 / (2.0 + eps_hat)).epsilon(1e-12));
  CHECK(st.step == 1);
}

TEST_CASE("adam rejects non-finite gradients without modifying parameters") {
  Rng rng = derive_rng(2, 2);
  DenseNet net = DenseNet::initialized({3, 4, 2}, Activation::tanh, OutputHead::linear, rng);
  const DenseNet before = net;
  AdamState st = AdamState::for_net(net, {});
  const AdamState st_before = st;
  Params g = zeros_like(net.params());
  g[1].bias(0) = std::nan("");
  CHECK_THROWS_AS(adam_step(net, g, st), NumericError);
  CHECK(net == before);
  CHECK(st == st_before);
}

TEST_CASE("network checkpoints round-trip exactly") {
  Rng rng = derive_rng(3, 3);
  DenseNet net = DenseNet::initialized({22, 8, 34}, Activation::relu, OutputHead::gaussian, rng);
  AdamState st = AdamState::for_net(net, {});
  Params g = zeros_like(net.params());
  g[0].weight.setConstant(0.3);
  adam_step(net, g, st);
  std::stringstream ss;
  save_net(ss, net, &st);
  AdamState back_st;
  const DenseNet back = load_net(ss, &back_st);
  CHECK(back == net);
  CHECK(back_st == st);

  std::stringstream bad("OMGRL-NET v2\n");
  CHECK_THROWS(load_net(bad));
}

TEST_CASE("flatten and assign are inverse") {
  Rng rng = derive_rng(4, 4);
  DenseNet net = DenseNet::initialized({3, 5, 2}, Activation::tanh, OutputHead::softmax, rng);
  const Eigen::VectorXd flat = net.flatten();
  CHECK(static_cast<std::size_t>(flat.size()) == net.parameter_count());
  DenseNet other({3, 5, 2}, Activation::tanh, OutputHead::softmax);
  other.assign(flat);
  CHECK(other == net);
  CHECK_THROWS_AS(other.assign(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("forward rejects inputs of the wrong width") {
  DenseNet net({3, 2}, Activation::relu, OutputHead::linear);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 1);
  CHECK_THROWS_AS(forward(net, x), ShapeError);
}
