#include "omgrl/nn.hpp"

#include "omgrl/error.hpp"
#include "omgrl/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace omgrl::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

std::string to_string(OutputHead h) {
  switch (h) {
    case OutputHead::linear: return "linear";
    case OutputHead::softmax: return "softmax";
    case OutputHead::gaussian: return "gaussian";
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ArgumentError("unknown activation '" + s + "'");
}

OutputHead parse_output_head(const std::string& s) {
  if (s == "linear") return OutputHead::linear;
  if (s == "softmax") return OutputHead::softmax;
  if (s == "gaussian") return OutputHead::gaussian;
  throw ArgumentError("unknown output head '" + s + "'");
}

DenseNet::DenseNet(std::vector<int> layer_sizes, Activation hidden, OutputHead head)
    : sizes_(std::move(layer_sizes)), hidden_(hidden), head_(head) {
  if (sizes_.size() < 2) throw ShapeError("a network needs at least two layer sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  if (head_ == OutputHead::gaussian && sizes_.back() % 2 != 0) {
    throw ShapeError("gaussian head needs an even output width");
  }
  layers_.reserve(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    layers_.push_back(
        {Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]), Eigen::VectorXd::Zero(sizes_[l + 1])});
  }
}

DenseNet DenseNet::initialized(std::vector<int> layer_sizes, Activation hidden, OutputHead head,
                               Rng& rng) {
  DenseNet net(std::move(layer_sizes), hidden, head);
  for (auto& layer : net.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = uniform_real(rng, -bound, bound);
    }
  }
  return net;
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd flatten(const Params& p) {
  Eigen::Index n = 0;
  for (const auto& l : p) n += l.weight.size() + l.bias.size();
  Eigen::VectorXd flat(n);
  Eigen::Index k = 0;
  for (const auto& l : p) {
    flat.segment(k, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
    k += l.weight.size();
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return flat;
}

Eigen::VectorXd DenseNet::flatten() const { return nn::flatten(layers_); }

void DenseNet::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw ShapeError("flat parameter vector has wrong length");
  }
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (sizes_ != other.sizes_ || hidden_ != other.hidden_ || head_ != other.head_) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

Params zeros_like(const Params& p) {
  Params z;
  z.reserve(p.size());
  for (const auto& l : p) {
    z.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                 Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

void scale(Params& p, double s) {
  for (auto& l : p) {
    l.weight *= s;
    l.bias *= s;
  }
}

void add_scaled(Params& dst, const Params& src, double s) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i].weight += s * src[i].weight;
    dst[i].bias += s * src[i].bias;
  }
}

namespace {

constexpr double kLogVarCenter = 0.5 * (kLogVarMax + kLogVarMin);
constexpr double kLogVarHalfWidth = 0.5 * (kLogVarMax - kLogVarMin);

Eigen::MatrixXd apply_hidden(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

Eigen::MatrixXd hidden_derivative(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

double soft_clamp_logvar(double raw) {
  return kLogVarCenter + kLogVarHalfWidth * std::tanh((raw - kLogVarCenter) / kLogVarHalfWidth);
}

double soft_clamp_logvar_derivative(double raw) {
  const double t = std::tanh((raw - kLogVarCenter) / kLogVarHalfWidth);
  return 1.0 - t * t;
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - mx).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

namespace {
thread_local ReluPatternProbe* active_probe = nullptr;
}

ReluPatternProbe::ReluPatternProbe() : previous_(active_probe) { active_probe = this; }
ReluPatternProbe::~ReluPatternProbe() { active_probe = previous_; }

void ReluPatternProbe::fold(const Eigen::MatrixXd& pre) {
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    hash_ = (hash_ ^ (pre.data()[i] > 0.0 ? 0x9eU : 0x3dU)) * 1099511628211ULL;
  }
}

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  }
  const auto& layers = net.params();
  ForwardCache cache;
  cache.layer_sizes = net.layer_sizes();
  cache.inputs.reserve(layers.size());
  cache.pre.reserve(layers.size());
  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * x;
    z.colwise() += layers[l].bias;
    cache.inputs.push_back(std::move(x));
    if (l + 1 < layers.size()) {
      x = apply_hidden(z, net.hidden_activation());
      if (active_probe && net.hidden_activation() == Activation::relu) active_probe->fold(z);
    }
    cache.pre.push_back(std::move(z));
  }
  const Eigen::MatrixXd& logits = cache.pre.back();
  switch (net.output_head()) {
    case OutputHead::linear:
      cache.output = logits;
      break;
    case OutputHead::softmax:
      cache.output = softmax(logits);
      break;
    case OutputHead::gaussian: {
      const Eigen::Index d = logits.rows() / 2;
      cache.output = logits;
      cache.output.bottomRows(d) = logits.bottomRows(d).unaryExpr(&soft_clamp_logvar);
      break;
    }
  }
  return cache;
}

Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input) {
  return forward(net, Eigen::MatrixXd(input)).output.col(0);
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream) {
  const auto& layers = net.params();
  if (cache.empty()) throw StateError("backward: no forward cache");
  if (cache.layer_sizes != net.layer_sizes() || cache.inputs.size() != layers.size()) {
    throw StateError("backward: cache was produced by a different network");
  }
  if (upstream.rows() != net.output_dim() || upstream.cols() != cache.batch()) {
    throw StateError("backward: upstream gradient shape does not match the cached forward pass");
  }

  Eigen::MatrixXd dz;
  switch (net.output_head()) {
    case OutputHead::linear:
      dz = upstream;
      break;
    case OutputHead::softmax: {
      const Eigen::MatrixXd& p = cache.output;
      const Eigen::RowVectorXd inner = (p.array() * upstream.array()).colwise().sum();
      dz = (p.array() * (upstream.rowwise() - inner).array()).matrix();
      break;
    }
    case OutputHead::gaussian: {
      const Eigen::Index d = upstream.rows() / 2;
      dz = upstream;
      dz.bottomRows(d) = (upstream.bottomRows(d).array() *
                          cache.pre.back().bottomRows(d).unaryExpr(&soft_clamp_logvar_derivative).array())
                             .matrix();
      break;
    }
  }

  Gradients g;
  g.params.resize(layers.size());
  for (std::size_t i = layers.size(); i-- > 0;) {
    g.params[i].weight = dz * cache.inputs[i].transpose();
    g.params[i].bias = dz.rowwise().sum();
    Eigen::MatrixXd dx = layers[i].weight.transpose() * dz;
    if (i == 0) {
      g.input = std::move(dx);
    } else {
      dz = (dx.array() * hidden_derivative(cache.pre[i - 1], net.hidden_activation()).array()).matrix();
    }
  }
  return g;
}

AdamState AdamState::for_net(const DenseNet& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.m = zeros_like(net.params());
  s.v = zeros_like(net.params());
  return s;
}

bool AdamState::operator==(const AdamState& other) const {
  if (step != other.step || m.size() != other.m.size()) return false;
  if (config.lr != other.config.lr || config.beta1 != other.config.beta1 ||
      config.beta2 != other.config.beta2 || config.eps != other.config.eps) {
    return false;
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].weight != other.m[i].weight || m[i].bias != other.m[i].bias ||
        v[i].weight != other.v[i].weight || v[i].bias != other.v[i].bias) {
      return false;
    }
  }
  return true;
}

void adam_step(DenseNet& net, const Params& grads, AdamState& state) {
  auto& layers = net.params();
  if (grads.size() != layers.size() || state.m.size() != layers.size()) {
    throw ShapeError("adam_step: parameter/gradient/moment block counts differ");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads[i].weight.rows() != layers[i].weight.rows() ||
        grads[i].weight.cols() != layers[i].weight.cols() ||
        grads[i].bias.size() != layers[i].bias.size()) {
      throw ShapeError("adam_step: gradient shape mismatch in layer " + std::to_string(i));
    }
    if (!grads[i].weight.allFinite()) {
      throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(i) + " weights");
    }
    if (!grads[i].bias.allFinite()) {
      throw NumericError("adam_step: non-finite gradient in layer " + std::to_string(i) + " bias");
    }
  }

  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = (c.beta2 * v.array() + (1.0 - c.beta2) * grad.array().square()).matrix();
    param.array() -= c.lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + c.eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads[i].weight, state.m[i].weight, state.v[i].weight);
    update(layers[i].bias, grads[i].bias, state.m[i].bias, state.v[i].bias);
  }
}

GaussianNll gaussian_nll(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_var,
                         const Eigen::VectorXd& target) {
  if (mean.size() != log_var.size() || mean.size() != target.size()) {
    throw ShapeError("gaussian_nll: length mismatch");
  }
  if (!mean.allFinite() || !log_var.allFinite() || !target.allFinite()) {
    throw NumericError("gaussian_nll: non-finite input");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  GaussianNll out;
  const Eigen::ArrayXd inv_var = (-log_var.array()).exp();
  const Eigen::ArrayXd diff = target.array() - mean.array();
  out.loss = (half_log_2pi + 0.5 * log_var.array() + 0.5 * diff.square() * inv_var).sum();
  out.d_mean = (-diff * inv_var).matrix();
  out.d_log_var = (0.5 - 0.5 * diff.square() * inv_var).matrix();
  return out;
}

double trial_loss(const DenseNet& net, LossHead head, const GradCheckTrial& trial) {
  const Eigen::VectorXd y = forward(net, trial.input);
  switch (head) {
    case LossHead::quadratic:
      return 0.5 * (y - trial.target).squaredNorm();
    case LossHead::cross_entropy:
      if (net.output_head() != OutputHead::softmax) {
        throw ArgumentError("cross_entropy needs a softmax head");
      }
      return -std::log(y[trial.label]);
    case LossHead::gaussian_nll: {
      const Eigen::Index d = y.size() / 2;
      return gaussian_nll(y.head(d), y.tail(d), trial.target).loss;
    }
  }
  return 0.0;
}

Params trial_gradient(const DenseNet& net, LossHead head, const GradCheckTrial& trial) {
  const ForwardCache cache = forward(net, Eigen::MatrixXd(trial.input));
  const Eigen::VectorXd y = cache.output.col(0);
  Eigen::VectorXd up = Eigen::VectorXd::Zero(y.size());
  switch (head) {
    case LossHead::quadratic:
      up = y - trial.target;
      break;
    case LossHead::cross_entropy:
      if (net.output_head() != OutputHead::softmax) {
        throw ArgumentError("cross_entropy needs a softmax head");
      }
      up[trial.label] = -1.0 / y[trial.label];
      break;
    case LossHead::gaussian_nll: {
      const Eigen::Index d = y.size() / 2;
      const GaussianNll g = gaussian_nll(y.head(d), y.tail(d), trial.target);
      up.head(d) = g.d_mean;
      up.tail(d) = g.d_log_var;
      break;
    }
  }
  return backward(net, cache, Eigen::MatrixXd(up)).params;
}

double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), kRelErrFloor});
    const double err = std::abs(a - n) / denom;
    if (!(err <= worst)) worst = err;  // NaN propagates
  }
  return worst;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double grad_check(const DenseNet& net, LossHead head, const GradCheckTrial& trial) {
  const Eigen::VectorXd analytic = flatten(trial_gradient(net, head, trial));
  DenseNet probe = net;
  Eigen::VectorXd numeric(analytic.size());
  Eigen::Index k = 0;
  auto perturb_block = [&](double* data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i, ++k) {
      const double saved = data[i];
      data[i] = saved + trial.step;
      const double up = trial_loss(probe, head, trial);
      data[i] = saved - trial.step;
      const double down = trial_loss(probe, head, trial);
      data[i] = saved;
      numeric[k] = (up - down) / (2.0 * trial.step);
    }
  };
  for (auto& layer : probe.params()) {
    perturb_block(layer.weight.data(), layer.weight.size());
    perturb_block(layer.bias.data(), layer.bias.size());
  }
  return max_relative_error(analytic, numeric);
}

void save_net(std::ostream& out, const DenseNet& net, const AdamState* adam) {
  textio::Writer w(out);
  w.magic("OMGRL-NET v1");
  w.key("layer_sizes");
  w.value(net.layer_sizes().size());
  for (int s : net.layer_sizes()) w.value(s);
  w.endl();
  w.key("hidden");
  w.value(to_string(net.hidden_activation()));
  w.endl();
  w.key("head");
  w.value(to_string(net.output_head()));
  w.endl();
  for (const auto& l : net.params()) {
    w.key("layer");
    w.matrix(l.weight);
    w.vector(l.bias);
    w.endl();
  }
  w.key("adam");
  w.value(adam != nullptr ? 1 : 0);
  w.endl();
  if (adam != nullptr) {
    w.key("adam_config");
    w.value(adam->config.lr);
    w.value(adam->config.beta1);
    w.value(adam->config.beta2);
    w.value(adam->config.eps);
    w.value(static_cast<std::int64_t>(adam->step));
    w.endl();
    for (std::size_t i = 0; i < adam->m.size(); ++i) {
      w.key("moments");
      w.matrix(adam->m[i].weight);
      w.vector(adam->m[i].bias);
      w.matrix(adam->v[i].weight);
      w.vector(adam->v[i].bias);
      w.endl();
    }
  }
  w.key("end");
  w.endl();
}

DenseNet load_net(std::istream& in, AdamState* adam) {
  textio::Reader r(in);
  r.expect_magic("OMGRL-NET v1");
  r.expect_key("layer_sizes");
  const auto n = r.integer();
  std::vector<int> sizes;
  for (std::int64_t i = 0; i < n; ++i) sizes.push_back(static_cast<int>(r.integer()));
  r.expect_key("hidden");
  const Activation hidden = parse_activation(r.token());
  r.expect_key("head");
  const OutputHead head = parse_output_head(r.token());
  DenseNet net(sizes, hidden, head);
  for (auto& l : net.params()) {
    r.expect_key("layer");
    Eigen::MatrixXd w = r.matrix();
    Eigen::VectorXd b = r.vector();
    if (w.rows() != l.weight.rows() || w.cols() != l.weight.cols() || b.size() != l.bias.size()) {
      throw DataError("checkpoint: layer shape inconsistent with layer_sizes");
    }
    l.weight = std::move(w);
    l.bias = std::move(b);
  }
  r.expect_key("adam");
  const bool has_adam = r.integer() != 0;
  if (has_adam) {
    AdamState s = AdamState::for_net(net, {});
    r.expect_key("adam_config");
    s.config.lr = r.real();
    s.config.beta1 = r.real();
    s.config.beta2 = r.real();
    s.config.eps = r.real();
    s.step = static_cast<long>(r.integer());
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      r.expect_key("moments");
      s.m[i].weight = r.matrix();
      s.m[i].bias = r.vector();
      s.v[i].weight = r.matrix();
      s.v[i].bias = r.vector();
    }
    if (adam != nullptr) *adam = std::move(s);
  } else if (adam != nullptr) {
    *adam = AdamState::for_net(net, {});
  }
  r.expect_key("end");
  return net;
}

}  // namespace omgrl::nn

namespace omgrl::nn {

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const double lse = mx + std::log((logits.col(c).array() - mx).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace omgrl::nn
