#pragma once

// Small fp64 fully-connected network engine. Inputs and outputs are batched
// column-wise: a matrix of shape (features x batch).

#include "omgrl/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace omgrl::nn {

enum class Activation { relu, tanh };
enum class OutputHead { linear, softmax, gaussian };

// Soft bounds on Gaussian-head log-variances.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 0.5;

std::string to_string(Activation a);
std::string to_string(OutputHead h);
Activation parse_activation(const std::string& s);
OutputHead parse_output_head(const std::string& s);

struct Layer {
  Eigen::MatrixXd weight;  // (out x in)
  Eigen::VectorXd bias;    // (out)
};

// Parameter-shaped container; also used for gradients and Adam moments.
using Params = std::vector<Layer>;

class DenseNet {
 public:
  DenseNet() = default;
  // All-zero parameters.
  DenseNet(std::vector<int> layer_sizes, Activation hidden, OutputHead head);
  // Uniform He-style initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias.
  static DenseNet initialized(std::vector<int> layer_sizes, Activation hidden, OutputHead head,
                              Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  // Width of the final layer (for the Gaussian head: 2 x distribution dim).
  int output_dim() const { return sizes_.back(); }
  Activation hidden_activation() const { return hidden_; }
  OutputHead output_head() const { return head_; }

  Params& params() { return layers_; }
  const Params& params() const { return layers_; }
  std::size_t parameter_count() const;

  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  bool operator==(const DenseNet& other) const;

 private:
  std::vector<int> sizes_;
  Activation hidden_ = Activation::relu;
  OutputHead head_ = OutputHead::linear;
  Params layers_;
};

Params zeros_like(const Params& p);
Eigen::VectorXd flatten(const Params& p);
void scale(Params& p, double s);
void add_scaled(Params& dst, const Params& src, double s);

struct ForwardCache {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  Eigen::MatrixXd output;               // after the output head

  bool empty() const { return inputs.empty(); }
  Eigen::Index batch() const { return output.cols(); }
};

struct Gradients {
  Params params;           // summed over the batch
  Eigen::MatrixXd input;   // (input_dim x batch)
};

ForwardCache forward(const DenseNet& net, const Eigen::MatrixXd& inputs);
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input);

// `upstream` is dLoss/dOutput with respect to the head output (probabilities
// for softmax, [mean; clamped log-variance] for the Gaussian head).
Gradients backward(const DenseNet& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream);

// Column-wise, max-subtracted.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

// Smooth clamp of raw log-variances into (kLogVarMin, kLogVarMax) and its derivative.
double soft_clamp_logvar(double raw);
double soft_clamp_logvar_derivative(double raw);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Params m;
  Params v;
  long step = 0;

  static AdamState for_net(const DenseNet& net, AdamConfig config);
  bool operator==(const AdamState& other) const;
};

// In-place Adam update with bias correction. Throws NumericError naming the
// offending parameter block if any gradient is non-finite; nothing is
// modified in that case.
void adam_step(DenseNet& net, const Params& grads, AdamState& state);

struct GaussianNll {
  double loss = 0.0;
  Eigen::VectorXd d_mean;
  Eigen::VectorXd d_log_var;
};

// Negative log-density of a diagonal Gaussian in log-variance form.
GaussianNll gaussian_nll(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_var,
                         const Eigen::VectorXd& target);

enum class LossHead { quadratic, cross_entropy, gaussian_nll };

struct GradCheckTrial {
  Eigen::VectorXd input;
  Eigen::VectorXd target;  // regression target (quadratic / gaussian_nll)
  int label = 0;           // class label (cross_entropy)
  double step = 1e-6;
};

// Loss of one trial under a head; shared by grad_check and tests.
double trial_loss(const DenseNet& net, LossHead head, const GradCheckTrial& trial);
Params trial_gradient(const DenseNet& net, LossHead head, const GradCheckTrial& trial);

// Worst relative error between backprop and central finite differences over
// every parameter.
double grad_check(const DenseNet& net, LossHead head, const GradCheckTrial& trial);

// |a - n| / max(|a|, |n|, floor), maximized over components.
inline constexpr double kRelErrFloor = 1e-6;
double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

// While a probe is alive on this thread, every forward pass folds its ReLU
// on/off pattern into a running hash. Finite-difference checks use it to spot
// steps that cross a kink, where the derivative is undefined.
class ReluPatternProbe {
 public:
  ReluPatternProbe();
  ~ReluPatternProbe();
  ReluPatternProbe(const ReluPatternProbe&) = delete;
  ReluPatternProbe& operator=(const ReluPatternProbe&) = delete;

  std::uint64_t hash() const { return hash_; }
  void reset() { hash_ = kFnvOffset; }
  void fold(const Eigen::MatrixXd& pre);

 private:
  static constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
  std::uint64_t hash_ = kFnvOffset;
  ReluPatternProbe* previous_ = nullptr;
};

// Central finite differences of f around x.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step);

// "OMGRL-NET v1" checkpoint. Adam moments are optional.
void save_net(std::ostream& out, const DenseNet& net, const AdamState* adam = nullptr);
DenseNet load_net(std::istream& in, AdamState* adam = nullptr);

}  // namespace omgrl::nn
