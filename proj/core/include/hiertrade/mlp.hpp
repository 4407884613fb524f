#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace hiertrade {

// Standardizes features to zero mean / unit variance using statistics frozen
// at fit time.  Constant columns pass through centered (divisor 1), so a
// degenerate feature cannot blow up the network inputs.
struct FeatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // adjusted: entries < 1e-12 replaced by 1

  bool fitted() const { return mean.size() > 0; }
  Eigen::VectorXd transform(const Eigen::VectorXd& x) const;
};

FeatureScaler fit_scaler(const std::vector<Eigen::VectorXd>& rows);

enum class Activation { tanh_fn, identity };

// Maps the last linear layer onto feasible offer quantities.
//   scaled_sigmoid: h_i = scale_i * sigmoid(s_i), smooth, range (0, scale_i)
//   clamp:          h_i = min(max(s_i, 0), scale_i), kinked, exact bounds
//   identity:       h_i = s_i, for unconstrained regression heads
enum class OutputTransform { scaled_sigmoid, clamp, identity };

const char* activation_tag(Activation a);
Activation parse_activation(const std::string& tag);
const char* transform_tag(OutputTransform t);
OutputTransform parse_transform(const std::string& tag);

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out
};

// A small fully connected network, forward and backward written out
// explicitly so every gradient used in training is checkable against finite
// differences.  The hidden activation applies to all layers but the last;
// the output transform applies after the last.  With a single layer the net
// is affine plus the transform, which covers the linear baselines.
struct Mlp {
  std::vector<Layer> layers;
  Activation activation = Activation::tanh_fn;
  OutputTransform transform = OutputTransform::scaled_sigmoid;
  Eigen::VectorXd output_scale;  // per-output bound; required unless identity
  std::uint64_t init_seed = 0;

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
};

// dims = {input, hidden..., output}.  Weights are Glorot-uniform with bound
// sqrt(6 / (fan_in + fan_out)) drawn from a seeded mt19937_64 in layer
// order; biases start at zero.
Mlp make_mlp(const std::vector<int>& dims, Activation activation, OutputTransform transform,
             Eigen::VectorXd output_scale, std::uint64_t seed);

// Intermediate states of one forward pass, kept for backpropagation.
struct MlpTrace {
  std::vector<Eigen::VectorXd> post;  // post[0] = x, then hidden activations
  Eigen::VectorXd pre_out;            // last linear output, before transform
  Eigen::VectorXd out;
};

Eigen::VectorXd forward_trace(const Mlp& mlp, const Eigen::VectorXd& x, MlpTrace& trace);

struct MlpGrad {
  std::vector<Layer> layers;

  void add_scaled(const MlpGrad& other, double factor);
  void scale(double factor);
  double max_abs() const;
};

MlpGrad zero_grad(const Mlp& mlp);

// Accumulates d(loss)/d(parameters) into `grad` given d(loss)/d(output) at
// the traced point; returns d(loss)/d(input).  Kinks (clamp boundaries) use
// subgradient 0, matching the convention of the settlement functions.
Eigen::VectorXd backward(const Mlp& mlp, const MlpTrace& trace, const Eigen::VectorXd& out_grad,
                         MlpGrad& grad);

// params <- params - step * grad.  Throws TrainingError if any updated
// parameter is non-finite.
void sgd_step(Mlp& mlp, const MlpGrad& grad, double step);

// Max over parameters of |analytic - central_difference| scaled by
// (|analytic| + |central_difference| + 1e-12).  `loss` maps the transformed
// network output to a scalar; `loss_grad` is its analytic gradient.
double grad_check(const Mlp& mlp, const Eigen::VectorXd& x,
                  const std::function<double(const Eigen::VectorXd&)>& loss,
                  const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad,
                  double fd_eps = 1e-6);

// Text serialization: header with dimensions, activation and transform tags,
// init seed, output scale, scaler statistics, then row-major weight blocks.
// Floats print as %.17g so a load reproduces the saved model bit for bit.
void save_mlp(const Mlp& mlp, const FeatureScaler& scaler, std::ostream& os);
void save_mlp_file(const Mlp& mlp, const FeatureScaler& scaler, const std::string& path);
std::pair<Mlp, FeatureScaler> load_mlp(std::istream& is);
std::pair<Mlp, FeatureScaler> load_mlp_file(const std::string& path);

}  // namespace hiertrade
