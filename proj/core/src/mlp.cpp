#include "hiertrade/mlp.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "hiertrade/errors.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

Eigen::VectorXd FeatureScaler::transform(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw DataError("feature vector length does not match scaler");
  return (x - mean).cwiseQuotient(stddev);
}

FeatureScaler fit_scaler(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) throw DataError("cannot fit a scaler on zero rows");
  const Eigen::Index dim = rows.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& r : rows) {
    if (r.size() != dim) throw DataError("ragged feature rows");
    mean += r;
  }
  mean /= static_cast<double>(rows.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (const auto& r : rows) var += (r - mean).cwiseAbs2();
  var /= static_cast<double>(rows.size());
  FeatureScaler s;
  s.mean = std::move(mean);
  s.stddev = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < dim; ++i)
    if (s.stddev(i) < 1e-12) s.stddev(i) = 1.0;
  return s;
}

int Mlp::input_dim() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  return static_cast<int>(layers.front().w.cols());
}

int Mlp::output_dim() const {
  if (layers.empty()) throw ConfigError("network has no layers");
  return static_cast<int>(layers.back().w.rows());
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

namespace {

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  double e = std::exp(s);
  return e / (1.0 + e);
}

Eigen::VectorXd apply_activation(Activation a, const Eigen::VectorXd& v) {
  if (a == Activation::identity) return v;
  return v.array().tanh();
}

Eigen::VectorXd apply_transform(const Mlp& mlp, const Eigen::VectorXd& s) {
  switch (mlp.transform) {
    case OutputTransform::identity:
      return s;
    case OutputTransform::clamp: {
      Eigen::VectorXd h(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        double hi = mlp.output_scale(i);
        h(i) = s(i) < 0.0 ? 0.0 : (s(i) > hi ? hi : s(i));
      }
      return h;
    }
    case OutputTransform::scaled_sigmoid: {
      Eigen::VectorXd h(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) h(i) = mlp.output_scale(i) * sigmoid(s(i));
      return h;
    }
  }
  throw ConfigError("unknown output transform");
}

// d(out)/d(pre_out), elementwise.  Clamp boundaries count as outside, so the
// derivative at an exact kink is 0.
Eigen::VectorXd transform_slope(const Mlp& mlp, const Eigen::VectorXd& s) {
  switch (mlp.transform) {
    case OutputTransform::identity:
      return Eigen::VectorXd::Ones(s.size());
    case OutputTransform::clamp: {
      Eigen::VectorXd d(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i)
        d(i) = (s(i) > 0.0 && s(i) < mlp.output_scale(i)) ? 1.0 : 0.0;
      return d;
    }
    case OutputTransform::scaled_sigmoid: {
      Eigen::VectorXd d(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        double sig = sigmoid(s(i));
        d(i) = mlp.output_scale(i) * sig * (1.0 - sig);
      }
      return d;
    }
  }
  throw ConfigError("unknown output transform");
}

void check_shapes(const Mlp& mlp) {
  if (mlp.layers.empty()) throw ConfigError("network has no layers");
  for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l)
    if (mlp.layers[l + 1].w.cols() != mlp.layers[l].w.rows())
      throw ConfigError("layer dimensions do not chain");
  for (const auto& layer : mlp.layers)
    if (layer.b.size() != layer.w.rows()) throw ConfigError("bias length mismatch");
  if (mlp.transform != OutputTransform::identity &&
      mlp.output_scale.size() != mlp.layers.back().w.rows())
    throw ConfigError("output scale length must match the output dimension");
}

}  // namespace

Mlp make_mlp(const std::vector<int>& dims, Activation activation, OutputTransform transform,
             Eigen::VectorXd output_scale, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("network needs at least input and output dimensions");
  for (int d : dims)
    if (d < 1) throw ConfigError("network dimensions must be positive");
  if (transform != OutputTransform::identity) {
    if (output_scale.size() != dims.back())
      throw ConfigError("output scale length must match the output dimension");
    for (Eigen::Index i = 0; i < output_scale.size(); ++i)
      if (!(output_scale(i) >= 0.0)) throw ConfigError("output scale entries must be >= 0");
  }

  Mlp mlp;
  mlp.activation = activation;
  mlp.transform = transform;
  mlp.output_scale = std::move(output_scale);
  mlp.init_seed = seed;

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    int fan_in = dims[l], fan_out = dims[l + 1];
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer layer;
    layer.w.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = u(rng);
    layer.b = Eigen::VectorXd::Zero(fan_out);
    mlp.layers.push_back(std::move(layer));
  }
  check_shapes(mlp);
  return mlp;
}

Eigen::VectorXd forward_trace(const Mlp& mlp, const Eigen::VectorXd& x, MlpTrace& trace) {
  check_shapes(mlp);
  if (x.size() != mlp.input_dim()) throw DataError("network input has wrong length");
  trace.post.clear();
  trace.post.reserve(mlp.layers.size());
  trace.post.push_back(x);
  Eigen::VectorXd cur = x;
  for (std::size_t l = 0; l + 1 < mlp.layers.size(); ++l) {
    cur = apply_activation(mlp.activation, mlp.layers[l].w * cur + mlp.layers[l].b);
    trace.post.push_back(cur);
  }
  trace.pre_out = mlp.layers.back().w * cur + mlp.layers.back().b;
  trace.out = apply_transform(mlp, trace.pre_out);
  return trace.out;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  MlpTrace trace;
  return forward_trace(*this, x, trace);
}

MlpGrad zero_grad(const Mlp& mlp) {
  MlpGrad g;
  g.layers.reserve(mlp.layers.size());
  for (const auto& l : mlp.layers)
    g.layers.push_back({Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()),
                        Eigen::VectorXd::Zero(l.b.size())});
  return g;
}

void MlpGrad::add_scaled(const MlpGrad& other, double factor) {
  if (other.layers.size() != layers.size()) throw ConfigError("gradient shape mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].w += factor * other.layers[l].w;
    layers[l].b += factor * other.layers[l].b;
  }
}

void MlpGrad::scale(double factor) {
  for (auto& l : layers) {
    l.w *= factor;
    l.b *= factor;
  }
}

double MlpGrad::max_abs() const {
  double m = 0.0;
  for (const auto& l : layers) {
    m = std::max(m, l.w.cwiseAbs().maxCoeff());
    if (l.b.size() > 0) m = std::max(m, l.b.cwiseAbs().maxCoeff());
  }
  return m;
}

Eigen::VectorXd backward(const Mlp& mlp, const MlpTrace& trace, const Eigen::VectorXd& out_grad,
                         MlpGrad& grad) {
  if (grad.layers.size() != mlp.layers.size()) throw ConfigError("gradient shape mismatch");
  if (out_grad.size() != mlp.output_dim()) throw DataError("output gradient has wrong length");

  Eigen::VectorXd d = out_grad.cwiseProduct(transform_slope(mlp, trace.pre_out));
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    grad.layers[li].w.noalias() += d * trace.post[li].transpose();
    grad.layers[li].b += d;
    Eigen::VectorXd dpost = mlp.layers[li].w.transpose() * d;
    if (li == 0) return dpost;
    if (mlp.activation == Activation::tanh_fn) {
      // tanh' = 1 - tanh^2, recovered from the stored activation.
      d = dpost.cwiseProduct(
          (Eigen::VectorXd::Ones(trace.post[li].size()) - trace.post[li].cwiseAbs2()));
    } else {
      d = std::move(dpost);
    }
  }
  throw ConfigError("network has no layers");
}

void sgd_step(Mlp& mlp, const MlpGrad& grad, double step) {
  if (grad.layers.size() != mlp.layers.size()) throw ConfigError("gradient shape mismatch");
  if (!std::isfinite(step)) throw TrainingError("non-finite step size");
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    mlp.layers[l].w -= step * grad.layers[l].w;
    mlp.layers[l].b -= step * grad.layers[l].b;
    if (!mlp.layers[l].w.allFinite() || !mlp.layers[l].b.allFinite())
      throw TrainingError("parameters became non-finite during update");
  }
}

double grad_check(const Mlp& mlp, const Eigen::VectorXd& x,
                  const std::function<double(const Eigen::VectorXd&)>& loss,
                  const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad,
                  double fd_eps) {
  MlpTrace trace;
  forward_trace(mlp, x, trace);
  MlpGrad analytic = zero_grad(mlp);
  backward(mlp, trace, loss_grad(trace.out), analytic);

  Mlp probe = mlp;
  double worst = 0.0;
  auto probe_param = [&](double& param, double analytic_g) {
    double saved = param;
    param = saved + fd_eps;
    double up = loss(probe.forward(x));
    param = saved - fd_eps;
    double down = loss(probe.forward(x));
    param = saved;
    double fd = (up - down) / (2.0 * fd_eps);
    double rel = std::abs(analytic_g - fd) / (std::abs(analytic_g) + std::abs(fd) + 1e-12);
    worst = std::max(worst, rel);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto& w = probe.layers[l].w;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) probe_param(w(r, c), analytic.layers[l].w(r, c));
    auto& b = probe.layers[l].b;
    for (Eigen::Index i = 0; i < b.size(); ++i) probe_param(b(i), analytic.layers[l].b(i));
  }
  return worst;
}

const char* activation_tag(Activation a) {
  return a == Activation::tanh_fn ? "tanh" : "identity";
}

Activation parse_activation(const std::string& tag) {
  if (tag == "tanh") return Activation::tanh_fn;
  if (tag == "identity") return Activation::identity;
  throw DataError("unknown activation tag '" + tag + "'");
}

const char* transform_tag(OutputTransform t) {
  switch (t) {
    case OutputTransform::scaled_sigmoid: return "scaled_sigmoid";
    case OutputTransform::clamp: return "clamp";
    case OutputTransform::identity: return "identity";
  }
  throw ConfigError("unknown output transform");
}

OutputTransform parse_transform(const std::string& tag) {
  if (tag == "scaled_sigmoid") return OutputTransform::scaled_sigmoid;
  if (tag == "clamp") return OutputTransform::clamp;
  if (tag == "identity") return OutputTransform::identity;
  throw DataError("unknown output transform tag '" + tag + "'");
}

namespace {

void expect_token(std::istream& is, const char* want) {
  std::string got;
  if (!(is >> got) || got != want)
    throw DataError(std::string("model file: expected '") + want + "', got '" + got + "'");
}

double read_double(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw DataError("model file: truncated numeric field");
  try {
    std::size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("model file: bad numeric field '" + tok + "'");
  }
}

}  // namespace

void save_mlp(const Mlp& mlp, const FeatureScaler& scaler, std::ostream& os) {
  check_shapes(mlp);
  os << "hiertrade-mlp 1\n";
  os << "dims";
  os << ' ' << mlp.layers.front().w.cols();
  for (const auto& l : mlp.layers) os << ' ' << l.w.rows();
  os << '\n';
  os << "activation " << activation_tag(mlp.activation) << '\n';
  os << "transform " << transform_tag(mlp.transform) << '\n';
  os << "seed " << mlp.init_seed << '\n';
  os << "scale " << mlp.output_scale.size();
  for (Eigen::Index i = 0; i < mlp.output_scale.size(); ++i)
    os << ' ' << fmt_double(mlp.output_scale(i));
  os << '\n';
  os << "scaler " << scaler.mean.size() << '\n';
  if (scaler.mean.size() > 0) {
    os << "mean";
    for (Eigen::Index i = 0; i < scaler.mean.size(); ++i) os << ' ' << fmt_double(scaler.mean(i));
    os << "\nstd";
    for (Eigen::Index i = 0; i < scaler.stddev.size(); ++i)
      os << ' ' << fmt_double(scaler.stddev(i));
    os << '\n';
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    os << "layer " << l << ' ' << layer.w.rows() << ' ' << layer.w.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) {
        if (c) os << ' ';
        os << fmt_double(layer.w(r, c));
      }
      os << '\n';
    }
    os << "bias";
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) os << ' ' << fmt_double(layer.b(i));
    os << '\n';
  }
}

void save_mlp_file(const Mlp& mlp, const FeatureScaler& scaler, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open model file for writing: " + path);
  save_mlp(mlp, scaler, os);
  if (!os) throw DataError("failed writing model file: " + path);
}

std::pair<Mlp, FeatureScaler> load_mlp(std::istream& is) {
  expect_token(is, "hiertrade-mlp");
  int version = 0;
  if (!(is >> version) || version != 1) throw DataError("unsupported model file version");

  expect_token(is, "dims");
  std::string line;
  std::getline(is, line);
  std::istringstream dims_in(line);
  std::vector<int> dims;
  for (int d; dims_in >> d;) dims.push_back(d);
  if (dims.size() < 2) throw DataError("model file: needs at least two dimensions");

  Mlp mlp;
  expect_token(is, "activation");
  std::string tag;
  is >> tag;
  mlp.activation = parse_activation(tag);
  expect_token(is, "transform");
  is >> tag;
  mlp.transform = parse_transform(tag);
  expect_token(is, "seed");
  if (!(is >> mlp.init_seed)) throw DataError("model file: bad seed");

  expect_token(is, "scale");
  Eigen::Index scale_n = 0;
  if (!(is >> scale_n) || scale_n < 0) throw DataError("model file: bad scale length");
  mlp.output_scale.resize(scale_n);
  for (Eigen::Index i = 0; i < scale_n; ++i) mlp.output_scale(i) = read_double(is);

  FeatureScaler scaler;
  expect_token(is, "scaler");
  Eigen::Index scaler_n = 0;
  if (!(is >> scaler_n) || scaler_n < 0) throw DataError("model file: bad scaler length");
  if (scaler_n > 0) {
    scaler.mean.resize(scaler_n);
    scaler.stddev.resize(scaler_n);
    expect_token(is, "mean");
    for (Eigen::Index i = 0; i < scaler_n; ++i) scaler.mean(i) = read_double(is);
    expect_token(is, "std");
    for (Eigen::Index i = 0; i < scaler_n; ++i) scaler.stddev(i) = read_double(is);
  }

  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    expect_token(is, "layer");
    std::size_t idx = 0;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> idx >> rows >> cols) || idx != l || rows != dims[l + 1] || cols != dims[l])
      throw DataError("model file: layer header mismatch");
    Layer layer;
    layer.w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.w(r, c) = read_double(is);
    expect_token(is, "bias");
    layer.b.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) layer.b(i) = read_double(is);
    mlp.layers.push_back(std::move(layer));
  }
  check_shapes(mlp);
  return {std::move(mlp), std::move(scaler)};
}

std::pair<Mlp, FeatureScaler> load_mlp_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open model file: " + path);
  return load_mlp(is);
}

}  // namespace hiertrade
