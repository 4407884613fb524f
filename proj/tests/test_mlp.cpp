#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "hiertrade/errors.hpp"
#include "hiertrade/mlp.hpp"

using namespace hiertrade;

namespace {

Mlp tiny_identity_net() {
  Mlp mlp;
  Layer l;
  l.w.resize(1, 1);
  l.w << 2.0;
  l.b.resize(1);
  l.b << 3.0;
  mlp.layers.push_back(l);
  mlp.activation = Activation::identity;
  mlp.transform = OutputTransform::identity;
  return mlp;
}

}  // namespace

TEST_CASE("single affine layer forwards exactly") {
  Mlp mlp = tiny_identity_net();
  Eigen::VectorXd x(1);
  x << 4.0;
  CHECK(mlp.forward(x)(0) == doctest::Approx(11.0));
}

TEST_CASE("output transforms map into the feasible range") {
  Mlp mlp = tiny_identity_net();
  mlp.output_scale.resize(1);
  Eigen::VectorXd x(1);

  mlp.transform = OutputTransform::scaled_sigmoid;
  mlp.output_scale << 10.0;
  x << -1.5;  // pre-activation = 0
  CHECK(mlp.forward(x)(0) == doctest::Approx(5.0));
  x << 100.0;
  CHECK(mlp.forward(x)(0) <= 10.0);
  x << -100.0;
  CHECK(mlp.forward(x)(0) >= 0.0);

  mlp.transform = OutputTransform::clamp;
  x << 4.0;  // pre = 11
  CHECK(mlp.forward(x)(0) == 10.0);
  mlp.output_scale << 12.0;
  CHECK(mlp.forward(x)(0) == 11.0);
  x << -2.0;  // pre = -1
  CHECK(mlp.forward(x)(0) == 0.0);
}

TEST_CASE("glorot init is seeded and bounded") {
  Eigen::VectorXd scale = Eigen::VectorXd::Constant(2, 5.0);
  Mlp a = make_mlp({3, 8, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 42);
  Mlp b = make_mlp({3, 8, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 42);
  Mlp c = make_mlp({3, 8, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 43);

  CHECK(a.layers[0].w == b.layers[0].w);
  CHECK(a.layers[1].w == b.layers[1].w);
  CHECK(a.layers[0].w != c.layers[0].w);
  CHECK(a.layers[0].b.isZero(0.0));

  double bound0 = std::sqrt(6.0 / (3 + 8));
  CHECK(a.layers[0].w.cwiseAbs().maxCoeff() <= bound0);
  double bound1 = std::sqrt(6.0 / (8 + 2));
  CHECK(a.layers[1].w.cwiseAbs().maxCoeff() <= bound1);

  CHECK(a.parameter_count() == 3 * 8 + 8 + 8 * 2 + 2);
}

TEST_CASE("analytic gradients match finite differences across configurations") {
  Eigen::VectorXd target(2);
  target << 1.0, 3.0;
  auto loss = [&](const Eigen::VectorXd& out) { return 0.5 * (out - target).squaredNorm(); };
  auto loss_grad = [&](const Eigen::VectorXd& out) -> Eigen::VectorXd { return out - target; };

  Eigen::VectorXd scale(2);
  scale << 4.0, 6.0;
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 0.7;

  SUBCASE("tanh hidden, scaled sigmoid output") {
    Mlp mlp = make_mlp({3, 8, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 1);
    CHECK(grad_check(mlp, x, loss, loss_grad) < 1e-6);
  }
  SUBCASE("two hidden layers") {
    Mlp mlp = make_mlp({3, 6, 5, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 2);
    CHECK(grad_check(mlp, x, loss, loss_grad) < 1e-6);
  }
  SUBCASE("identity transform") {
    Mlp mlp = make_mlp({3, 8, 2}, Activation::tanh_fn, OutputTransform::identity, {}, 3);
    CHECK(grad_check(mlp, x, loss, loss_grad) < 1e-6);
  }
  SUBCASE("linear net with clamp away from kinks") {
    Mlp mlp = make_mlp({3, 2}, Activation::identity, OutputTransform::clamp, scale, 4);
    // Bias the pre-activations into the interior so the finite difference
    // probe does not straddle a kink.
    mlp.layers[0].b << 2.0, 3.0;
    CHECK(grad_check(mlp, x, loss, loss_grad) < 1e-6);
  }
}

TEST_CASE("backward returns the input gradient") {
  Mlp mlp = make_mlp({2, 4, 1}, Activation::tanh_fn, OutputTransform::identity, {}, 9);
  Eigen::VectorXd x(2);
  x << 0.5, -0.25;
  MlpTrace trace;
  forward_trace(mlp, x, trace);
  MlpGrad g = zero_grad(mlp);
  Eigen::VectorXd out_grad = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd dx = backward(mlp, trace, out_grad, g);

  double eps = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    double fd = (mlp.forward(xp)(0) - mlp.forward(xm)(0)) / (2 * eps);
    CHECK(dx(i) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("sgd_step applies the update and rejects non-finite results") {
  Mlp mlp = tiny_identity_net();
  MlpGrad g = zero_grad(mlp);
  g.layers[0].w(0, 0) = 1.0;
  g.layers[0].b(0) = -2.0;
  sgd_step(mlp, g, 0.1);
  CHECK(mlp.layers[0].w(0, 0) == doctest::Approx(1.9));
  CHECK(mlp.layers[0].b(0) == doctest::Approx(3.2));

  g.layers[0].w(0, 0) = 1.0 / 0.0;
  CHECK_THROWS_AS(sgd_step(mlp, g, 0.1), TrainingError);
}

TEST_CASE("gradient accumulation helpers") {
  Mlp mlp = make_mlp({2, 3}, Activation::identity, OutputTransform::identity, {}, 5);
  MlpGrad a = zero_grad(mlp);
  MlpGrad b = zero_grad(mlp);
  a.layers[0].w(0, 0) = 2.0;
  b.layers[0].w(0, 0) = 3.0;
  b.layers[0].b(1) = -4.0;
  a.add_scaled(b, 0.5);
  CHECK(a.layers[0].w(0, 0) == doctest::Approx(3.5));
  CHECK(a.layers[0].b(1) == doctest::Approx(-2.0));
  a.scale(2.0);
  CHECK(a.layers[0].w(0, 0) == doctest::Approx(7.0));
  CHECK(a.max_abs() == doctest::Approx(7.0));
}

TEST_CASE("feature scaler standardizes and guards constant columns") {
  std::vector<Eigen::VectorXd> rows;
  for (int i = 0; i < 4; ++i) {
    Eigen::VectorXd r(2);
    r << static_cast<double>(i), 7.0;
    rows.push_back(r);
  }
  FeatureScaler s = fit_scaler(rows);
  CHECK(s.mean(0) == doctest::Approx(1.5));
  CHECK(s.mean(1) == doctest::Approx(7.0));
  CHECK(s.stddev(1) == 1.0);

  Eigen::VectorXd x(2);
  x << 1.5, 7.0;
  Eigen::VectorXd z = s.transform(x);
  CHECK(z(0) == doctest::Approx(0.0));
  CHECK(z(1) == doctest::Approx(0.0));

  double mean0 = 0.0, var0 = 0.0;
  for (const auto& r : rows) mean0 += s.transform(r)(0);
  mean0 /= 4;
  for (const auto& r : rows) var0 += std::pow(s.transform(r)(0) - mean0, 2);
  var0 /= 4;
  CHECK(mean0 == doctest::Approx(0.0));
  CHECK(var0 == doctest::Approx(1.0));
}

TEST_CASE("model files round-trip bit for bit") {
  Eigen::VectorXd scale(2);
  scale << 1.7496, 2.9646;
  Mlp mlp = make_mlp({5, 32, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, scale, 42);
  std::vector<Eigen::VectorXd> rows;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd r(5);
    for (int j = 0; j < 5; ++j)
      r(j) = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    rows.push_back(r);
  }
  FeatureScaler scaler = fit_scaler(rows);

  std::stringstream ss;
  save_mlp(mlp, scaler, ss);
  auto [back, scaler_back] = load_mlp(ss);

  REQUIRE(back.layers.size() == mlp.layers.size());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    CHECK(back.layers[l].w == mlp.layers[l].w);
    CHECK(back.layers[l].b == mlp.layers[l].b);
  }
  CHECK(back.activation == mlp.activation);
  CHECK(back.transform == mlp.transform);
  CHECK(back.output_scale == mlp.output_scale);
  CHECK(back.init_seed == mlp.init_seed);
  CHECK(scaler_back.mean == scaler.mean);
  CHECK(scaler_back.stddev == scaler.stddev);

  Eigen::VectorXd x = rows[0];
  CHECK(back.forward(scaler_back.transform(x)) == mlp.forward(scaler.transform(x)));
}

TEST_CASE("model loader rejects corrupted files") {
  std::stringstream good;
  save_mlp(make_mlp({2, 2}, Activation::identity, OutputTransform::identity, {}, 1),
           FeatureScaler{}, good);
  std::string text = good.str();

  std::stringstream bad1("not-a-model 1\n");
  CHECK_THROWS_AS(load_mlp(bad1), DataError);

  std::stringstream bad2(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_mlp(bad2), DataError);
}

TEST_CASE("make_mlp validates its arguments") {
  CHECK_THROWS_AS(make_mlp({3}, Activation::tanh_fn, OutputTransform::identity, {}, 1),
                  ConfigError);
  CHECK_THROWS_AS(make_mlp({3, 0, 2}, Activation::tanh_fn, OutputTransform::identity, {}, 1),
                  ConfigError);
  Eigen::VectorXd short_scale(1);
  short_scale << 1.0;
  CHECK_THROWS_AS(
      make_mlp({3, 2}, Activation::tanh_fn, OutputTransform::scaled_sigmoid, short_scale, 1),
      ConfigError);
}
