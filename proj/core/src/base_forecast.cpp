#include "hiertrade/base_forecast.hpp"

#include <algorithm>
#include <cmath>

#include "hiertrade/errors.hpp"
#include "hiertrade/market.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

double pinball_loss(double predicted, double actual, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  return level * pos(actual - predicted) + (1.0 - level) * pos(predicted - actual);
}

void validate(const RegressionSpec& spec) {
  if (spec.lags.empty()) throw ConfigError("regression needs at least one lag");
  for (int lag : spec.lags)
    if (lag < 1) throw ConfigError("lags must be >= 1");
  if (!(spec.capacity > 0.0)) throw ConfigError("capacity must be positive");
  if (!(spec.learning.step > 0.0)) throw ConfigError("learning step must be positive");
  if (spec.learning.epochs < 0) throw ConfigError("epochs must be >= 0");
}

std::size_t FittedForecaster::max_lag() const {
  return static_cast<std::size_t>(*std::max_element(lags.begin(), lags.end()));
}

double FittedForecaster::predict(const Eigen::VectorXd& lagged) const {
  if (lagged.size() != weights.size()) throw DataError("lagged feature length mismatch");
  return clamp_offer(weights.dot(lagged) + intercept, capacity);
}

double FittedForecaster::predict_at(std::span<const double> series, std::size_t t) const {
  if (t < max_lag() || t >= series.size()) throw DataError("prediction index out of range");
  Eigen::VectorXd lagged(static_cast<Eigen::Index>(lags.size()));
  for (std::size_t j = 0; j < lags.size(); ++j)
    lagged(static_cast<Eigen::Index>(j)) = series[t - static_cast<std::size_t>(lags[j])];
  return predict(lagged);
}

namespace {

struct Design {
  Eigen::MatrixXd x;  // rows: usable delivery times, cols: lags
  Eigen::VectorXd y;
};

Design build_design(std::span<const double> series, const RegressionSpec& spec) {
  std::size_t max_lag =
      static_cast<std::size_t>(*std::max_element(spec.lags.begin(), spec.lags.end()));
  if (series.size() <= max_lag + 1)
    throw DataError("series too short for the requested lags");
  for (double v : series)
    if (!std::isfinite(v)) throw DataError("non-finite value in training series");

  const std::size_t rows = series.size() - max_lag;
  Design d;
  d.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(spec.lags.size()));
  d.y.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t t = max_lag + r;
    d.y(static_cast<Eigen::Index>(r)) = series[t];
    for (std::size_t j = 0; j < spec.lags.size(); ++j)
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          series[t - static_cast<std::size_t>(spec.lags[j])];
  }
  return d;
}

FittedForecaster make_result(const RegressionSpec& spec, const Eigen::VectorXd& beta) {
  FittedForecaster f;
  f.weights = beta.head(beta.size() - 1);
  f.intercept = beta(beta.size() - 1);
  f.lags = spec.lags;
  f.capacity = spec.capacity;
  return f;
}

// Standardizes the design columns for the iterative solvers, returning the
// transform needed to map coefficients back to the raw scale.
struct ColumnScaling {
  Eigen::VectorXd mean, stddev;
};

ColumnScaling fit_columns(const Eigen::MatrixXd& x) {
  ColumnScaling s;
  s.mean = x.colwise().mean();
  s.stddev.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double var = (x.col(c).array() - s.mean(c)).square().mean();
    s.stddev(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::VectorXd unscale_beta(const ColumnScaling& s, const Eigen::VectorXd& beta_scaled) {
  Eigen::Index k = beta_scaled.size() - 1;
  Eigen::VectorXd beta(k + 1);
  for (Eigen::Index j = 0; j < k; ++j) beta(j) = beta_scaled(j) / s.stddev(j);
  beta(k) = beta_scaled(k);
  for (Eigen::Index j = 0; j < k; ++j) beta(k) -= beta_scaled(j) * s.mean(j) / s.stddev(j);
  return beta;
}

}  // namespace

FittedForecaster fit_mean(std::span<const double> series, const RegressionSpec& spec,
                          std::vector<double>* loss_trace) {
  validate(spec);
  Design d = build_design(series, spec);
  const Eigen::Index rows = d.x.rows(), k = d.x.cols();

  if (spec.learning.epochs == 0) {
    Eigen::MatrixXd a(rows, k + 1);
    a.leftCols(k) = d.x;
    a.col(k).setOnes();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::VectorXd beta;
    if (qr.rank() == k + 1) {
      beta = qr.solve(d.y);
    } else {
      // Collinear lags (constant series, duplicated columns): damp lightly
      // instead of failing, keeping the fit deterministic.
      Eigen::MatrixXd gram = a.transpose() * a;
      double damping = 1e-6 * gram.trace() / static_cast<double>(k + 1);
      gram.diagonal().array() += std::max(damping, 1e-12);
      beta = gram.ldlt().solve(a.transpose() * d.y);
    }
    return make_result(spec, beta);
  }

  ColumnScaling scaling = fit_columns(d.x);
  Eigen::MatrixXd xs = d.x;
  for (Eigen::Index c = 0; c < k; ++c)
    xs.col(c) = (xs.col(c).array() - scaling.mean(c)) / scaling.stddev(c);

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  auto mse = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd resid = xs * b.head(k) + Eigen::VectorXd::Constant(rows, b(k)) - d.y;
    return resid.squaredNorm() / static_cast<double>(rows);
  };
  std::vector<double> trace;
  double loss = mse(beta);
  trace.push_back(loss);
  double step = spec.learning.step;
  for (int epoch = 0; epoch < spec.learning.epochs; ++epoch) {
    Eigen::VectorXd resid = xs * beta.head(k) + Eigen::VectorXd::Constant(rows, beta(k)) - d.y;
    Eigen::VectorXd g(k + 1);
    g.head(k) = 2.0 * (xs.transpose() * resid) / static_cast<double>(rows);
    g(k) = 2.0 * resid.mean();
    // Backtrack until the epoch does not increase the loss.
    double trial_step = step;
    Eigen::VectorXd candidate;
    double candidate_loss;
    for (;;) {
      candidate = beta - trial_step * g;
      candidate_loss = mse(candidate);
      if (std::isfinite(candidate_loss) && candidate_loss <= loss) break;
      trial_step *= 0.5;
      if (trial_step < 1e-18) {
        candidate = beta;
        candidate_loss = loss;
        break;
      }
    }
    beta = candidate;
    loss = candidate_loss;
    step = trial_step;
    trace.push_back(loss);
    if (!std::isfinite(loss)) throw TrainingError("mean regression diverged", trace);
  }
  if (loss_trace) *loss_trace = trace;
  return make_result(spec, unscale_beta(scaling, beta));
}

FittedForecaster fit_quantile(std::span<const double> series, const RegressionSpec& spec,
                              double level, std::vector<double>* loss_trace) {
  validate(spec);
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
  Design d = build_design(series, spec);
  const Eigen::Index rows = d.x.rows(), k = d.x.cols();
  const int epochs = spec.learning.epochs > 0 ? spec.learning.epochs : 500;

  ColumnScaling scaling = fit_columns(d.x);
  Eigen::MatrixXd xs = d.x;
  for (Eigen::Index c = 0; c < k; ++c)
    xs.col(c) = (xs.col(c).array() - scaling.mean(c)) / scaling.stddev(c);

  auto objective = [&](const Eigen::VectorXd& b) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      double pred = xs.row(r).dot(b.head(k)) + b(k);
      total += pinball_loss(pred, d.y(r), level);
    }
    return total / static_cast<double>(rows);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  Eigen::VectorXd best = beta;
  double best_loss = objective(beta);
  int best_epoch = 0;
  std::vector<double> trace{best_loss};

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(k + 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      double pred = xs.row(r).dot(beta.head(k)) + beta(k);
      double slope = pred > d.y(r) ? (1.0 - level) : (pred < d.y(r) ? -level : 0.0);
      if (slope != 0.0) {
        g.head(k) += slope * xs.row(r).transpose();
        g(k) += slope;
      }
    }
    g /= static_cast<double>(rows);
    beta -= (spec.learning.step / std::sqrt(1.0 + epoch)) * g;

    double loss = objective(beta);
    trace.push_back(loss);
    if (!std::isfinite(loss)) throw TrainingError("quantile regression diverged", trace);
    if (loss < best_loss) {
      best_loss = loss;
      best = beta;
      best_epoch = epoch + 1;
    }
  }

  // Flag runs that end far above their best iterate without any late
  // progress; a converged plateau passes because final ~ best.
  double final_loss = trace.back();
  bool stale = best_epoch < epochs - std::max(1, epochs / 5);
  if (stale && final_loss > best_loss * 1.01)
    throw TrainingError("quantile regression failed to settle", trace);

  if (loss_trace) *loss_trace = trace;
  return make_result(spec, unscale_beta(scaling, best));
}

double forecaster_mse(const FittedForecaster& f, std::span<const double> series,
                      std::size_t begin, std::size_t end) {
  if (begin < f.max_lag() || end > series.size() || begin >= end)
    throw DataError("evaluation range out of bounds");
  double total = 0.0;
  for (std::size_t t = begin; t < end; ++t) {
    double e = f.predict_at(series, t) - series[t];
    total += e * e;
  }
  return total / static_cast<double>(end - begin);
}

}  // namespace hiertrade
