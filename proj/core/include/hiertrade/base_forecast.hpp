#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hiertrade {

// Pinball (check) loss at quantile level alpha in (0, 1):
//   alpha * [actual - predicted]^+ + (1 - alpha) * [predicted - actual]^+.
// Its expectation over the predictive distribution is minimized by the
// alpha-quantile, which is what makes it the right fitting objective for
// offer curves under asymmetric imbalance penalties.
double pinball_loss(double predicted, double actual, double level);

struct LearningSpec {
  double step = 0.05;  // initial step; decays as step / sqrt(1 + epoch)
  int epochs = 0;      // 0 picks the solver default for the objective
  LearningSpec() = default;
};

// An autoregressive point forecaster on one series: the prediction for
// delivery time t is an affine function of series[t - lag] for each lag,
// clamped into [0, capacity].
struct RegressionSpec {
  std::vector<int> lags{1, 2, 3, 24};
  double capacity = 0.0;
  LearningSpec learning;
};

void validate(const RegressionSpec& spec);

struct FittedForecaster {
  Eigen::VectorXd weights;  // one per lag, in spec order
  double intercept = 0.0;
  std::vector<int> lags;
  double capacity = 0.0;

  // Prediction from pre-gathered lagged values (same order as lags).
  double predict(const Eigen::VectorXd& lagged) const;
  // Gathers the lags from a series and predicts delivery index t.
  double predict_at(std::span<const double> series, std::size_t t) const;
  std::size_t max_lag() const;
};

// Least-squares fit of the lag regression.  With learning.epochs == 0 the
// normal equations are solved directly (rank-deficient designs fall back to
// a small ridge); otherwise full-batch gradient descent with backtracking,
// so the training MSE never increases between epochs.  `loss_trace`, when
// given, receives the per-epoch objective (iterative path only).
FittedForecaster fit_mean(std::span<const double> series, const RegressionSpec& spec,
                          std::vector<double>* loss_trace = nullptr);

// Quantile regression at the given level via full-batch subgradient descent
// with a decaying step, returning the best iterate under the empirical
// pinball loss.  Deterministic: no randomness enters the solver.  Throws
// TrainingError (with the loss trace) when the loss is non-finite or the
// final iterate sits well above the best one with no late improvement.
FittedForecaster fit_quantile(std::span<const double> series, const RegressionSpec& spec,
                              double level, std::vector<double>* loss_trace = nullptr);

// Mean squared one-step error of a fitted forecaster over a series range
// [begin, end); indices must leave room for the deepest lag.
double forecaster_mse(const FittedForecaster& f, std::span<const double> series,
                      std::size_t begin, std::size_t end);

}  // namespace hiertrade
