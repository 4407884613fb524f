#pragma once

#include <Eigen/Dense>

#include "hiertrade/market.hpp"

namespace hiertrade {

// A cross-sectional aggregation structure over m bottom-level series.  The
// full vector stacks aggregate rows first, then the bottom rows, so with
// structural matrix S any coherent vector is y = S * b for some bottom
// vector b.  The coherence operator B = [I | -A] (A the aggregate rows of S)
// annihilates exactly the coherent vectors: B * S = 0.
class Hierarchy {
public:
  // One aggregate summing all leaves; n = m + 1.  The common case for a
  // portfolio of producers trading as a single market participant.
  static Hierarchy total_of(int leaf_count);

  // General construction from the {0,1} aggregate rows (shape (n-m) x m).
  // Each row must select at least one leaf.
  static Hierarchy from_aggregation_rows(const Eigen::MatrixXi& agg_rows);

  int leaves() const { return m_; }
  int series() const { return n_; }
  int aggregates() const { return n_ - m_; }

  const Eigen::MatrixXd& structural() const { return s_; }
  const Eigen::MatrixXd& coherence_operator() const { return b_; }

  // Lifts a bottom vector to the full coherent vector S * b.
  Eigen::VectorXd aggregate(const Eigen::VectorXd& bottom) const;

  // B * y, the signed aggregation residuals; zero exactly on coherent vectors.
  Eigen::VectorXd coherence_residual(const Eigen::VectorXd& full) const;

  // max_i |(B*y)_i| <= tol * (1 + |y_agg_i|), scale-aware like the data
  // ingestion check.
  bool is_coherent(const Eigen::VectorXd& full, double tol = 1e-6) const;

  // Views into a full vector laid out [aggregates..., leaves...].
  Eigen::VectorXd leaves_of(const Eigen::VectorXd& full) const;
  Eigen::VectorXd aggregates_of(const Eigen::VectorXd& full) const;

private:
  Hierarchy(int m, Eigen::MatrixXi agg_rows);

  int m_ = 0;
  int n_ = 0;
  Eigen::MatrixXi agg_rows_;
  Eigen::MatrixXd s_;
  Eigen::MatrixXd b_;
};

// One delivery hour prepared for reconciliation and evaluation: the base
// forecasts for every series, the contextual features, the realized
// generation, and the market outcome for that hour.  Vectors follow the
// hierarchy layout [aggregates..., leaves...].
struct ForecastRecord {
  std::int64_t time = 0;
  Eigen::VectorXd base;     // length n, each entry already in [0, capacity]
  Eigen::VectorXd context;  // contextual features, may be empty
  Eigen::VectorXd actual;   // length n, coherent by construction
  MarketHour hour;
  Penalties penalties;
  bool degenerate_hour = false;
};

}  // namespace hiertrade
