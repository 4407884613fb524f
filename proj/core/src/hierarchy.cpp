#include "hiertrade/hierarchy.hpp"

#include <cmath>

#include "hiertrade/errors.hpp"

namespace hiertrade {

Hierarchy Hierarchy::total_of(int leaf_count) {
  if (leaf_count < 1) throw ConfigError("hierarchy needs at least one leaf");
  Eigen::MatrixXi rows = Eigen::MatrixXi::Ones(1, leaf_count);
  return Hierarchy(leaf_count, std::move(rows));
}

Hierarchy Hierarchy::from_aggregation_rows(const Eigen::MatrixXi& agg_rows) {
  if (agg_rows.rows() < 1 || agg_rows.cols() < 1)
    throw ConfigError("aggregation rows must be non-empty");
  return Hierarchy(static_cast<int>(agg_rows.cols()), agg_rows);
}

Hierarchy::Hierarchy(int m, Eigen::MatrixXi agg_rows)
    : m_(m), n_(m + static_cast<int>(agg_rows.rows())), agg_rows_(std::move(agg_rows)) {
  const int k = n_ - m_;
  for (int i = 0; i < k; ++i) {
    int row_sum = 0;
    for (int j = 0; j < m_; ++j) {
      int v = agg_rows_(i, j);
      if (v != 0 && v != 1) throw ConfigError("aggregation rows must be 0/1");
      row_sum += v;
    }
    if (row_sum == 0) throw ConfigError("aggregation row selects no leaves");
  }

  s_.setZero(n_, m_);
  s_.topRows(k) = agg_rows_.cast<double>();
  s_.bottomRows(m_) = Eigen::MatrixXd::Identity(m_, m_);

  b_.setZero(k, n_);
  b_.leftCols(k) = Eigen::MatrixXd::Identity(k, k);
  b_.rightCols(m_) = -agg_rows_.cast<double>();

  // Integer check that B annihilates S; exact, no tolerance involved.
  Eigen::MatrixXi bs = (b_ * s_).cast<int>();
  if (!bs.isZero(0)) throw CoherenceError("coherence operator does not annihilate the structure");
}

Eigen::VectorXd Hierarchy::aggregate(const Eigen::VectorXd& bottom) const {
  if (bottom.size() != m_) throw DataError("bottom vector has wrong length");
  return s_ * bottom;
}

Eigen::VectorXd Hierarchy::coherence_residual(const Eigen::VectorXd& full) const {
  if (full.size() != n_) throw DataError("full vector has wrong length");
  return b_ * full;
}

bool Hierarchy::is_coherent(const Eigen::VectorXd& full, double tol) const {
  Eigen::VectorXd r = coherence_residual(full);
  for (int i = 0; i < r.size(); ++i) {
    if (!std::isfinite(r(i))) return false;
    if (std::abs(r(i)) > tol * (1.0 + std::abs(full(i)))) return false;
  }
  return true;
}

Eigen::VectorXd Hierarchy::leaves_of(const Eigen::VectorXd& full) const {
  if (full.size() != n_) throw DataError("full vector has wrong length");
  return full.tail(m_);
}

Eigen::VectorXd Hierarchy::aggregates_of(const Eigen::VectorXd& full) const {
  if (full.size() != n_) throw DataError("full vector has wrong length");
  return full.head(n_ - m_);
}

}  // namespace hiertrade
