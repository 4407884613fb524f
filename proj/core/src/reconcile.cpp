#include "hiertrade/reconcile.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <string_view>

#include "hiertrade/errors.hpp"
#include "hiertrade/market.hpp"
#include "hiertrade/util.hpp"

namespace hiertrade {

const char* strategy_tag(Strategy s) {
  switch (s) {
    case Strategy::independent: return "independent";
    case Strategy::bottom_up: return "bottom_up";
    case Strategy::quality_learned: return "quality_learned";
    case Strategy::quality_linear: return "quality_linear";
    case Strategy::value_learned: return "value_learned";
    case Strategy::value_linear: return "value_linear";
  }
  throw ConfigError("unknown strategy");
}

Strategy parse_strategy(const std::string& tag) {
  for (Strategy s : {Strategy::independent, Strategy::bottom_up, Strategy::quality_learned,
                     Strategy::quality_linear, Strategy::value_learned, Strategy::value_linear})
    if (tag == strategy_tag(s)) return s;
  throw ConfigError("unknown strategy '" + tag + "'");
}

bool is_value_strategy(Strategy s) {
  return s == Strategy::value_learned || s == Strategy::value_linear;
}

bool is_quality_strategy(Strategy s) {
  return s == Strategy::quality_learned || s == Strategy::quality_linear;
}

Eigen::VectorXd ReconModel::features(const ForecastRecord& rec) const {
  if (!use_context) return rec.base;
  Eigen::VectorXd x(rec.base.size() + rec.context.size());
  x << rec.base, rec.context;
  return x;
}

ReconModel bottom_up_model(const ExperimentDataset& ds) {
  ReconModel model;
  model.kind = Strategy::bottom_up;
  model.leaves = ds.hier.leaves();
  return model;
}

Eigen::VectorXd leaf_offers(const ReconModel& model, const ForecastRecord& rec) {
  if (model.kind == Strategy::independent)
    throw ConfigError("independent trading has no reconciliation map");
  if (model.kind == Strategy::bottom_up) return rec.base.tail(model.leaves);
  if (model.net.layers.empty()) throw ConfigError("model has no trained network");
  Eigen::VectorXd x = model.features(rec);
  if (model.scaler.fitted()) x = model.scaler.transform(x);
  return model.net.forward(x);
}

Eigen::VectorXd reconcile(const ReconModel& model, const Hierarchy& hier,
                          const ForecastRecord& rec) {
  if (hier.leaves() != model.leaves) throw ConfigError("model and hierarchy leaf counts differ");
  return hier.aggregate(leaf_offers(model, rec));
}

void save_model(const ReconModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open model file for writing: " + path);
  os << "hiertrade-recon 1\n";
  os << "strategy " << strategy_tag(model.kind) << '\n';
  os << "leaves " << model.leaves << '\n';
  os << "use_context " << (model.use_context ? 1 : 0) << '\n';
  if (model.kind == Strategy::bottom_up || model.kind == Strategy::independent) {
    os << "net none\n";
  } else {
    os << "net inline\n";
    save_mlp(model.net, model.scaler, os);
  }
  if (!os) throw DataError("failed writing model file: " + path);
}

ReconModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open model file: " + path);
  std::string tok;
  int version = 0;
  if (!(is >> tok >> version) || tok != "hiertrade-recon" || version != 1)
    throw DataError("not a reconciliation model file: " + path);
  ReconModel model;
  std::string tag;
  if (!(is >> tok >> tag) || tok != "strategy") throw DataError("model file: bad strategy line");
  model.kind = parse_strategy(tag);
  if (!(is >> tok >> model.leaves) || tok != "leaves" || model.leaves < 1)
    throw DataError("model file: bad leaves line");
  int uc = 0;
  if (!(is >> tok >> uc) || tok != "use_context") throw DataError("model file: bad context line");
  model.use_context = uc != 0;
  if (!(is >> tok >> tag) || tok != "net") throw DataError("model file: bad net line");
  if (tag == "inline") {
    auto [net, scaler] = load_mlp(is);
    model.net = std::move(net);
    model.scaler = std::move(scaler);
    if (model.net.output_dim() != model.leaves)
      throw DataError("model file: network output does not match leaf count");
  } else if (tag != "none") {
    throw DataError("model file: bad net tag '" + tag + "'");
  }
  return model;
}

void validate(const TrainConfig& cfg) {
  if (cfg.hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
  if (cfg.hidden_layers < 1) throw ConfigError("hidden_layers must be >= 1");
  if (!(cfg.step > 0.0)) throw ConfigError("step must be positive");
  if (cfg.dual_step < 0.0) throw ConfigError("dual_step must be >= 0");
  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  if (!(cfg.weight >= 0.0 && cfg.weight <= 1.0)) throw ConfigError("weight must lie in [0, 1]");
  if (cfg.epsilon_log < 0.0) throw ConfigError("epsilon_log must be >= 0");
  if (!(cfg.epsilon_log_scale > 0.0)) throw ConfigError("epsilon_log_scale must be positive");
  if (!(cfg.constraint_tol_scale >= 0.0))
    throw ConfigError("constraint_tol_scale must be >= 0");
  if (cfg.eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

Eigen::VectorXd independent_leaf_costs(const ForecastRecord& rec) {
  const Eigen::Index m = rec.base.size() - 1;
  Eigen::VectorXd costs(m);
  for (Eigen::Index i = 0; i < m; ++i)
    costs(i) = imbalance_cost(rec.base(1 + i), rec.actual(1 + i), rec.penalties);
  return costs;
}

namespace {

// d/d(offer) of the imbalance cost; the kink at offer == actual takes 0.
double cost_slope(double offer, double actual, const Penalties& p) {
  if (offer > actual) return p.shortfall;
  if (offer < actual) return -p.surplus;
  return 0.0;
}

// One forward evaluation of a value-training batch: offers, settlement
// pieces, shares, and the batch Lagrangian.  Everything the backward pass
// needs is kept.
struct BatchEval {
  std::vector<MlpTrace> traces;
  Eigen::MatrixXd offers;        // B x m
  Eigen::MatrixXd pseudo;        // B x m
  Eigen::MatrixXd pseudo_slope;  // B x m
  Eigen::MatrixXd gamma;         // B x m
  Eigen::VectorXd gamma_denom;   // B; pseudo-cost share denominator (0 = fallback)
  Eigen::VectorXd agg_cost;      // B
  Eigen::VectorXd agg_slope;     // B
  Eigen::VectorXd mean_ex;       // m
  double objective = 0.0;
  double lagrangian = 0.0;
};

BatchEval eval_value_batch(const ReconModel& model,
                           std::span<const ForecastRecord* const> batch,
                           const Eigen::VectorXd& mu, const AllocationPolicy& policy,
                           double eps) {
  validate(policy);
  if (batch.empty()) throw TrainingError("empty batch");
  if (!(eps > 0.0)) throw ConfigError("log floor must be positive");
  const int m = model.leaves;
  if (mu.size() != m) throw ConfigError("dual vector length must match the leaf count");
  const std::size_t B = batch.size();
  const double w = policy.weight;

  BatchEval ev;
  ev.traces.resize(B);
  ev.offers.resize(B, m);
  ev.pseudo.resize(B, m);
  ev.pseudo_slope.resize(B, m);
  ev.gamma.resize(B, m);
  ev.gamma_denom.setZero(B);
  ev.agg_cost.resize(B);
  ev.agg_slope.resize(B);
  ev.mean_ex.setZero(m);

  for (std::size_t r = 0; r < B; ++r) {
    const ForecastRecord& rec = *batch[r];
    if (rec.degenerate_hour)
      throw TrainingError("degenerate hour in a value-training batch");
    Eigen::VectorXd x = model.features(rec);
    if (model.scaler.fitted()) x = model.scaler.transform(x);
    Eigen::VectorXd h = forward_trace(model.net, x, ev.traces[r]);

    double offer_sum = 0.0;
    for (int i = 0; i < m; ++i) {
      double hi = h(i);
      offer_sum += hi;
      double yi = rec.actual(1 + i);
      ev.offers(r, i) = hi;
      ev.pseudo(r, i) = imbalance_cost(hi, yi, rec.penalties);
      ev.pseudo_slope(r, i) = cost_slope(hi, yi, rec.penalties);
    }
    double y_sum = rec.actual(0);
    ev.agg_cost(r) = imbalance_cost(offer_sum, y_sum, rec.penalties);
    ev.agg_slope(r) = cost_slope(offer_sum, y_sum, rec.penalties);

    if (policy.rule == ShareRule::generation_share) {
      if (y_sum > 0.0) {
        for (int i = 0; i < m; ++i) ev.gamma(r, i) = rec.actual(1 + i) / y_sum;
      } else {
        ev.gamma.row(r).setConstant(1.0 / m);
      }
    } else {
      double denom = ev.pseudo.row(r).sum();
      ev.gamma_denom(r) = denom;
      if (denom > 0.0) {
        ev.gamma.row(r) = ev.pseudo.row(r) / denom;
      } else {
        ev.gamma.row(r).setConstant(1.0 / m);
      }
    }

    Eigen::VectorXd ind = independent_leaf_costs(rec);
    for (int i = 0; i < m; ++i) {
      double alloc = (1.0 - w) * ev.pseudo(r, i) + w * ev.gamma(r, i) * ev.agg_cost(r);
      ev.mean_ex(i) += ind(i) - alloc;
    }
  }
  ev.mean_ex /= static_cast<double>(B);

  for (int i = 0; i < m; ++i) {
    ev.objective -= std::log(std::max(ev.mean_ex(i), eps));
    ev.lagrangian += mu(i) * pos(-ev.mean_ex(i));
  }
  ev.lagrangian += ev.objective;
  return ev;
}

MlpGrad value_grad_from_eval(const ReconModel& model,
                             std::span<const ForecastRecord* const> batch, const BatchEval& ev,
                             const Eigen::VectorXd& mu, const AllocationPolicy& policy,
                             double eps) {
  const int m = model.leaves;
  const std::size_t B = batch.size();
  const double w = policy.weight;
  const double inv_b = 1.0 / static_cast<double>(B);

  // d(Lagrangian)/d(mean excess): the barrier contributes -1/e above the
  // floor, the hinge penalty contributes -mu below zero, kinks give 0.
  Eigen::VectorXd kappa(m);
  for (int i = 0; i < m; ++i) {
    double e = ev.mean_ex(i);
    kappa(i) = (e > eps ? -1.0 / e : 0.0) + (e < 0.0 ? -mu(i) : 0.0);
  }

  MlpGrad grad = zero_grad(model.net);
  Eigen::VectorXd out_grad(m);
  for (std::size_t r = 0; r < B; ++r) {
    double share_term = w * ev.agg_slope(r) * kappa.dot(ev.gamma.row(r));
    for (int j = 0; j < m; ++j)
      out_grad(j) = -inv_b * (kappa(j) * (1.0 - w) * ev.pseudo_slope(r, j) + share_term);
    if (policy.rule == ShareRule::pseudo_cost_share && ev.gamma_denom(r) > 0.0) {
      double denom = ev.gamma_denom(r);
      double c_dot = kappa.dot(ev.pseudo.row(r));
      double scale = w * ev.agg_cost(r) / (denom * denom);
      for (int j = 0; j < m; ++j)
        out_grad(j) -= inv_b * scale * ev.pseudo_slope(r, j) * (kappa(j) * denom - c_dot);
    }
    backward(model.net, ev.traces[r], out_grad, grad);
  }
  return grad;
}

std::vector<const ForecastRecord*> to_pointers(std::span<const ForecastRecord> records,
                                               bool skip_degenerate) {
  std::vector<const ForecastRecord*> out;
  out.reserve(records.size());
  for (const ForecastRecord& rec : records)
    if (!skip_degenerate || !rec.degenerate_hour) out.push_back(&rec);
  return out;
}

}  // namespace

Eigen::VectorXd mean_excess(const ReconModel& model, std::span<const ForecastRecord> records,
                            const AllocationPolicy& policy) {
  validate(policy);
  const int m = model.leaves;
  const double w = policy.weight;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(m);
  std::size_t counted = 0;
  for (const ForecastRecord& rec : records) {
    if (rec.degenerate_hour) continue;
    Eigen::VectorXd h = leaf_offers(model, rec);
    double offer_sum = h.sum();
    double y_sum = rec.actual(0);
    double agg_cost = imbalance_cost(offer_sum, y_sum, rec.penalties);

    Eigen::VectorXd pseudo(m);
    for (int i = 0; i < m; ++i)
      pseudo(i) = imbalance_cost(h(i), rec.actual(1 + i), rec.penalties);

    Eigen::VectorXd gamma(m);
    if (policy.rule == ShareRule::generation_share) {
      if (y_sum > 0.0)
        for (int i = 0; i < m; ++i) gamma(i) = rec.actual(1 + i) / y_sum;
      else
        gamma.setConstant(1.0 / m);
    } else {
      double denom = pseudo.sum();
      if (denom > 0.0)
        gamma = pseudo / denom;
      else
        gamma.setConstant(1.0 / m);
    }

    Eigen::VectorXd ind = independent_leaf_costs(rec);
    for (int i = 0; i < m; ++i)
      total(i) += ind(i) - ((1.0 - w) * pseudo(i) + w * gamma(i) * agg_cost);
    ++counted;
  }
  if (counted == 0) throw DataError("no non-degenerate records to evaluate");
  return total / static_cast<double>(counted);
}

double nash_objective(const ReconModel& model, std::span<const ForecastRecord> records,
                      const AllocationPolicy& policy, double eps) {
  if (!(eps > 0.0)) throw ConfigError("log floor must be positive");
  Eigen::VectorXd ex = mean_excess(model, records, policy);
  double obj = 0.0;
  for (Eigen::Index i = 0; i < ex.size(); ++i) obj -= std::log(std::max(ex(i), eps));
  return obj;
}

double value_lagrangian(const ReconModel& model, std::span<const ForecastRecord> batch,
                        const Eigen::VectorXd& mu, const AllocationPolicy& policy, double eps) {
  std::vector<const ForecastRecord*> ptrs = to_pointers(batch, false);
  return eval_value_batch(model, ptrs, mu, policy, eps).lagrangian;
}

MlpGrad value_lagrangian_grad(const ReconModel& model, std::span<const ForecastRecord> batch,
                              const Eigen::VectorXd& mu, const AllocationPolicy& policy,
                              double eps) {
  std::vector<const ForecastRecord*> ptrs = to_pointers(batch, false);
  BatchEval ev = eval_value_batch(model, ptrs, mu, policy, eps);
  return value_grad_from_eval(model, ptrs, ev, mu, policy, eps);
}

namespace {

ReconModel make_model(const ExperimentDataset& ds, Strategy kind, const TrainConfig& cfg,
                      std::string_view seed_label) {
  ReconModel model;
  model.kind = kind;
  model.leaves = ds.hier.leaves();
  model.use_context = kind == Strategy::quality_learned || kind == Strategy::value_learned;

  std::span<const ForecastRecord> train = train_records(ds);
  if (train.empty()) throw DataError("no training records");

  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(train.size());
  for (const ForecastRecord& rec : train) inputs.push_back(model.features(rec));
  model.scaler = fit_scaler(inputs);

  const int in_dim = static_cast<int>(inputs.front().size());
  std::vector<int> dims{in_dim};
  bool linear = kind == Strategy::quality_linear || kind == Strategy::value_linear;
  if (!linear)
    for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden_width);
  dims.push_back(model.leaves);

  Activation act = linear ? Activation::identity : Activation::tanh_fn;
  OutputTransform transform = linear ? OutputTransform::clamp : cfg.transform;
  model.net = make_mlp(dims, act, transform, ds.capacities,
                       derive_seed(cfg.seed, seed_label));
  // Clamped outputs start at mid-capacity; at the exact kink the subgradient
  // is 0 and a zero-initialized output would never move.
  if (transform == OutputTransform::clamp)
    model.net.layers.back().b = 0.5 * ds.capacities;
  return model;
}

double full_quality_mse(const ReconModel& model, const std::vector<Eigen::VectorXd>& xs,
                        const std::vector<Eigen::VectorXd>& ys) {
  double total = 0.0;
  for (std::size_t r = 0; r < xs.size(); ++r)
    total += (model.net.forward(xs[r]) - ys[r]).squaredNorm();
  return total / (static_cast<double>(xs.size()) * static_cast<double>(ys.front().size()));
}

}  // namespace

std::pair<ReconModel, TrainReport> train_quality(const ExperimentDataset& ds, Strategy kind,
                                                 const TrainConfig& cfg) {
  validate(cfg);
  if (!is_quality_strategy(kind))
    throw ConfigError("train_quality expects a quality strategy");
  ReconModel model = make_model(ds, kind, cfg, "init-quality");
  const int m = model.leaves;

  std::span<const ForecastRecord> train = train_records(ds);
  std::vector<Eigen::VectorXd> xs, ys;
  xs.reserve(train.size());
  ys.reserve(train.size());
  for (const ForecastRecord& rec : train) {
    xs.push_back(model.scaler.transform(model.features(rec)));
    ys.push_back(rec.actual.tail(m));
  }

  std::mt19937_64 rng(derive_seed(cfg.seed, "batch-quality"));
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  const double denom = static_cast<double>(cfg.batch) * static_cast<double>(m);

  Mlp best = model.net;
  double best_mse = full_quality_mse(model, xs, ys);
  auto consider_snapshot = [&]() {
    double mse = full_quality_mse(model, xs, ys);
    if (mse < best_mse) {
      best_mse = mse;
      best = model.net;
    }
  };

  TrainReport report;
  report.rows.reserve(static_cast<std::size_t>(cfg.epochs));
  std::vector<double> losses;
  try {
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      MlpGrad grad = zero_grad(model.net);
      double batch_loss = 0.0;
      MlpTrace trace;
      for (int b = 0; b < cfg.batch; ++b) {
        std::size_t r = pick(rng);
        Eigen::VectorXd h = forward_trace(model.net, xs[r], trace);
        Eigen::VectorXd diff = h - ys[r];
        batch_loss += diff.squaredNorm() / denom;
        backward(model.net, trace, (2.0 / denom) * diff, grad);
      }
      sgd_step(model.net, grad, cfg.step);
      losses.push_back(batch_loss);

      EpochRow row;
      row.epoch = epoch;
      row.batch_loss = batch_loss;
      row.avg_excess = Eigen::VectorXd::Zero(m);
      row.mu = Eigen::VectorXd::Zero(m);
      report.rows.push_back(std::move(row));

      if (epoch % cfg.eval_every == 0) consider_snapshot();
    }
  } catch (const TrainingError& e) {
    throw TrainingError(std::string("quality training failed: ") + e.what(), losses);
  }
  consider_snapshot();
  model.net = best;

  report.final_mu = Eigen::VectorXd::Zero(m);
  report.final_excess = Eigen::VectorXd::Zero(m);
  report.final_objective = best_mse;
  report.epsilon_used = 0.0;
  report.status = "ok";
  return {std::move(model), std::move(report)};
}

std::pair<ReconModel, TrainReport> train_value(const ExperimentDataset& ds, Strategy kind,
                                               const TrainConfig& cfg) {
  validate(cfg);
  if (!is_value_strategy(kind)) throw ConfigError("train_value expects a value strategy");
  ReconModel model = make_model(ds, kind, cfg, "init-value");
  const int m = model.leaves;

  std::span<const ForecastRecord> train = train_records(ds);
  std::vector<const ForecastRecord*> usable = to_pointers(train, true);
  if (usable.empty())
    throw TrainingError("every training hour is degenerate; nothing to optimize");

  double mean_ind = 0.0;
  for (const ForecastRecord* rec : usable) mean_ind += independent_leaf_costs(*rec).mean();
  mean_ind /= static_cast<double>(usable.size());
  const double eps =
      cfg.epsilon_log > 0.0 ? cfg.epsilon_log : std::max(cfg.epsilon_log_scale * mean_ind, 1e-12);
  const double constraint_tol = cfg.constraint_tol_scale * mean_ind;

  AllocationPolicy policy{cfg.weight, cfg.rule};
  Eigen::VectorXd mu = Eigen::VectorXd::Ones(m);

  std::mt19937_64 rng(derive_seed(cfg.seed, "batch-value"));
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);

  TrainReport report;
  report.rows.reserve(static_cast<std::size_t>(cfg.epochs));
  report.epsilon_used = eps;
  std::vector<double> losses;
  std::vector<const ForecastRecord*> batch(static_cast<std::size_t>(cfg.batch));

  try {
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      for (auto& slot : batch) slot = usable[pick(rng)];
      BatchEval ev = eval_value_batch(model, batch, mu, policy, eps);
      MlpGrad grad = value_grad_from_eval(model, batch, ev, mu, policy, eps);
      sgd_step(model.net, grad, cfg.step);

      // Dual ascent on the same batch's violations, evaluated before the
      // primal step.
      for (int i = 0; i < m; ++i) {
        if (cfg.allow_dual_decrease)
          mu(i) = std::max(0.0, mu(i) + cfg.dual_step * (-ev.mean_ex(i)));
        else
          mu(i) += cfg.dual_step * pos(-ev.mean_ex(i));
      }
      losses.push_back(ev.lagrangian);

      EpochRow row;
      row.epoch = epoch;
      row.batch_loss = ev.lagrangian;
      row.avg_excess = ev.mean_ex;
      row.mu = mu;
      report.rows.push_back(std::move(row));
    }
  } catch (const TrainingError& e) {
    throw TrainingError(std::string("value training failed: ") + e.what(), losses);
  }

  report.final_mu = mu;
  report.final_excess = mean_excess(model, train, policy);
  report.final_objective = nash_objective(model, train, policy, eps);
  report.status = (report.final_excess.array() >= -constraint_tol).all()
                      ? "ok"
                      : "constraint_failure";
  return {std::move(model), std::move(report)};
}

void write_train_report_csv(const TrainReport& report, const std::string& path,
                            const std::string& fingerprint) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open report file for writing: " + path);
  os << "# " << fingerprint << '\n';
  const Eigen::Index m = report.final_mu.size();
  os << "epoch,L_batch";
  for (Eigen::Index i = 1; i <= m; ++i) os << ",avg_excess_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",mu_" << i;
  os << '\n';
  for (const EpochRow& row : report.rows) {
    os << row.epoch << ',' << fmt_double(row.batch_loss);
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << fmt_double(row.avg_excess(i));
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << fmt_double(row.mu(i));
    os << '\n';
  }
  if (!os) throw DataError("failed writing report file: " + path);
}

}  // namespace hiertrade
