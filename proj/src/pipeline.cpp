#include "hypalign/pipeline.hpp"

#include "hypalign/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hypalign::pipeline {

namespace gd = geometry::detail;
using registration::RegistrationNetwork;

std::string_view to_string(PretrainStrategy s) {
  switch (s) {
    case PretrainStrategy::none: return "none";
    case PretrainStrategy::identity: return "identity";
    case PretrainStrategy::crossmap: return "crossmap";
    case PretrainStrategy::procrustes: return "procrustes";
  }
  throw std::invalid_argument("unknown pretrain strategy");
}

PretrainStrategy parse_pretrain(std::string_view name) {
  for (auto s : {PretrainStrategy::none, PretrainStrategy::identity, PretrainStrategy::crossmap,
                 PretrainStrategy::procrustes}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown pretrain strategy '" + std::string(name) + "'");
}

std::string_view to_string(RetrievalMetric m) {
  return m == RetrievalMetric::poincare ? "poincare" : "euclidean";
}

ot::AnnealSchedule MatchConfig::schedule() const {
  if (epsilon_final) return ot::AnnealSchedule::to_final(epsilon0, *epsilon_final, steps);
  ot::AnnealSchedule s;
  s.epsilon0 = epsilon0;
  s.decay = decay;
  s.steps = steps;
  return s;
}

void MatchConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (pretrain_iters < 0) throw std::invalid_argument("pretrain_iters must be >= 0");
  if (!(pretrain_lr > 0.0) || !(lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (select_every < 1) throw std::invalid_argument("select_every must be >= 1");
  if (sinkhorn_max_iters < 1 || final_sinkhorn_max_iters < 1) {
    throw std::invalid_argument("sinkhorn iteration caps must be >= 1");
  }
  if (!(sinkhorn_tolerance > 0.0)) throw std::invalid_argument("sinkhorn_tolerance must be positive");
  for (int k : eval_k) {
    if (k < 1) throw std::invalid_argument("eval k values must be >= 1");
  }
  schedule().validate();
  registration::layer_dims(arch);
}

namespace {

double mean_distance_to_targets(const PointCloud& mapped, const Points& targets) {
  double total = 0.0;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    total += gd::acosh1p(gd::cosh_distance_minus_one(
        mapped.point(i), targets.row(static_cast<Eigen::Index>(i)).transpose()));
  }
  return total / static_cast<double>(mapped.size());
}

}  // namespace

PretrainReport pretrain(RegistrationNetwork& net, const PointCloud& X, const PointCloud& Y,
                        const PretrainOptions& opts) {
  PretrainReport report;
  if (opts.strategy == PretrainStrategy::none) return report;
  if (X.dim() != Y.dim()) throw std::invalid_argument("pretrain: dimension mismatch");

  Points targets(Y.points.rows(), Y.points.cols());
  switch (opts.strategy) {
    case PretrainStrategy::identity: targets = Y.points; break;
    case PretrainStrategy::crossmap: {
      std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
      std::vector<std::size_t> sigma(Y.size());
      if (X.size() == Y.size()) {
        std::iota(sigma.begin(), sigma.end(), 0);
        std::shuffle(sigma.begin(), sigma.end(), rng);
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, X.size() - 1);
        for (auto& s : sigma) s = pick(rng);
      }
      for (std::size_t i = 0; i < Y.size(); ++i) {
        targets.row(static_cast<Eigen::Index>(i)) = X.points.row(static_cast<Eigen::Index>(sigma[i]));
      }
      break;
    }
    case PretrainStrategy::procrustes: {
      MatchConfig cfg;
      cfg.steps = 100;
      report.rotation = alternating_baseline(X, Y, cfg).P;
      targets = rotate(Y, report.rotation).points;
      break;
    }
    case PretrainStrategy::none: break;
  }

  auto params = net.parameters();
  optim::Radam opt(opts.lr);
  const double inv_n = 1.0 / static_cast<double>(Y.size());
  for (int it = 0; it < opts.iters; ++it) {
    const PointCloud mapped = registration::network_forward(net, Y);
    if (it == 0) report.initial_objective = mean_distance_to_targets(mapped, targets);
    Points upstream(mapped.points.rows(), mapped.points.cols());
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      upstream.row(row) = inv_n * geometry::ground_cost_grad(mapped.point(i),
                                                             targets.row(row).transpose(),
                                                             CostKind::dist)
                                      .transpose();
    }
    const auto grad = registration::network_backward(net, Y, upstream);
    opt.step(params, grad.params);
  }
  const PointCloud mapped = registration::network_forward(net, Y);
  report.final_objective = mean_distance_to_targets(mapped, targets);
  if (opts.iters == 0) report.initial_objective = report.final_objective;
  return report;
}

ProcrustesResult orthogonal_procrustes(const PointCloud& X, const PointCloud& Y,
                                       const Matrix* weights) {
  if (X.dim() != Y.dim()) throw std::invalid_argument("procrustes: dimension mismatch");
  Matrix M;
  if (weights) {
    if (weights->rows() != X.points.rows() || weights->cols() != Y.points.rows()) {
      throw std::invalid_argument("procrustes: weight matrix shape mismatch");
    }
    M = X.points.transpose() * (*weights) * Y.points;
  } else {
    if (X.size() != Y.size()) {
      throw std::invalid_argument("procrustes without a coupling needs equal cloud sizes");
    }
    M = X.points.transpose() * Y.points;
  }
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix& U = svd.matrixU();
  const Matrix& V = svd.matrixV();
  Eigen::VectorXd signs = Eigen::VectorXd::Ones(M.rows());
  if ((U * V.transpose()).determinant() < 0.0) signs[signs.size() - 1] = -1.0;

  ProcrustesResult out;
  out.P = U * signs.asDiagonal() * V.transpose();
  const auto& sv = svd.singularValues();
  out.degenerate = sv.size() == 0 || sv[0] == 0.0 || sv[sv.size() - 1] <= 1e-12 * sv[0];
  return out;
}

PointCloud rotate(const PointCloud& Y, const Matrix& P) {
  PointCloud out = Y;
  out.points = Y.points * P.transpose();
  for (Eigen::Index i = 0; i < out.points.rows(); ++i) {
    out.points.row(i) = geometry::project_to_ball(out.points.row(i).transpose()).transpose();
  }
  return out;
}

namespace {

ot::SinkhornConfig sinkhorn_config(const MatchConfig& cfg, double eps) {
  ot::SinkhornConfig sc;
  sc.epsilon = eps;
  sc.max_iters = cfg.sinkhorn_max_iters;
  sc.tolerance = cfg.sinkhorn_tolerance;
  return sc;
}

ot::SinkhornConfig final_sinkhorn_config(const MatchConfig& cfg, double eps) {
  ot::SinkhornConfig sc = sinkhorn_config(cfg, eps);
  sc.max_iters = std::max(cfg.sinkhorn_max_iters, cfg.final_sinkhorn_max_iters);
  return sc;
}

// Coupling weights times d cost / d |x - Py|^2 at the current rotation.
Matrix majorizer_weights(const PointCloud& X, const PointCloud& mapped, const Matrix& plan,
                         CostKind kind) {
  if (kind == CostKind::euclidean_squared) return plan;
  Matrix w(plan.rows(), plan.cols());
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const auto x = X.point(static_cast<std::size_t>(i));
    const double alpha = 1.0 - x.squaredNorm();
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      const auto y = mapped.point(static_cast<std::size_t>(j));
      const double scale = 2.0 / (alpha * (1.0 - y.squaredNorm()));
      const double t = std::max(scale * (x - y).squaredNorm(), 1e-12);
      w(i, j) = plan(i, j) * gd::cost_slope(t, kind) * scale;
    }
  }
  return w;
}

}  // namespace

AlternatingResult alternating_baseline(const PointCloud& X, const PointCloud& Y,
                                       const MatchConfig& cfg, const Matrix* initial_rotation) {
  cfg.validate();
  if (X.dim() != Y.dim()) throw std::invalid_argument("alternating_baseline: dimension mismatch");
  const auto schedule = cfg.schedule();
  AlternatingResult out;
  out.P = initial_rotation ? *initial_rotation : Matrix::Identity(X.dim(), X.dim());
  if (!geometry::is_special_orthogonal(out.P)) {
    throw std::invalid_argument("initial rotation is not special orthogonal");
  }

  ot::Potentials warm;
  const ot::Potentials* warm_ptr = nullptr;
  for (int t = 1; t <= schedule.steps; ++t) {
    const double eps = ot::anneal(schedule, t);
    const PointCloud mapped = rotate(Y, out.P);
    const auto C = ot::cost_matrix(X, mapped, cfg.cost);
    const auto sk = ot::sinkhorn(C, X.weights, Y.weights, sinkhorn_config(cfg, eps), warm_ptr);
    warm = sk.potentials;
    warm_ptr = &warm;
    out.trace.push_back({t, eps, sk.objective});
    const Matrix w = majorizer_weights(X, mapped, sk.coupling.plan, cfg.cost);
    // The rotation step acts on Y, so compose with the current rotation.
    const PointCloud rotated = rotate(Y, out.P);
    const Matrix delta = orthogonal_procrustes(X, rotated, &w).P;
    out.P = delta * out.P;
  }
  out.mapped = rotate(Y, out.P);
  const auto C = ot::cost_matrix(X, out.mapped, cfg.cost);
  auto final_sk = ot::sinkhorn(C, X.weights, Y.weights,
                               final_sinkhorn_config(cfg, ot::anneal(schedule, schedule.steps)),
                               warm_ptr);
  out.coupling = std::move(final_sk.coupling);
  out.coupling_converged = final_sk.converged;
  return out;
}

MatchResult train_registration(const PointCloud& X, const PointCloud& Y, const MatchConfig& cfg) {
  cfg.validate();
  if (X.dim() != Y.dim()) {
    throw std::invalid_argument("train_registration: dimension mismatch " +
                                std::to_string(X.dim()) + " vs " + std::to_string(Y.dim()));
  }
  X.validate();
  Y.validate();
  const auto schedule = cfg.schedule();
  const double eps_final = ot::anneal(schedule, schedule.steps);

  std::mt19937_64 rng(cfg.seed);
  registration::ArchSpec arch = cfg.arch;
  arch.dim = X.dim();
  MatchResult result;
  RegistrationNetwork net = registration::init_network(arch, rng);

  PretrainOptions popts;
  popts.strategy = cfg.pretrain;
  popts.iters = cfg.pretrain_iters;
  popts.lr = cfg.pretrain_lr;
  popts.seed = cfg.seed;
  result.pretrain_objective = pretrain(net, X, Y, popts).final_objective;

  auto opt = optim::make_optimizer(cfg.optimizer, cfg.lr);
  auto params = net.parameters();
  ot::DivergenceWarmStart warm;
  ot::DivergenceWarmStart warm_final;

  RegistrationNetwork best = net;
  double best_value = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  auto consider = [&](const PointCloud& mapped, int iter, double eps, double value_at_eps) {
    double value = value_at_eps;
    if (eps != eps_final) {
      value = ot::sinkhorn_divergence(X, mapped, cfg.cost, sinkhorn_config(cfg, eps_final),
                                      &warm_final)
                  .value;
    }
    if (value < best_value) {
      best_value = value;
      best = net;
      best_iter = iter;
    }
  };

  for (int t = 1; t <= schedule.steps; ++t) {
    const double eps = ot::anneal(schedule, t);
    const PointCloud mapped = registration::network_forward(net, Y);
    const auto sd = ot::sinkhorn_divergence(X, mapped, cfg.cost, sinkhorn_config(cfg, eps), &warm);
    if (!std::isfinite(sd.value) || !sd.grad_y.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite Sinkhorn divergence at iteration " << t << " (epsilon " << eps << ")";
      throw NumericalError(msg.str());
    }
    result.trace.push_back({t, eps, sd.value});
    if (t % cfg.select_every == 0 || t == schedule.steps) consider(mapped, t - 1, eps, sd.value);

    const auto grad = registration::network_backward(net, Y, sd.grad_y);
    for (const auto& g : grad.params) {
      if (!g.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite parameter gradient at iteration " << t << " (epsilon " << eps << ")";
        throw NumericalError(msg.str());
      }
    }
    opt->step(params, grad.params);
    for (const auto& p : params) {
      if (!p.value.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite network parameters after iteration " << t << " (epsilon " << eps << ")";
        throw NumericalError(msg.str());
      }
    }
  }
  {
    const PointCloud mapped = registration::network_forward(net, Y);
    consider(mapped, schedule.steps, -1.0, 0.0);
  }

  result.network = best;
  result.selected_iter = best_iter;
  result.selected_divergence = best_value;
  result.mapped = registration::network_forward(result.network, Y);
  const auto C = ot::cost_matrix(X, result.mapped, cfg.cost);
  auto final_sk = ot::sinkhorn(C, X.weights, Y.weights, final_sinkhorn_config(cfg, eps_final),
                               warm_final.xy ? &*warm_final.xy : nullptr);
  result.coupling = std::move(final_sk.coupling);
  result.coupling_converged = final_sk.converged;
  const int kmax = cfg.eval_k.empty() ? 10 : *std::max_element(cfg.eval_k.begin(), cfg.eval_k.end());
  result.rankings = extract_matching(X, result.mapped, kmax, cfg.metric);
  return result;
}

std::vector<RankedList> extract_matching(const PointCloud& X, const PointCloud& mappedY, int k,
                                         RetrievalMetric metric) {
  if (k < 1) throw std::invalid_argument("extract_matching: k must be >= 1");
  if (X.dim() != mappedY.dim()) throw std::invalid_argument("extract_matching: dimension mismatch");
  const std::size_t m = mappedY.size();
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), m);
  std::vector<RankedList> out(X.size());
  parallel_for(X.size(), [&](std::size_t i) {
    const auto x = X.point(i);
    std::vector<std::pair<double, std::size_t>> scored(m);
    for (std::size_t j = 0; j < m; ++j) {
      const auto y = mappedY.point(j);
      const double d = metric == RetrievalMetric::poincare
                           ? gd::acosh1p(gd::cosh_distance_minus_one(x, y))
                           : (x - y).norm();
      scored[j] = {d, j};
    }
    auto less = [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return mappedY.labels[a.second] < mappedY.labels[b.second];
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), less);
    out[i].source = X.labels[i];
    for (std::size_t r = 0; r < keep; ++r) {
      out[i].candidates.push_back(mappedY.labels[scored[r].second]);
    }
  });
  return out;
}

double precision_at_k(const std::vector<RankedList>& lists,
                      const std::vector<std::pair<std::string, std::string>>& truth, int k) {
  if (truth.empty()) throw std::invalid_argument("precision_at_k: empty ground truth");
  if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
  std::unordered_map<std::string, const RankedList*> by_source;
  for (const auto& l : lists) by_source.emplace(l.source, &l);
  std::size_t hits = 0;
  for (const auto& [source, target] : truth) {
    auto it = by_source.find(source);
    if (it == by_source.end()) continue;
    const auto& cand = it->second->candidates;
    const std::size_t depth = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
    if (std::find(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(depth), target) !=
        cand.begin() + static_cast<std::ptrdiff_t>(depth)) {
      ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(truth.size());
}

double distance_matrix_discrepancy(const PointCloud& X, const PointCloud& Y) {
  std::unordered_map<std::string, std::size_t> y_index;
  for (std::size_t j = 0; j < Y.size(); ++j) y_index.emplace(Y.labels[j], j);
  std::vector<std::string> offenders;
  std::vector<std::size_t> align(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    auto it = y_index.find(X.labels[i]);
    if (it == y_index.end()) {
      offenders.push_back(X.labels[i]);
    } else {
      align[i] = it->second;
    }
  }
  if (X.size() != Y.size()) {
    std::unordered_map<std::string, bool> in_x;
    for (const auto& l : X.labels) in_x.emplace(l, true);
    for (const auto& l : Y.labels) {
      if (!in_x.count(l)) offenders.push_back(l);
    }
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "label sets differ (" << offenders.size() << " unmatched):";
    for (std::size_t i = 0; i < std::min<std::size_t>(10, offenders.size()); ++i) {
      msg << ' ' << offenders[i];
    }
    throw std::invalid_argument(msg.str());
  }
  if (X.dim() != Y.dim()) throw std::invalid_argument("discrepancy: dimension mismatch");

  double diff_sq = 0.0;
  double base_sq = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = i + 1; j < X.size(); ++j) {
      const double dx = gd::acosh1p(gd::cosh_distance_minus_one(X.point(i), X.point(j)));
      const double dy =
          gd::acosh1p(gd::cosh_distance_minus_one(Y.point(align[i]), Y.point(align[j])));
      diff_sq += (dx - dy) * (dx - dy);
      base_sq += dx * dx;
    }
  }
  if (base_sq == 0.0) throw std::invalid_argument("discrepancy: reference distances are all zero");
  return std::sqrt(diff_sq / base_sq);
}

}  // namespace hypalign::pipeline
