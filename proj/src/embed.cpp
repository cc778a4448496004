#include "hypalign/embed.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hypalign {

namespace gd = geometry::detail;

void EmbedConfig::validate() const {
  if (dim < 2) throw std::invalid_argument("embedding dim must be >= 2");
  if (negatives_per_pair < 1) throw std::invalid_argument("negatives_per_pair must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (burn_in_epochs < 0) throw std::invalid_argument("burn_in_epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(init_radius > 0.0 && init_radius < 1.0)) {
    throw std::invalid_argument("init_radius must lie in (0, 1)");
  }
}

namespace {

// Adds the gradient of one soft-ranking term into `grad`, recording rows it
// touches, and returns the term's loss.
double accumulate_pair(const PointCloud& cloud, const TrainingPair& pair, double scale,
                       Points& grad, std::vector<std::size_t>* touched) {
  const std::size_t n = cloud.size();
  if (pair.u >= n || pair.v >= n) throw std::invalid_argument("pair index out of range");
  for (std::size_t w : pair.negatives) {
    if (w >= n) throw std::invalid_argument("negative index out of range");
  }

  const auto u = cloud.point(pair.u);
  const std::size_t k = pair.negatives.size() + 1;
  std::vector<std::size_t> cand(k);
  cand[0] = pair.v;
  std::copy(pair.negatives.begin(), pair.negatives.end(), cand.begin() + 1);

  std::vector<double> dist(k);
  for (std::size_t c = 0; c < k; ++c) {
    dist[c] = gd::acosh1p(gd::cosh_distance_minus_one(u, cloud.point(cand[c])));
  }
  const double dmin = *std::min_element(dist.begin(), dist.end());
  double sum = 0.0;
  for (double d : dist) sum += std::exp(dmin - d);
  const double lse = -dmin + std::log(sum);  // log sum exp(-d)
  const double loss = dist[0] + lse;

  for (std::size_t c = 0; c < k; ++c) {
    const double prob = std::exp(-dist[c] - lse);
    const double coef = scale * ((c == 0 ? 1.0 : 0.0) - prob);
    if (coef == 0.0) continue;
    const auto w = cloud.point(cand[c]);
    grad.row(static_cast<Eigen::Index>(pair.u)) +=
        coef * geometry::ground_cost_grad(u, w, geometry::CostKind::dist).transpose();
    grad.row(static_cast<Eigen::Index>(cand[c])) +=
        coef * geometry::ground_cost_grad(w, u, geometry::CostKind::dist).transpose();
    if (touched) touched->push_back(cand[c]);
  }
  if (touched) touched->push_back(pair.u);
  return loss;
}

Points random_ball_init(std::size_t n, int dim, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Points pts(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    Eigen::VectorXd dir(dim);
    for (int j = 0; j < dim; ++j) dir[j] = normal(rng);
    const double r = radius * std::pow(unit(rng), 1.0 / dim);
    pts.row(i) = (r / dir.norm()) * dir.transpose();
  }
  return pts;
}

}  // namespace

LossAndGrad embedding_loss(const PointCloud& cloud, std::span<const TrainingPair> batch) {
  if (batch.empty()) throw std::invalid_argument("embedding_loss: empty batch");
  LossAndGrad out;
  out.grad = Points::Zero(cloud.points.rows(), cloud.points.cols());
  for (const auto& pair : batch) {
    out.loss += accumulate_pair(cloud, pair, 1.0, out.grad, nullptr);
  }
  return out;
}

EmbeddingResult train_embedding(const Hierarchy& h, const EmbedConfig& cfg) {
  cfg.validate();
  if (h.edges().empty()) throw std::invalid_argument("hierarchy has no relations to embed");

  std::mt19937_64 rng(cfg.seed);
  EmbeddingResult result;
  result.cloud = PointCloud::uniform(h.labels(), random_ball_init(h.size(), cfg.dim,
                                                                  cfg.init_radius, rng));
  PointCloud& cloud = result.cloud;
  const NegativeSampler sampler(h);

  // A pair whose child is related to every node has no negatives; its loss is
  // identically zero (the softmax holds only the positive), so it is skipped.
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < h.edges().size(); ++k) {
    if (sampler.eligible_count(h.edges()[k].child) > 0) order.push_back(k);
  }
  Points grad = Points::Zero(cloud.points.rows(), cloud.points.cols());
  std::vector<std::size_t> touched;
  std::vector<TrainingPair> batch;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        epoch < cfg.burn_in_epochs ? cfg.learning_rate / 10.0 : cfg.learning_rate;
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t b = start; b < stop; ++b) {
        const Edge& e = h.edges()[order[b]];
        batch.push_back({e.child, e.parent, sampler.sample(e.child, cfg.negatives_per_pair, rng)});
      }
      const double scale = 1.0 / static_cast<double>(batch.size());
      touched.clear();
      for (const auto& pair : batch) {
        epoch_loss += accumulate_pair(cloud, pair, scale, grad, &touched);
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

      for (std::size_t i : touched) {
        const auto row = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd x = cloud.points.row(row).transpose();
        const double shrink = (1.0 - x.squaredNorm());
        const Eigen::VectorXd rgrad = (shrink * shrink / 4.0) * grad.row(row).transpose();
        cloud.points.row(row) = geometry::exp_map(x, -lr * rgrad, cfg.margin).transpose();
        grad.row(row).setZero();
      }
    }
    result.epoch_loss.push_back(order.empty() ? 0.0 : epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

}  // namespace hypalign
