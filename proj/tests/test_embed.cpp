#include "hypalign/embed.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace hypalign;
using namespace testing_support;

namespace {

PointCloud cloud_from(const std::vector<geometry::Vector>& pts) {
  Points p(static_cast<Eigen::Index>(pts.size()), pts.front().size());
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    labels.push_back("v" + std::to_string(i));
  }
  return PointCloud::uniform(labels, p);
}

// Independent loss: -log softmax over {v} + negatives of -d, with std::acosh.
double oracle_loss(const PointCloud& c, const std::vector<TrainingPair>& batch) {
  double total = 0.0;
  for (const auto& pr : batch) {
    const auto d = [&](std::size_t j) {
      return oracle_distance(c.points.row(pr.u).transpose(), c.points.row(j).transpose());
    };
    double denom = std::exp(-d(pr.v));
    for (auto n : pr.negatives) denom += std::exp(-d(n));
    total += d(pr.v) + std::log(denom);
  }
  return total;
}

}  // namespace

TEST(EmbeddingLoss, EqualDistancesGiveLogTwo) {
  geometry::Vector u = geometry::Vector::Zero(2);
  geometry::Vector v(2), w(2);
  v << 0.4, 0.0;
  w << 0.0, -0.4;
  const auto c = cloud_from({u, v, w});
  const std::vector<TrainingPair> batch{{0, 1, {2}}};
  EXPECT_NEAR(embedding_loss(c, batch).loss, std::log(2.0), 1e-12);
}

TEST(EmbeddingLoss, FarNegativeDrivesLossToZero) {
  geometry::Vector u = geometry::Vector::Zero(2);
  geometry::Vector v(2), w(2);
  v << 1e-4, 0.0;
  w << 1.0 - 1e-9, 0.0;
  const auto c = cloud_from({u, v, w});
  const std::vector<TrainingPair> batch{{0, 1, {2}}};
  EXPECT_LT(embedding_loss(c, batch).loss, 1e-8);
}

TEST(EmbeddingLoss, MatchesOracleAndFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = random_cloud(rng, 5, 3, 0.8);
    const std::vector<TrainingPair> batch{{0, 1, {2, 3}}, {4, 2, {0, 1, 3}}, {1, 0, {4}}};
    const auto lg = embedding_loss(c, batch);
    EXPECT_NEAR(lg.loss, oracle_loss(c, batch), 1e-10);
    const auto f = [&](const Eigen::MatrixXd& flat) {
      PointCloud moved = c;
      moved.points = flat;
      return embedding_loss(moved, batch).loss;
    };
    const Eigen::MatrixXd fd = numeric_gradient(f, Eigen::MatrixXd(c.points));
    EXPECT_LT(relative_error(Eigen::MatrixXd(lg.grad), fd), 1e-4);
  }
}

TEST(EmbeddingLoss, IsometryInvariant) {
  std::mt19937_64 rng(4);
  const auto c = random_cloud(rng, 6, 3, 0.7);
  const std::vector<TrainingPair> batch{{0, 1, {2, 3}}, {5, 4, {0, 2}}};
  const auto P = random_rotation(rng, 3);
  const auto v = random_ball_point(rng, 3, 0.5);
  PointCloud moved = c;
  for (Eigen::Index i = 0; i < moved.points.rows(); ++i) {
    moved.points.row(i) = geometry::apply_isometry(P, v, c.points.row(i).transpose()).transpose();
  }
  EXPECT_NEAR(embedding_loss(c, batch).loss, embedding_loss(moved, batch).loss, 1e-8);
}

TEST(EmbeddingLoss, RejectsEmptyBatch) {
  std::mt19937_64 rng(5);
  const auto c = random_cloud(rng, 3, 2);
  EXPECT_THROW(embedding_loss(c, std::vector<TrainingPair>{}), std::invalid_argument);
}

TEST(TrainEmbedding, BinaryTreeParentsRankHigh) {
  const auto tree = balanced_tree(2, 3);
  EmbedConfig cfg;
  cfg.dim = 2;
  cfg.epochs = 300;
  const auto res = train_embedding(transitive_closure(tree), cfg);
  const auto& c = res.cloud;
  double rank_sum = 0.0;
  for (const auto& e : tree.edges()) {
    const auto x = c.point(e.child);
    const double dp = geometry::poincare_distance(x, c.point(e.parent));
    int rank = 1;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (j == e.child || j == e.parent) continue;
      if (geometry::poincare_distance(x, c.point(j)) < dp) ++rank;
    }
    rank_sum += rank;
  }
  EXPECT_LE(rank_sum / static_cast<double>(tree.edges().size()), 2.0);
}

TEST(TrainEmbedding, StarRootIsCentral) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 6; ++i) pairs.emplace_back("leaf" + std::to_string(i), "root");
  const auto h = Hierarchy::from_label_pairs(pairs);
  EmbedConfig cfg;
  cfg.dim = 2;
  const auto c = train_embedding(transitive_closure(h), cfg).cloud;
  const auto root = h.index_of("root");
  double root_mean = 0.0, leaf_mean = 0.0;
  int leaf_pairs = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i == root) continue;
    root_mean += geometry::poincare_distance(c.point(root), c.point(i)) / 6.0;
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      if (j == root) continue;
      leaf_mean += geometry::poincare_distance(c.point(i), c.point(j));
      ++leaf_pairs;
    }
  }
  leaf_mean /= leaf_pairs;
  EXPECT_LT(root_mean, leaf_mean);
}

TEST(TrainEmbedding, DeterministicBoundedAndDecreasing) {
  const auto h = transitive_closure(balanced_tree(3, 2));
  EmbedConfig cfg;
  cfg.dim = 5;
  cfg.epochs = 100;
  cfg.seed = 17;
  const auto a = train_embedding(h, cfg);
  const auto b = train_embedding(h, cfg);
  EXPECT_EQ(a.cloud.points, b.cloud.points);
  EXPECT_EQ(a.cloud.weights, b.cloud.weights);
  for (std::size_t i = 0; i < a.cloud.size(); ++i) {
    EXPECT_LE(a.cloud.point(i).norm(), 1.0 - cfg.margin + 1e-15);
  }
  const auto& L = a.epoch_loss;
  ASSERT_EQ(L.size(), 100u);
  const double first = std::accumulate(L.begin(), L.begin() + 10, 0.0);
  const double last = std::accumulate(L.end() - 10, L.end(), 0.0);
  EXPECT_LT(last, first);
}

TEST(TrainEmbedding, ChainWithoutNegativesKeepsInitialization) {
  // Every node of a chain is related to every other, so no pair has negatives.
  const auto h = transitive_closure(Hierarchy::from_label_pairs({{"b", "a"}, {"c", "b"}}));
  EmbedConfig cfg;
  cfg.epochs = 5;
  const auto res = train_embedding(h, cfg);
  EXPECT_EQ(res.cloud.size(), 3u);
  EXPECT_EQ(res.cloud.dim(), cfg.dim);
  EXPECT_EQ(res.epoch_loss, std::vector<double>(5, 0.0));
}

TEST(TrainEmbedding, ConfigValidation) {
  EmbedConfig cfg;
  cfg.dim = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = EmbedConfig{};
  cfg.negatives_per_pair = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
