#pragma once

#include "hypalign/geometry.hpp"
#include "hypalign/hierarchy.hpp"
#include "hypalign/point_cloud.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace hypalign {

/// Poincare-embedding trainer settings. Only dim and negatives_per_pair carry
/// hard constraints; the rest are the usual soft-ranking defaults.
struct EmbedConfig {
  int dim = 10;
  int epochs = 300;
  double learning_rate = 0.3;
  int negatives_per_pair = 10;
  int burn_in_epochs = 20;
  int batch_size = 10;
  std::uint64_t seed = 0;
  double init_radius = 1e-3;
  double margin = geometry::kDefaultMargin;

  void validate() const;
};

/// One positive relation (u is-a v) with its sampled negatives for u.
struct TrainingPair {
  std::size_t u = 0;
  std::size_t v = 0;
  std::vector<std::size_t> negatives;
};

struct LossAndGrad {
  double loss = 0.0;
  /// Euclidean gradient, one row per point of the cloud (zero rows for
  /// points not in the batch).
  Points grad;
};

/// Summed negative log-softmax of -d(u, v) against {v} and the negatives,
/// with its gradient in the point coordinates.
LossAndGrad embedding_loss(const PointCloud& cloud, std::span<const TrainingPair> batch);

struct EmbeddingResult {
  PointCloud cloud;
  /// Mean per-pair loss of every epoch.
  std::vector<double> epoch_loss;
};

/// Riemannian SGD on the soft-ranking loss over every edge of `h` (pass the
/// transitive closure). Deterministic for a fixed config. Edges whose child
/// is related to every other node contribute nothing and are skipped.
EmbeddingResult train_embedding(const Hierarchy& h, const EmbedConfig& cfg);

}  // namespace hypalign
