#pragma once

#include "hypalign/errors.hpp"
#include "hypalign/geometry.hpp"
#include "hypalign/optim.hpp"
#include "hypalign/ot.hpp"
#include "hypalign/point_cloud.hpp"
#include "hypalign/registration.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hypalign::pipeline {

using geometry::CostKind;
using geometry::Matrix;

using hypalign::NumericalError;

enum class PretrainStrategy { none, identity, crossmap, procrustes };
enum class RetrievalMetric { poincare, euclidean };

std::string_view to_string(PretrainStrategy s);
PretrainStrategy parse_pretrain(std::string_view name);
std::string_view to_string(RetrievalMetric m);

/// Defaults follow the full model: distance cost, 10 hyperlinear layers of
/// width 20 with ELU, CrossMap pretraining, RADAM at 1e-3, epsilon annealed
/// from 10 to 1e-2 over 200 outer iterations.
struct MatchConfig {
  CostKind cost = CostKind::dist;
  registration::ArchSpec arch;
  PretrainStrategy pretrain = PretrainStrategy::crossmap;
  int pretrain_iters = 500;
  double pretrain_lr = 1e-2;
  double epsilon0 = 10.0;
  /// When set, the decay is derived so that the last iteration uses it.
  std::optional<double> epsilon_final = 1e-2;
  double decay = 0.99;
  int steps = 200;
  optim::OptimizerKind optimizer = optim::OptimizerKind::radam;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> eval_k = {1, 10};
  RetrievalMetric metric = RetrievalMetric::poincare;
  int sinkhorn_max_iters = 2000;
  double sinkhorn_tolerance = 1e-6;
  /// Iteration cap for the reported coupling, which must be feasible.
  int final_sinkhorn_max_iters = 200000;
  /// Snapshot interval for unsupervised model selection.
  int select_every = 10;

  ot::AnnealSchedule schedule() const;
  void validate() const;
};

struct TraceEntry {
  int iter = 0;
  double epsilon = 0.0;
  double divergence = 0.0;
};

struct RankedList {
  std::string source;
  /// Target labels, nearest first.
  std::vector<std::string> candidates;
};

struct MatchResult {
  registration::RegistrationNetwork network;
  /// f(Y) under the selected network.
  PointCloud mapped;
  ot::Coupling coupling;
  bool coupling_converged = false;
  std::vector<RankedList> rankings;
  std::vector<TraceEntry> trace;
  double pretrain_objective = 0.0;
  /// Divergence of the selected network at the final epsilon.
  double selected_divergence = 0.0;
  int selected_iter = 0;
};

struct PretrainOptions {
  PretrainStrategy strategy = PretrainStrategy::crossmap;
  int iters = 500;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  /// Procrustes strategy only: the rotation used as target map.
  Matrix rotation;
};

/// Fits the network to a target assignment of Y by minimizing the mean
/// Poincare distance between f(y_i) and its target.
PretrainReport pretrain(registration::RegistrationNetwork& net, const PointCloud& X,
                        const PointCloud& Y, const PretrainOptions& opts);

struct ProcrustesResult {
  Matrix P;
  /// Cross-covariance was rank deficient; P is still special orthogonal.
  bool degenerate = false;
};

/// argmax over SO(d) of sum_ij W_ij <x_i, P y_j>, with W the identity
/// pairing (n == m required) when `weights` is absent.
ProcrustesResult orthogonal_procrustes(const PointCloud& X, const PointCloud& Y,
                                       const Matrix* weights = nullptr);

/// Applies a rotation to every point of a cloud.
PointCloud rotate(const PointCloud& Y, const Matrix& P);

struct AlternatingResult {
  Matrix P;
  ot::Coupling coupling;
  bool coupling_converged = false;
  PointCloud mapped;
  std::vector<TraceEntry> trace;
};

/// Alternates Sinkhorn on the hyperbolic cost between X and P Y with
/// Procrustes updates of P under the annealing schedule. The rotation step
/// uses coupling weights scaled by the cost's slope in |x - P y|^2, which
/// majorizes the concave distance costs.
AlternatingResult alternating_baseline(const PointCloud& X, const PointCloud& Y,
                                       const MatchConfig& cfg,
                                       const Matrix* initial_rotation = nullptr);

/// Pretraining followed by annealed Sinkhorn-divergence minimization.
/// Throws NumericalError on a non-finite objective.
MatchResult train_registration(const PointCloud& X, const PointCloud& Y,
                               const MatchConfig& cfg);

/// For each source point, the k nearest labels of mappedY (ties broken by
/// label). k is truncated to the target size.
std::vector<RankedList> extract_matching(const PointCloud& X, const PointCloud& mappedY,
                                         int k,
                                         RetrievalMetric metric = RetrievalMetric::poincare);

/// Percentage of truth pairs whose target is among the first k candidates of
/// its source. Sources without a list count as misses.
double precision_at_k(const std::vector<RankedList>& lists,
                      const std::vector<std::pair<std::string, std::string>>& truth, int k);

/// ||D_X - D_Y||_F / ||D_X||_F over Poincare distance matrices, Y aligned to X
/// by label. Throws std::invalid_argument listing up to 10 unmatched labels.
double distance_matrix_discrepancy(const PointCloud& X, const PointCloud& Y);

}  // namespace hypalign::pipeline
