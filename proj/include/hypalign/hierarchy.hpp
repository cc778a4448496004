#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hypalign {

/// Directed is-a edge: child is a subconcept of parent.
struct Edge {
  std::size_t child = 0;
  std::size_t parent = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Node labels plus a deduplicated, sorted set of is-a edges.
class Hierarchy {
 public:
  Hierarchy() = default;
  /// Throws std::invalid_argument on out-of-range indices, self-loops or
  /// duplicate labels. Duplicate edges are dropped.
  Hierarchy(std::vector<std::string> labels, std::vector<Edge> edges);

  /// Builds a hierarchy from (child, parent) label pairs; nodes are numbered in
  /// order of first appearance.
  static Hierarchy from_label_pairs(
      const std::vector<std::pair<std::string, std::string>>& pairs);

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return labels_.size(); }

  /// Index of a label, or size() when absent.
  std::size_t index_of(const std::string& label) const;

  bool has_edge(std::size_t child, std::size_t parent) const;

  /// Parents of every node, each list ascending.
  std::vector<std::vector<std::size_t>> parent_lists() const;

 private:
  std::vector<std::string> labels_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Thrown when the edge set contains a directed cycle.
class CycleError : public std::invalid_argument {
 public:
  CycleError(const std::string& node)
      : std::invalid_argument("cycle detected through node '" + node + "'"),
        node_(node) {}
  const std::string& node() const { return node_; }

 private:
  std::string node_;
};

/// Closure of the is-a relation under composition. Throws CycleError.
Hierarchy transitive_closure(const Hierarchy& h);

/// Symmetric relatedness lookup used to exclude positives from negatives.
class NegativeSampler {
 public:
  explicit NegativeSampler(const Hierarchy& h);

  /// k nodes v' != u with neither (u, v') nor (v', u) in the relation set,
  /// drawn uniformly with replacement. Throws std::invalid_argument when u is
  /// related to every other node or k < 1.
  std::vector<std::size_t> sample(std::size_t u, int k, std::mt19937_64& rng) const;

  /// Number of admissible negatives for u.
  std::size_t eligible_count(std::size_t u) const;

 private:
  bool related(std::size_t u, std::size_t v) const;

  std::size_t n_ = 0;
  // related_[u] is sorted and contains u itself.
  std::vector<std::vector<std::size_t>> related_;
};

std::vector<std::size_t> sample_negatives(std::size_t u, const Hierarchy& h, int k,
                                          std::mt19937_64& rng);

/// Validates that h is a rooted tree and returns the root index. Throws
/// std::invalid_argument otherwise.
std::size_t tree_root(const Hierarchy& h);

/// Removes each non-root node independently with probability p and splices
/// its children onto its nearest surviving ancestor. Survivors keep their
/// labels and relative order.
Hierarchy perturb_hierarchy(const Hierarchy& h, double p, std::mt19937_64& rng);

/// Complete tree with the given branching factor and `depth` levels below the
/// root; labels "n0", "n1", ... in breadth-first order.
Hierarchy balanced_tree(int branching, int depth);

/// Random recursive tree: node i > 0 attaches to a uniform earlier node.
Hierarchy random_tree(std::size_t n, std::mt19937_64& rng);

}  // namespace hypalign
