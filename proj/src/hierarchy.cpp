#include "hypalign/hierarchy.hpp"

#include <algorithm>
#include <deque>
#include <iterator>
#include <stdexcept>

namespace hypalign {

Hierarchy::Hierarchy(std::vector<std::string> labels, std::vector<Edge> edges)
    : labels_(std::move(labels)), edges_(std::move(edges)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) {
      throw std::invalid_argument("duplicate node label '" + labels_[i] + "'");
    }
  }
  for (const auto& e : edges_) {
    if (e.child >= labels_.size() || e.parent >= labels_.size()) {
      throw std::invalid_argument("edge index out of range");
    }
    if (e.child == e.parent) {
      throw std::invalid_argument("self-loop on node '" + labels_[e.child] + "'");
    }
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
}

Hierarchy Hierarchy::from_label_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<std::string> labels;
  std::unordered_map<std::string, std::size_t> index;
  auto id = [&](const std::string& label) {
    auto [it, inserted] = index.emplace(label, labels.size());
    if (inserted) labels.push_back(label);
    return it->second;
  };
  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  for (const auto& [child, parent] : pairs) {
    const std::size_t c = id(child);
    const std::size_t p = id(parent);
    edges.push_back({c, p});
  }
  return Hierarchy(std::move(labels), std::move(edges));
}

std::size_t Hierarchy::index_of(const std::string& label) const {
  auto it = index_.find(label);
  return it == index_.end() ? labels_.size() : it->second;
}

bool Hierarchy::has_edge(std::size_t child, std::size_t parent) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{child, parent});
}

std::vector<std::vector<std::size_t>> Hierarchy::parent_lists() const {
  std::vector<std::vector<std::size_t>> parents(labels_.size());
  for (const auto& e : edges_) parents[e.child].push_back(e.parent);
  return parents;
}

namespace {

// Nodes ordered so that every parent precedes its children.
std::vector<std::size_t> parents_first_order(const Hierarchy& h) {
  const auto parents = h.parent_lists();
  std::vector<std::vector<std::size_t>> children(h.size());
  std::vector<std::size_t> pending(h.size(), 0);
  for (const auto& e : h.edges()) {
    children[e.parent].push_back(e.child);
    ++pending[e.child];
  }
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (pending[i] == 0) ready.push_back(i);
  }
  std::vector<std::size_t> order;
  order.reserve(h.size());
  while (!ready.empty()) {
    const std::size_t u = ready.front();
    ready.pop_front();
    order.push_back(u);
    for (std::size_t c : children[u]) {
      if (--pending[c] == 0) ready.push_back(c);
    }
  }
  if (order.size() == h.size()) return order;

  // Every unprocessed node has an unprocessed parent, so walking upwards
  // through unprocessed nodes must revisit one that lies on a cycle.
  std::vector<bool> done(h.size(), false);
  for (std::size_t u : order) done[u] = true;
  std::size_t u = 0;
  while (done[u]) ++u;
  std::vector<bool> seen(h.size(), false);
  while (!seen[u]) {
    seen[u] = true;
    for (std::size_t p : parents[u]) {
      if (!done[p]) {
        u = p;
        break;
      }
    }
  }
  throw CycleError(h.labels()[u]);
}

}  // namespace

Hierarchy transitive_closure(const Hierarchy& h) {
  const auto order = parents_first_order(h);
  const auto parents = h.parent_lists();
  std::vector<std::vector<std::size_t>> ancestors(h.size());
  for (std::size_t u : order) {
    std::vector<std::size_t> acc;
    for (std::size_t p : parents[u]) {
      std::vector<std::size_t> merged;
      merged.reserve(acc.size() + ancestors[p].size() + 1);
      std::set_union(acc.begin(), acc.end(), ancestors[p].begin(),
                     ancestors[p].end(), std::back_inserter(merged));
      auto pos = std::lower_bound(merged.begin(), merged.end(), p);
      if (pos == merged.end() || *pos != p) merged.insert(pos, p);
      acc = std::move(merged);
    }
    ancestors[u] = std::move(acc);
  }
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < h.size(); ++u) {
    for (std::size_t a : ancestors[u]) edges.push_back({u, a});
  }
  return Hierarchy(h.labels(), std::move(edges));
}

NegativeSampler::NegativeSampler(const Hierarchy& h)
    : n_(h.size()), related_(h.size()) {
  for (std::size_t u = 0; u < n_; ++u) related_[u].push_back(u);
  for (const auto& e : h.edges()) {
    related_[e.child].push_back(e.parent);
    related_[e.parent].push_back(e.child);
  }
  for (auto& r : related_) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
  }
}

bool NegativeSampler::related(std::size_t u, std::size_t v) const {
  return std::binary_search(related_[u].begin(), related_[u].end(), v);
}

std::size_t NegativeSampler::eligible_count(std::size_t u) const {
  return n_ - related_.at(u).size();
}

std::vector<std::size_t> NegativeSampler::sample(std::size_t u, int k,
                                                 std::mt19937_64& rng) const {
  if (k < 1) throw std::invalid_argument("negatives_per_pair must be >= 1");
  if (u >= n_) throw std::invalid_argument("node index out of range");
  const std::size_t eligible = eligible_count(u);
  if (eligible == 0) {
    throw std::invalid_argument("node " + std::to_string(u) +
                                " is related to every other node; no negatives");
  }
  constexpr int kMaxAttempts = 100;
  std::uniform_int_distribution<std::size_t> any(0, n_ - 1);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const std::size_t v = any(rng);
      if (!related(u, v)) {
        out.push_back(v);
        accepted = true;
        break;
      }
    }
    if (accepted) continue;
    // Dense relation row: pick the j-th unrelated node directly.
    std::size_t j = std::uniform_int_distribution<std::size_t>(0, eligible - 1)(rng);
    for (std::size_t v = 0; v < n_; ++v) {
      if (related(u, v)) continue;
      if (j-- == 0) {
        out.push_back(v);
        break;
      }
    }
  }
  return out;
}

std::vector<std::size_t> sample_negatives(std::size_t u, const Hierarchy& h, int k,
                                          std::mt19937_64& rng) {
  return NegativeSampler(h).sample(u, k, rng);
}

std::size_t tree_root(const Hierarchy& h) {
  if (h.size() == 0) throw std::invalid_argument("empty hierarchy is not a tree");
  const auto parents = h.parent_lists();
  std::size_t root = h.size();
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (parents[u].size() > 1) {
      throw std::invalid_argument("not a tree: node '" + h.labels()[u] +
                                  "' has several parents");
    }
    if (parents[u].empty()) {
      if (root != h.size()) {
        throw std::invalid_argument("not a tree: several roots ('" +
                                    h.labels()[root] + "', '" + h.labels()[u] +
                                    "')");
      }
      root = u;
    }
  }
  if (root == h.size()) throw std::invalid_argument("not a tree: no root");
  parents_first_order(h);  // throws on cycles
  return root;
}

Hierarchy perturb_hierarchy(const Hierarchy& h, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("removal probability must lie in [0, 1)");
  }
  const std::size_t root = tree_root(h);
  const auto parents = h.parent_lists();

  std::bernoulli_distribution remove(p);
  std::vector<bool> keep(h.size(), true);
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (u != root) keep[u] = !remove(rng);
  }

  std::vector<std::size_t> new_index(h.size(), h.size());
  std::vector<std::string> labels;
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (!keep[u]) continue;
    new_index[u] = labels.size();
    labels.push_back(h.labels()[u]);
  }
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < h.size(); ++u) {
    if (!keep[u] || u == root) continue;
    std::size_t a = parents[u].front();
    while (!keep[a]) a = parents[a].front();
    edges.push_back({new_index[u], new_index[a]});
  }
  return Hierarchy(std::move(labels), std::move(edges));
}

Hierarchy balanced_tree(int branching, int depth) {
  if (branching < 1 || depth < 0) {
    throw std::invalid_argument("balanced_tree needs branching >= 1, depth >= 0");
  }
  std::vector<std::string> labels{"n0"};
  std::vector<Edge> edges;
  std::size_t level_begin = 0;
  std::size_t level_end = 1;
  for (int level = 0; level < depth; ++level) {
    for (std::size_t parent = level_begin; parent < level_end; ++parent) {
      for (int b = 0; b < branching; ++b) {
        edges.push_back({labels.size(), parent});
        labels.push_back("n" + std::to_string(labels.size()));
      }
    }
    level_begin = level_end;
    level_end = labels.size();
  }
  return Hierarchy(std::move(labels), std::move(edges));
}

Hierarchy random_tree(std::size_t n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("random_tree needs at least one node");
  std::vector<std::string> labels;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    labels.push_back("n" + std::to_string(i));
    if (i == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    edges.push_back({i, pick(rng)});
  }
  return Hierarchy(std::move(labels), std::move(edges));
}

}  // namespace hypalign
