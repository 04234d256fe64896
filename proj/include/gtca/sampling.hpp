#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "gtca/tensor.hpp"

namespace gtca {

// Per-node index sets, each sorted ascending.
using IndexSets = std::vector<std::vector<std::size_t>>;

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

// For each node, the k other nodes of highest cosine similarity; ties go to
// the smaller index. Zero rows have similarity 0 to everything.
// Throws ValidationError when k >= N.
IndexSets cosine_knn(const Tensor& embeddings, std::size_t k);

// BFS hop counts from `source`; kUnreachable for other components.
std::vector<std::size_t> hop_distances(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t source);

// First k reachable nodes ordered by (hops, index), self excluded. Fewer than
// k when the component is small.
IndexSets topological_knn(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t k);

/// Neighbor views of every node and the positives/negatives derived from them.
///
/// positives[i] = b_theta[i] & b_phi[i] & topology[i]; the negatives of i are
/// every other node, i.e. V \ (positives[i] + {i}).
struct NeighborSets {
  std::size_t k = 0;
  IndexSets b_theta;
  IndexSets b_phi;
  IndexSets topology;  // empty when built without the topology view
  IndexSets positives;

  std::size_t num_nodes() const noexcept { return positives.size(); }
  std::vector<std::size_t> negatives(std::size_t i) const;
  std::size_t total_positives() const;
};

std::vector<std::size_t> intersect_sorted(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

NeighborSets build_pairs(IndexSets b_theta, IndexSets b_phi, IndexSets topology);
// Positives from the two embedding views only.
NeighborSets build_pairs_without_topology(IndexSets b_theta, IndexSets b_phi);

// Fraction of (i, j in sets[i]) pairs with equal labels; nullopt when every
// set is empty.
std::optional<double> correct_ratio(const IndexSets& sets, const std::vector<int>& labels);
inline std::optional<double> positive_correct_ratio(const NeighborSets& s, const std::vector<int>& labels) {
  return correct_ratio(s.positives, labels);
}

}  // namespace gtca
