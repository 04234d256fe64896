#include "gtca/sampling.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "gtca/errors.hpp"
#include "gtca/parallel.hpp"

namespace gtca {

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

IndexSets cosine_knn(const Tensor& embeddings, std::size_t k) {
  const std::size_t n = embeddings.rows();
  if (k >= n) throw ValidationError("cosine_knn: k = " + std::to_string(k) + " must be below N = " + std::to_string(n));

  RowMajor z = Eigen::Map<const RowMajor>(embeddings.data(), static_cast<Eigen::Index>(n),
                                          static_cast<Eigen::Index>(embeddings.cols()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double norm = z.row(r).norm();
    if (norm > 0.0) z.row(r) /= norm;
  }
  const RowMajor sim = z * z.transpose();

  IndexSets out(n);
  if (k == 0) return out;
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    const auto* row = sim.data() + i * n;
    auto better = [row](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), better);
    order.resize(k);
    std::sort(order.begin(), order.end());
    out[i] = std::move(order);
  });
  return out;
}

std::vector<std::size_t> hop_distances(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t source) {
  std::vector<std::size_t> dist(adjacency.size(), kUnreachable);
  std::deque<std::size_t> frontier{source};
  dist[source] = 0;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop_front();
    for (std::size_t w : adjacency[u]) {
      if (dist[w] != kUnreachable) continue;
      dist[w] = dist[u] + 1;
      frontier.push_back(w);
    }
  }
  return dist;
}

IndexSets topological_knn(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t k) {
  const std::size_t n = adjacency.size();
  if (k >= n)
    throw ValidationError("topological_knn: k = " + std::to_string(k) + " must be below N = " + std::to_string(n));
  IndexSets out(n);
  parallel_for(n, [&](std::size_t i) {
    const auto dist = hop_distances(adjacency, i);
    std::vector<std::size_t> reach;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && dist[j] != kUnreachable) reach.push_back(j);
    auto closer = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    const std::size_t take = std::min(k, reach.size());
    std::partial_sort(reach.begin(), reach.begin() + static_cast<std::ptrdiff_t>(take), reach.end(), closer);
    reach.resize(take);
    std::sort(reach.begin(), reach.end());
    out[i] = std::move(reach);
  });
  return out;
}

std::vector<std::size_t> intersect_sorted(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::vector<std::size_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::size_t> NeighborSets::negatives(std::size_t i) const {
  const auto& pos = positives[i];
  std::vector<std::size_t> out;
  out.reserve(num_nodes() - pos.size());
  std::size_t p = 0;
  for (std::size_t j = 0; j < num_nodes(); ++j) {
    if (p < pos.size() && pos[p] == j) {
      ++p;
      continue;
    }
    if (j != i) out.push_back(j);
  }
  return out;
}

std::size_t NeighborSets::total_positives() const {
  std::size_t total = 0;
  for (const auto& p : positives) total += p.size();
  return total;
}

NeighborSets build_pairs(IndexSets b_theta, IndexSets b_phi, IndexSets topology) {
  const std::size_t n = b_theta.size();
  if (b_phi.size() != n || topology.size() != n) throw ValidationError("build_pairs: views cover different node counts");
  NeighborSets s;
  s.positives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = intersect_sorted(intersect_sorted(b_theta[i], b_phi[i]), topology[i]);
    std::erase(p, i);
    s.positives[i] = std::move(p);
  }
  s.k = n ? std::max(b_theta[0].size(), b_phi[0].size()) : 0;
  s.b_theta = std::move(b_theta);
  s.b_phi = std::move(b_phi);
  s.topology = std::move(topology);
  return s;
}

NeighborSets build_pairs_without_topology(IndexSets b_theta, IndexSets b_phi) {
  const std::size_t n = b_theta.size();
  if (b_phi.size() != n) throw ValidationError("build_pairs: views cover different node counts");
  NeighborSets s;
  s.positives.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = intersect_sorted(b_theta[i], b_phi[i]);
    std::erase(p, i);
    s.positives[i] = std::move(p);
  }
  s.k = n ? std::max(b_theta[0].size(), b_phi[0].size()) : 0;
  s.b_theta = std::move(b_theta);
  s.b_phi = std::move(b_phi);
  return s;
}

std::optional<double> correct_ratio(const IndexSets& sets, const std::vector<int>& labels) {
  if (labels.size() < sets.size()) throw ValidationError("correct_ratio: missing labels");
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j : sets[i]) hits += labels[j] == labels[i];
    total += sets[i].size();
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace gtca
