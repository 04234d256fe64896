#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "gtca/sparse.hpp"
#include "gtca/tensor.hpp"

namespace gtca {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected attributed graph.
///
/// `edges` holds each undirected edge once as (i, j) with i < j, sorted;
/// `adjacency` holds the symmetric neighbor lists, sorted. Self-loops are
/// never stored. `labels` is empty for unlabeled graphs.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> adjacency;
  Tensor features;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  bool has_labels() const noexcept { return !labels.empty(); }
  std::size_t num_features() const noexcept { return features.cols(); }
  // Each undirected edge counted in both directions.
  std::size_t directed_edge_count() const noexcept { return 2 * edges.size(); }
  Tensor dense_adjacency() const;
};

// Builds a graph from edges in any orientation. Duplicates collapse, self-loops
// are dropped. Throws ValidationError on out-of-range endpoints or labels.
Graph make_graph(std::size_t num_nodes, std::vector<Edge> edges, Tensor features, std::vector<int> labels = {});

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
SparseMatrix normalize_adjacency(const std::vector<std::vector<std::size_t>>& adjacency);
inline SparseMatrix normalize_adjacency(const Graph& g) { return normalize_adjacency(g.adjacency); }

// Plain-text dataset files. The node count is the number of feature rows.
// An empty label path loads an unlabeled graph.
Graph load_graph(const std::filesystem::path& feature_file, const std::filesystem::path& edge_file,
                 const std::filesystem::path& label_file = {});

// Loads through a JSON header naming the three files (relative to the header's
// directory) and recording num_nodes, num_features and num_classes.
Graph load_graph_header(const std::filesystem::path& header_file);

// Writes <stem>.features.txt, <stem>.edges.txt, <stem>.labels.txt and
// <stem>.json into `dir`; returns the header path.
std::filesystem::path save_graph(const Graph& g, const std::filesystem::path& dir, const std::string& stem);

struct SbmParams {
  std::vector<std::size_t> block_sizes{50, 50};
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  // Distance between the Gaussian feature means of any two blocks.
  double feature_shift = 1.0;
  std::uint64_t seed = 0;
};

// Stochastic block model. Block b's features are N(mu_b, I) with
// mu_b = (feature_shift / sqrt 2) * e_{b mod feature_dim}; labels are block ids.
Graph generate_sbm(const SbmParams& params);

struct ValSpec {
  enum class Kind { kTotal, kPerClass };
  Kind kind = Kind::kPerClass;
  std::size_t count = 30;

  static ValSpec total(std::size_t n) { return {Kind::kTotal, n}; }
  static ValSpec per_class(std::size_t n) { return {Kind::kPerClass, n}; }
};

struct SplitSet {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

// Random per-class train nodes, validation per `val`, the rest test.
SplitSet make_splits(const Graph& g, std::size_t train_per_class, ValSpec val, std::uint64_t seed);

// Splits for seeds first_seed .. first_seed + count - 1.
std::vector<SplitSet> make_split_family(const Graph& g, std::size_t train_per_class, ValSpec val,
                                        std::size_t count, std::uint64_t first_seed = 0);

}  // namespace gtca
