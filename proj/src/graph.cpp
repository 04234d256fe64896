#include "gtca/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gtca/errors.hpp"

namespace gtca {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  return in;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Tensor Graph::dense_adjacency() const {
  Tensor a(num_nodes, num_nodes);
  for (auto [i, j] : edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

Graph make_graph(std::size_t num_nodes, std::vector<Edge> edges, Tensor features, std::vector<int> labels) {
  if (features.rows() != num_nodes)
    throw ValidationError("features have " + std::to_string(features.rows()) + " rows for " +
                          std::to_string(num_nodes) + " nodes");
  if (!labels.empty() && labels.size() != num_nodes)
    throw ValidationError("labels have " + std::to_string(labels.size()) + " entries for " +
                          std::to_string(num_nodes) + " nodes");
  Graph g;
  g.num_nodes = num_nodes;
  std::vector<Edge> canon;
  canon.reserve(edges.size());
  for (auto [i, j] : edges) {
    if (i >= num_nodes || j >= num_nodes)
      throw ValidationError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range for " +
                            std::to_string(num_nodes) + " nodes");
    if (i == j) continue;
    canon.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
  g.edges = std::move(canon);
  g.adjacency.assign(num_nodes, {});
  for (auto [i, j] : g.edges) {
    g.adjacency[i].push_back(j);
    g.adjacency[j].push_back(i);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  g.features = std::move(features);
  if (!labels.empty()) {
    int top = -1;
    for (int l : labels) {
      if (l < 0) throw ValidationError("negative label " + std::to_string(l));
      top = std::max(top, l);
    }
    g.num_classes = static_cast<std::size_t>(top + 1);
  }
  g.labels = std::move(labels);
  return g;
}

SparseMatrix normalize_adjacency(const std::vector<std::vector<std::size_t>>& adjacency) {
  const std::size_t n = adjacency.size();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adjacency[i].size() + 1));

  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_offsets.reserve(n + 1);
  m.row_offsets.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> cols = adjacency[i];
    cols.push_back(i);
    std::sort(cols.begin(), cols.end());
    for (std::size_t j : cols) {
      m.col_indices.push_back(j);
      m.entries.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    m.row_offsets.push_back(m.col_indices.size());
  }
  return m;
}

Graph load_graph(const fs::path& feature_file, const fs::path& edge_file, const fs::path& label_file) {
  std::vector<double> values;
  std::size_t num_features = 0;
  std::size_t num_nodes = 0;
  {
    auto in = open_input(feature_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) {
        if (in.peek() == EOF) break;
        throw ParseError(feature_file.string(), lineno, "empty feature row");
      }
      if (num_nodes == 0) num_features = toks.size();
      if (toks.size() != num_features)
        throw ParseError(feature_file.string(), lineno,
                         "expected " + std::to_string(num_features) + " values, got " + std::to_string(toks.size()));
      for (auto tok : toks) {
        double v;
        if (!parse_number(tok, v) || !std::isfinite(v))
          throw ParseError(feature_file.string(), lineno, "bad number '" + std::string(tok) + "'");
        values.push_back(v);
      }
      ++num_nodes;
    }
  }

  std::vector<Edge> edges;
  {
    auto in = open_input(edge_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      std::size_t i, j;
      if (toks.size() != 2 || !parse_number(toks[0], i) || !parse_number(toks[1], j))
        throw ParseError(edge_file.string(), lineno, "expected two node indices");
      if (i >= num_nodes || j >= num_nodes)
        throw ValidationError(edge_file.string() + ":" + std::to_string(lineno) + ": node index out of range (N=" +
                              std::to_string(num_nodes) + ")");
      edges.emplace_back(i, j);
    }
  }

  std::vector<int> labels;
  if (!label_file.empty()) {
    auto in = open_input(label_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto toks = split_ws(line);
      if (toks.empty()) continue;
      int l;
      if (toks.size() != 1 || !parse_number(toks[0], l) || l < 0)
        throw ParseError(label_file.string(), lineno, "expected one non-negative integer label");
      labels.push_back(l);
    }
    if (labels.size() != num_nodes)
      throw ValidationError(label_file.string() + ": " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(num_nodes) + " nodes");
  }
  return make_graph(num_nodes, std::move(edges), Tensor(num_nodes, num_features, std::move(values)), std::move(labels));
}

Graph load_graph_header(const fs::path& header_file) {
  nlohmann::json h;
  {
    auto in = open_input(header_file);
    try {
      in >> h;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(header_file.string(), 0, e.what());
    }
  }
  const fs::path base = header_file.parent_path();
  auto file = [&](const char* key) -> fs::path {
    if (!h.contains(key) || !h[key].is_string()) throw ValidationError(header_file.string() + ": missing '" + key + "'");
    return base / h[key].get<std::string>();
  };
  fs::path labels;
  if (h.contains("labels") && !h["labels"].is_null()) labels = file("labels");
  Graph g = load_graph(file("features"), file("edges"), labels);
  auto check = [&](const char* key, std::size_t actual) {
    if (h.contains(key) && h[key].get<std::size_t>() != actual)
      throw ValidationError(header_file.string() + ": " + key + " = " + std::to_string(h[key].get<std::size_t>()) +
                            " but files give " + std::to_string(actual));
  };
  check("num_nodes", g.num_nodes);
  check("num_features", g.num_features());
  if (h.contains("num_classes") && g.has_labels()) {
    const auto c = h["num_classes"].get<std::size_t>();
    if (c < g.num_classes) throw ValidationError(header_file.string() + ": labels exceed num_classes");
    g.num_classes = c;
  }
  return g;
}

fs::path save_graph(const Graph& g, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  const std::string feat = stem + ".features.txt";
  const std::string edge = stem + ".edges.txt";
  const std::string lab = stem + ".labels.txt";
  {
    std::ofstream out(dir / feat);
    for (std::size_t r = 0; r < g.num_nodes; ++r) {
      auto row = g.features.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << format_double(row[c]);
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / edge);
    for (auto [i, j] : g.edges) out << i << ' ' << j << '\n';
  }
  nlohmann::json h = {{"num_nodes", g.num_nodes},
                      {"num_features", g.num_features()},
                      {"num_edges_directed", g.directed_edge_count()},
                      {"features", feat},
                      {"edges", edge}};
  if (g.has_labels()) {
    std::ofstream out(dir / lab);
    for (int l : g.labels) out << l << '\n';
    h["labels"] = lab;
    h["num_classes"] = g.num_classes;
  }
  const fs::path header = dir / (stem + ".json");
  std::ofstream(header) << h.dump(2) << '\n';
  return header;
}

Graph generate_sbm(const SbmParams& p) {
  if (p.block_sizes.empty()) throw ValidationError("sbm: no blocks");
  for (std::size_t s : p.block_sizes)
    if (s == 0) throw ValidationError("sbm: block sizes must be positive");
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0) || !(p.p_out >= 0.0 && p.p_out <= 1.0))
    throw ValidationError("sbm: probabilities must lie in [0, 1]");
  if (p.feature_dim == 0) throw ValidationError("sbm: feature_dim must be positive");

  std::vector<int> block;
  for (std::size_t b = 0; b < p.block_sizes.size(); ++b) block.insert(block.end(), p.block_sizes[b], static_cast<int>(b));
  const std::size_t n = block.size();

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double prob = block[i] == block[j] ? p.p_in : p.p_out;
      if (coin(rng) < prob) edges.emplace_back(i, j);
    }

  std::normal_distribution<double> noise(0.0, 1.0);
  const double offset = p.feature_shift / std::sqrt(2.0);
  Tensor x(n, p.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < p.feature_dim; ++c) x(i, c) = noise(rng);
    x(i, static_cast<std::size_t>(block[i]) % p.feature_dim) += offset;
  }
  Graph g = make_graph(n, std::move(edges), std::move(x), block);
  g.num_classes = p.block_sizes.size();
  return g;
}

SplitSet make_splits(const Graph& g, std::size_t train_per_class, ValSpec val, std::uint64_t seed) {
  if (!g.has_labels()) throw ValidationError("splits: graph has no labels");
  std::vector<std::vector<std::size_t>> by_class(g.num_classes);
  for (std::size_t i = 0; i < g.num_nodes; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);

  std::mt19937_64 rng(seed);
  SplitSet s;
  s.seed = seed;
  std::vector<std::size_t> rest;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    std::size_t need = train_per_class + (val.kind == ValSpec::Kind::kPerClass ? val.count : 0);
    if (members.size() < need)
      throw ValidationError("splits: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                            " nodes, needs " + std::to_string(need));
    std::shuffle(members.begin(), members.end(), rng);
    auto it = members.begin();
    s.train.insert(s.train.end(), it, it + static_cast<std::ptrdiff_t>(train_per_class));
    it += static_cast<std::ptrdiff_t>(train_per_class);
    if (val.kind == ValSpec::Kind::kPerClass) {
      s.val.insert(s.val.end(), it, it + static_cast<std::ptrdiff_t>(val.count));
      it += static_cast<std::ptrdiff_t>(val.count);
    }
    rest.insert(rest.end(), it, members.end());
  }
  if (val.kind == ValSpec::Kind::kTotal) {
    if (rest.size() < val.count)
      throw ValidationError("splits: only " + std::to_string(rest.size()) + " nodes left for " +
                            std::to_string(val.count) + " validation nodes");
    std::sort(rest.begin(), rest.end());
    std::shuffle(rest.begin(), rest.end(), rng);
    s.val.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val.count));
    rest.erase(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(val.count));
  }
  s.test = std::move(rest);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<SplitSet> make_split_family(const Graph& g, std::size_t train_per_class, ValSpec val, std::size_t count,
                                        std::uint64_t first_seed) {
  std::vector<SplitSet> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_splits(g, train_per_class, val, first_seed + i));
  return out;
}

}  // namespace gtca
