#include "gtca/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtca/errors.hpp"

namespace gtca {

RandomFeatureMap::RandomFeatureMap(std::size_t dim, std::size_t num_features, std::uint64_t seed)
    : projection_(num_features, dim) {
  if (num_features == 0) throw ValidationError("random features: m must be at least 1");
  Rng rng = make_rng(seed, 0x7266);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& w : projection_.values()) w = normal(rng);
}

std::vector<double> RandomFeatureMap::apply(std::span<const double> v, double tau) const {
  if (v.size() != dim()) throw ShapeError("random features: input has wrong dimension");
  const double inv = 1.0 / std::sqrt(tau);
  double sq = 0.0;
  for (double x : v) sq += (x * inv) * (x * inv);
  const double norm = 1.0 / std::sqrt(static_cast<double>(num_features()));
  std::vector<double> out(num_features());
  for (std::size_t r = 0; r < num_features(); ++r) {
    double dot = 0.0;
    auto w = projection_.row(r);
    for (std::size_t c = 0; c < v.size(); ++c) dot += w[c] * v[c] * inv;
    out[r] = std::exp(dot - 0.5 * sq) * norm;
  }
  return out;
}

std::vector<double> kernel_features(std::span<const double> v, std::uint64_t seed, std::size_t m, double tau) {
  return RandomFeatureMap(v.size(), m, seed).apply(v, tau);
}

GumbelDraw GumbelDraw::none(std::size_t num_nodes, std::size_t layers) {
  GumbelDraw d;
  d.mode = Mode::kEval;
  d.per_layer.assign(layers, Tensor(num_nodes, 1));
  return d;
}

GumbelDraw GumbelDraw::sample(std::size_t num_nodes, std::size_t layers, Rng& rng) {
  GumbelDraw d;
  d.mode = Mode::kTrain;
  std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor g(num_nodes, 1);
    for (double& v : g.values()) v = -std::log(-std::log(unif(rng)));
    d.per_layer.push_back(std::move(g));
  }
  return d;
}

namespace {

// Exponent of the random features, W u - |u|^2/2 with u = x / sqrt(tau).
Var feature_exponent(Var x, Var projection_t, double tau) {
  Var u = scale(x, 1.0 / std::sqrt(tau));
  return add_col(matmul(u, projection_t), scale(row_sqnorm(u), -0.5));
}

}  // namespace

Var attention_layer(Var h, Var wq, Var wk, Var wv, const RandomFeatureMap& map, double tau, const Tensor* gumbel,
                    AttentionDiagnostics* diag) {
  if (!(tau > 0.0)) throw ValidationError("attention: tau must be positive");
  Tape& tape = h.tape();
  const std::size_t n = h.rows();
  const std::size_t m = map.num_features();
  Var q = matmul(h, wq);
  Var k = matmul(h, wk);
  Var v = matmul(h, wv);
  if (q.cols() != map.dim()) throw ShapeError("attention: projection width does not match feature map");

  Var proj_t = tape.constant(map.projection().transposed());
  Var eq = feature_exponent(q, proj_t, tau);
  Var ek = feature_exponent(k, proj_t, tau);
  if (gumbel) {
    if (gumbel->rows() != n || gumbel->cols() != 1) throw ShapeError("attention: gumbel draw must be N x 1");
    Tensor g = *gumbel;
    for (double& x : g.values()) x /= tau;
    ek = add_col(ek, tape.constant(std::move(g)));
  }

  // Shifting each query row, and all keys by one constant, cancels in the
  // normalized weights; it only keeps exp() in range.
  {
    const Tensor& qv = eq.value();
    Tensor shift(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = qv.row(i);
      shift[i] = -*std::max_element(row.begin(), row.end());
    }
    eq = add_col(eq, tape.constant(std::move(shift)));
    const auto kv = ek.value().values();
    const double kmax = *std::max_element(kv.begin(), kv.end());
    ek = add_col(ek, tape.constant(Tensor(n, 1, -kmax)));
  }

  const double norm = 1.0 / std::sqrt(static_cast<double>(m));
  Var fq = scale(exp(eq), norm);
  Var fk = scale(exp(ek), norm);

  Var key_value = matmul(transpose(fk), v);  // m x d
  Var key_sum = transpose(col_sums(fk));     // m x 1
  Var numer = matmul(fq, key_value);
  Var denom = matmul(fq, key_sum);
  return div_rows(numer, denom, diag ? &diag->denominator_clamps : nullptr);
}

Tensor attention_weights(const Tensor& q, const Tensor& k, const RandomFeatureMap& map, double tau,
                         const Tensor* gumbel) {
  const std::size_t n = q.rows();
  std::vector<std::vector<double>> fq(n), fk(k.rows());
  for (std::size_t i = 0; i < n; ++i) fq[i] = map.apply(q.row(i), tau);
  for (std::size_t j = 0; j < k.rows(); ++j) fk[j] = map.apply(k.row(j), tau);
  Tensor w(n, k.rows());
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t r = 0; r < map.num_features(); ++r) dot += fq[i][r] * fk[j][r];
      if (gumbel) dot *= std::exp((*gumbel)[j] / tau);
      w(i, j) = dot;
      total += dot;
    }
    for (std::size_t j = 0; j < k.rows(); ++j) w(i, j) /= std::max(total, kDenominatorFloor);
  }
  return w;
}

AttnParams init_attention(const AttentionConfig& cfg) {
  if (cfg.num_random_features == 0) throw ValidationError("attention: m must be at least 1");
  if (!(cfg.tau > 0.0)) throw ValidationError("attention: tau must be positive");
  Rng rng = make_rng(cfg.seed, 0x6174);
  AttnParams p;
  p.w_in = glorot_uniform(cfg.in_dim, cfg.model_dim, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    AttentionLayerParams layer;
    layer.wq = glorot_uniform(cfg.model_dim, cfg.model_dim, rng);
    layer.wk = glorot_uniform(cfg.model_dim, cfg.model_dim, rng);
    layer.wv = glorot_uniform(cfg.model_dim, cfg.model_dim, rng);
    p.layers.push_back(std::move(layer));
  }
  p.w_out = glorot_uniform(cfg.model_dim, cfg.out_dim, rng);
  p.feature_seed = cfg.seed;
  p.num_random_features = cfg.num_random_features;
  p.tau = cfg.tau;
  return p;
}

AttentionEncoder::AttentionEncoder(const AttentionConfig& cfg) : params_(init_attention(cfg)) {
  for (std::size_t l = 0; l < cfg.layers; ++l)
    maps_.emplace_back(cfg.model_dim, cfg.num_random_features, cfg.seed * 1000003ULL + l + 1);
}

std::vector<Tensor*> AttentionEncoder::parameters() {
  std::vector<Tensor*> out{&params_.w_in};
  for (auto& l : params_.layers) {
    out.push_back(&l.wq);
    out.push_back(&l.wk);
    out.push_back(&l.wv);
  }
  out.push_back(&params_.w_out);
  return out;
}

std::vector<const Tensor*> AttentionEncoder::parameters() const {
  auto mut = const_cast<AttentionEncoder*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> AttentionEncoder::parameter_names() const {
  std::vector<std::string> names{"w_in"};
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    names.push_back(p + "wq");
    names.push_back(p + "wk");
    names.push_back(p + "wv");
  }
  names.push_back("w_out");
  return names;
}

std::vector<Var> AttentionEncoder::bind(Tape& tape) const {
  std::vector<Var> out;
  for (const Tensor* t : parameters()) out.push_back(tape.parameter(*t));
  return out;
}

Var AttentionEncoder::forward(Var x, std::span<const Var> bound, Mode mode, Rng& rng,
                              AttentionDiagnostics* diag) const {
  const GumbelDraw draw =
      mode == Mode::kTrain ? GumbelDraw::sample(x.rows(), layers(), rng) : GumbelDraw::none(x.rows(), layers());
  return forward(x, bound, draw, diag);
}

Var AttentionEncoder::forward(Var x, std::span<const Var> bound, const GumbelDraw& draw,
                              AttentionDiagnostics* diag) const {
  if (bound.size() != 2 + 3 * layers()) throw ContractError("attention encoder: wrong number of bound parameters");
  if (draw.per_layer.size() != layers()) throw ContractError("attention encoder: gumbel draw has wrong layer count");
  Var h = matmul(x, bound[0]);
  for (std::size_t l = 0; l < layers(); ++l) {
    const Tensor* g = draw.mode == Mode::kTrain ? &draw.per_layer[l] : nullptr;
    h = attention_layer(h, bound[1 + 3 * l], bound[2 + 3 * l], bound[3 + 3 * l], maps_[l], params_.tau, g, diag);
    if (l + 1 < layers()) h = relu(h);
  }
  return matmul(h, bound.back());
}

Tensor nodeformer_forward(const Tensor& x, const AttentionEncoder& encoder) {
  Tape tape;
  std::vector<Var> bound;
  for (const Tensor* t : encoder.parameters()) bound.push_back(tape.constant(*t));
  return encoder.forward(tape.constant(x), bound, GumbelDraw::none(x.rows(), encoder.layers())).value();
}

}  // namespace gtca
