#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gtca/autodiff.hpp"
#include "gtca/init.hpp"

namespace gtca {

/// Positive random features for the softmax kernel.
///
/// phi(u) = exp(W u - |u|^2 / 2) / sqrt(m), with W an m x d matrix of
/// standard Gaussians drawn from `seed`. E[phi(x) . phi(y)] = exp(x . y).
class RandomFeatureMap {
 public:
  RandomFeatureMap(std::size_t dim, std::size_t num_features, std::uint64_t seed);

  std::size_t dim() const noexcept { return projection_.cols(); }
  std::size_t num_features() const noexcept { return projection_.rows(); }
  const Tensor& projection() const noexcept { return projection_; }

  // phi(v / sqrt(tau)).
  std::vector<double> apply(std::span<const double> v, double tau) const;

 private:
  Tensor projection_;  // m x d
};

std::vector<double> kernel_features(std::span<const double> v, std::uint64_t seed, std::size_t m, double tau);

/// Per-node, per-layer Gumbel(0, 1) perturbations. Eval draws are all zero.
struct GumbelDraw {
  Mode mode = Mode::kEval;
  std::vector<Tensor> per_layer;  // each N x 1

  static GumbelDraw none(std::size_t num_nodes, std::size_t layers);
  static GumbelDraw sample(std::size_t num_nodes, std::size_t layers, Rng& rng);
};

struct AttentionDiagnostics {
  std::size_t denominator_clamps = 0;
};

// One kernelized attention layer over all nodes in O(N m d):
// h'_i = sum_j w_ij v_j, w_ij proportional to phi(q_i)^T phi(k_j) exp(g_j / tau).
// `gumbel` is an N x 1 column of g_j, or null for g = 0.
Var attention_layer(Var h, Var wq, Var wk, Var wv, const RandomFeatureMap& map, double tau, const Tensor* gumbel,
                    AttentionDiagnostics* diag = nullptr);

// Explicit N x N attention weights for queries/keys (rows of q and k).
Tensor attention_weights(const Tensor& q, const Tensor& k, const RandomFeatureMap& map, double tau,
                         const Tensor* gumbel = nullptr);

struct AttentionLayerParams {
  Tensor wq, wk, wv;  // d x d
};

struct AttnParams {
  Tensor w_in;  // F x d
  std::vector<AttentionLayerParams> layers;
  Tensor w_out;  // d x E
  std::uint64_t feature_seed = 0;
  std::size_t num_random_features = 64;
  double tau = 0.25;
};

struct AttentionConfig {
  std::size_t in_dim = 0;
  std::size_t model_dim = 0;
  std::size_t out_dim = 0;
  std::size_t layers = 2;
  std::size_t num_random_features = 64;
  double tau = 0.25;
  std::uint64_t seed = 0;
};

AttnParams init_attention(const AttentionConfig& cfg);

/// Linear-attention view encoder: input projection, attention layers with
/// relu between them, output head.
class AttentionEncoder {
 public:
  explicit AttentionEncoder(const AttentionConfig& cfg);

  std::vector<Var> bind(Tape& tape) const;
  // Train mode samples fresh Gumbel noise from rng; eval mode uses none.
  Var forward(Var x, std::span<const Var> bound, Mode mode, Rng& rng, AttentionDiagnostics* diag = nullptr) const;
  Var forward(Var x, std::span<const Var> bound, const GumbelDraw& draw, AttentionDiagnostics* diag = nullptr) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  const AttnParams& params() const noexcept { return params_; }
  const std::vector<RandomFeatureMap>& feature_maps() const noexcept { return maps_; }
  std::size_t layers() const noexcept { return params_.layers.size(); }

 private:
  AttnParams params_;
  std::vector<RandomFeatureMap> maps_;
};

// Eval-mode convenience: H_phi for fixed parameters, no noise.
Tensor nodeformer_forward(const Tensor& x, const AttentionEncoder& encoder);

}  // namespace gtca
