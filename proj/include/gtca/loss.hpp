#pragma once

#include <cstddef>
#include <vector>

#include "gtca/autodiff.hpp"
#include "gtca/sampling.hpp"

namespace gtca {

struct LossConfig {
  double tau = 0.5;  // contrastive temperature

  // Throws ConfigError("tau_cl") unless tau > 0.
  void validate() const;
};

enum class AnchorView { kTheta, kPhi };

/// Multi-positive contrastive loss of node i anchored in one view.
///
/// Inputs are row-normalized embeddings, so similarity is a dot product. The
/// numerator holds the cross-view self pair plus both views of every node in
/// `positives`; the denominator holds the cross-view self pair plus both views
/// of every other node.
double node_loss(std::size_t i, const Tensor& theta_normalized, const Tensor& phi_normalized,
                 const std::vector<std::size_t>& positives, double tau, AnchorView anchor);

struct LossTerms {
  Var total;        // 1 x 1 mean over both views and all nodes
  Var theta_terms;  // N x 1, anchored in the theta view
  Var phi_terms;    // N x 1, anchored in the phi view
};

// Row-normalizes both embeddings on the tape, then evaluates every node term.
LossTerms contrastive_loss(Var h_theta, Var h_phi, const IndexSets& positives, const LossConfig& cfg);

inline Var total_loss(Var h_theta, Var h_phi, const IndexSets& positives, const LossConfig& cfg) {
  return contrastive_loss(h_theta, h_phi, positives, cfg).total;
}

}  // namespace gtca
