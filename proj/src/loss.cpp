#include "gtca/loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtca/errors.hpp"

namespace gtca {

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau_cl", "contrastive temperature must be positive");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

double log_sum_exp(const std::vector<double>& xs) {
  const double peak = *std::max_element(xs.begin(), xs.end());
  double total = 0.0;
  for (double x : xs) total += std::exp(x - peak);
  return peak + std::log(total);
}

}  // namespace

double node_loss(std::size_t i, const Tensor& theta_normalized, const Tensor& phi_normalized,
                 const std::vector<std::size_t>& positives, double tau, AnchorView anchor) {
  LossConfig{tau}.validate();
  const Tensor& same = anchor == AnchorView::kTheta ? theta_normalized : phi_normalized;
  const Tensor& other = anchor == AnchorView::kTheta ? phi_normalized : theta_normalized;
  const auto h = same.row(i);

  std::vector<double> numer{dot(h, other.row(i)) / tau};
  for (std::size_t j : positives) {
    numer.push_back(dot(h, same.row(j)) / tau);
    numer.push_back(dot(h, other.row(j)) / tau);
  }
  std::vector<double> denom{dot(h, other.row(i)) / tau};
  for (std::size_t j = 0; j < same.rows(); ++j) {
    if (j == i) continue;
    denom.push_back(dot(h, same.row(j)) / tau);
    denom.push_back(dot(h, other.row(j)) / tau);
  }
  if (numer.size() == denom.size()) return 0.0;
  return log_sum_exp(denom) - log_sum_exp(numer);
}

LossTerms contrastive_loss(Var h_theta, Var h_phi, const IndexSets& positives, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = h_theta.rows();
  if (h_phi.rows() != n || h_phi.cols() != h_theta.cols()) throw ShapeError("contrastive_loss: view shapes differ");
  if (positives.size() != n) throw ShapeError("contrastive_loss: positive sets do not cover every node");

  // Columns [0, n) hold same-view similarities, [n, 2n) cross-view ones.
  Mask numer(n, 2 * n), denom(n, 2 * n, true);
  for (std::size_t i = 0; i < n; ++i) {
    denom.set(i, i, false);
    numer.set(i, n + i);
    for (std::size_t j : positives[i]) {
      if (j == i) throw ValidationError("contrastive_loss: node " + std::to_string(i) + " is its own positive");
      numer.set(i, j);
      numer.set(i, n + j);
    }
  }

  Var zt = row_l2_normalize(h_theta);
  Var zp = row_l2_normalize(h_phi);
  const double inv_tau = 1.0 / cfg.tau;
  Var s_tt = scale(matmul(zt, transpose(zt)), inv_tau);
  Var s_pp = scale(matmul(zp, transpose(zp)), inv_tau);
  Var s_tp = scale(matmul(zt, transpose(zp)), inv_tau);
  Var s_pt = transpose(s_tp);

  Var logits_t = hconcat(s_tt, s_tp);
  Var logits_p = hconcat(s_pp, s_pt);
  LossTerms out;
  out.theta_terms = sub(masked_row_logsumexp(logits_t, denom), masked_row_logsumexp(logits_t, numer));
  out.phi_terms = sub(masked_row_logsumexp(logits_p, denom), masked_row_logsumexp(logits_p, numer));
  out.total = scale(add(sum(out.theta_terms), sum(out.phi_terms)), 1.0 / (2.0 * static_cast<double>(n)));
  return out;
}

}  // namespace gtca
