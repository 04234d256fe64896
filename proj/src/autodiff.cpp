#include "gtca/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gtca/errors.hpp"

namespace gtca {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())}; }
MutMap view(Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())}; }

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

const Tensor& Gradients::of(Var leaf) const {
  auto it = std::lower_bound(leaf_ids_.begin(), leaf_ids_.end(), leaf.id());
  if (it == leaf_ids_.end() || *it != leaf.id())
    throw ContractError("gradients: node " + std::to_string(leaf.id()) + " is not a requires_grad leaf");
  return grads_[static_cast<std::size_t>(it - leaf_ids_.begin())];
}

bool Gradients::contains(Var leaf) const noexcept {
  return std::binary_search(leaf_ids_.begin(), leaf_ids_.end(), leaf.id());
}

bool GradAccumulator::wants(std::size_t id) const { return tape_.needs_grad(id); }

Tensor& GradAccumulator::slot(std::size_t id) {
  Tensor& g = grads_[id];
  if (g.empty() && tape_.value(id).size() != 0) g = Tensor(tape_.value(id).rows(), tape_.value(id).cols());
  return g;
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.needs_grad = value.requires_grad();
  n.is_leaf = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardRule rule) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (n.needs_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
  const Tensor& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractError("backward: loss must be a 1x1 scalar, got " + shape_str(lv));

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id()] = Tensor(1, 1, 1.0);
  GradAccumulator acc(*this, grads);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.is_leaf || !n.rule || grads[i].empty()) continue;
    n.rule(grads[i], acc);
    // Intermediate gradients are no longer needed once propagated.
    grads[i] = Tensor();
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (!n.is_leaf || !n.needs_grad) continue;
    out.leaf_ids_.push_back(i);
    out.grads_.push_back(grads[i].empty() ? Tensor(n.value.rows(), n.value.cols()) : std::move(grads[i]));
  }
  return out;
}

Var matmul(Var a, Var b) {
  same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul: inner dimensions " + shape_str(av) + " x " + shape_str(bv));
  Tensor out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [&tape, ia, ib](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)).noalias() += view(g) * view(tape.value(ib)).transpose();
    if (acc.wants(ib)) view(acc.slot(ib)).noalias() += view(tape.value(ia)).transpose() * view(g);
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().transposed(), {ia}, [ia](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)) += view(g).transpose();
  });
}

Var add(Var a, Var b) {
  same_tape(a, b, "add");
  same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  view(out) += view(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)) += view(g);
    if (acc.wants(ib)) view(acc.slot(ib)) += view(g);
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b, "sub");
  same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  view(out) -= view(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)) += view(g);
    if (acc.wants(ib)) view(acc.slot(ib)) -= view(g);
  });
}

Var hadamard(Var a, Var b) {
  same_tape(a, b, "hadamard");
  same_shape(a.value(), b.value(), "hadamard");
  Tensor out = a.value();
  view(out).array() *= view(b.value()).array();
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [&tape, ia, ib](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)).array() += view(g).array() * view(tape.value(ib)).array();
    if (acc.wants(ib)) view(acc.slot(ib)).array() += view(g).array() * view(tape.value(ia)).array();
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  view(out) *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia, factor](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)) += factor * view(g);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [&tape, ia](const Tensor& g, GradAccumulator& acc) {
    const Tensor& x = tape.value(ia);
    Tensor& slot = acc.slot(ia);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > 0.0) slot[i] += g[i];
  });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::exp(v);
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  return tape.record(std::move(out), {ia}, [&tape, ia, io](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)).array() += view(g).array() * view(tape.value(io)).array();
  });
}

Var sum(Var a) {
  Tensor out(1, 1, view(a.value()).sum());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)).array() += g[0];
  });
}

Var row_l2_normalize(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  std::vector<double> norms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (double v : x.row(r)) sq += v * v;
    norms[r] = std::max(std::sqrt(sq), kNormFloor);
    auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) dst[c] = src[c] / norms[r];
  }
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  return tape.record(std::move(out), {ia}, [&tape, ia, io, norms = std::move(norms)](const Tensor& g, GradAccumulator& acc) {
    const Tensor& y = tape.value(io);
    Tensor& slot = acc.slot(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      auto sr = slot.row(r);
      // Below the floor the map is x / floor, a plain scaling.
      const bool clamped = norms[r] <= kNormFloor;
      double dot = 0.0;
      if (!clamped)
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      for (std::size_t c = 0; c < yr.size(); ++c) sr[c] += (gr[c] - dot * yr[c]) / norms[r];
    }
  });
}

Var row_sqnorm(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (double v : x.row(r)) sq += v * v;
    out[r] = sq;
  }
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [&tape, ia](const Tensor& g, GradAccumulator& acc) {
    const Tensor& x = tape.value(ia);
    Tensor& slot = acc.slot(ia);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto xr = x.row(r);
      auto sr = slot.row(r);
      for (std::size_t c = 0; c < xr.size(); ++c) sr[c] += 2.0 * g[r] * xr[c];
    }
  });
}

Var add_col(Var a, Var c) {
  same_tape(a, c, "add_col");
  const Tensor& av = a.value();
  const Tensor& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != av.rows())
    throw ShapeError("add_col: column " + shape_str(cv) + " does not fit " + shape_str(av));
  Tensor out = av;
  view(out).colwise() += view(cv).col(0);
  const std::size_t ia = a.id(), ic = c.id();
  return a.tape().record(std::move(out), {ia, ic}, [ia, ic](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)) += view(g);
    if (acc.wants(ic)) view(acc.slot(ic)).col(0) += view(g).rowwise().sum();
  });
}

Var div_rows(Var a, Var b, std::size_t* clamp_count) {
  same_tape(a, b, "div_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.cols() != 1 || bv.rows() != av.rows())
    throw ShapeError("div_rows: divisor " + shape_str(bv) + " does not fit " + shape_str(av));
  Tensor out(av.rows(), av.cols());
  std::vector<std::uint8_t> clamped(av.rows(), 0);
  std::vector<double> denom(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    denom[r] = bv[r];
    if (!(bv[r] >= kDenominatorFloor)) {
      denom[r] = kDenominatorFloor;
      clamped[r] = 1;
      if (clamp_count) ++*clamp_count;
    }
    auto src = av.row(r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] / denom[r];
  }
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib},
                     [&tape, ia, ib, clamped = std::move(clamped), denom = std::move(denom)](const Tensor& g, GradAccumulator& acc) {
                       const Tensor& av = tape.value(ia);
                       for (std::size_t r = 0; r < av.rows(); ++r) {
                         auto gr = g.row(r);
                         if (acc.wants(ia)) {
                           auto sr = acc.slot(ia).row(r);
                           for (std::size_t c = 0; c < gr.size(); ++c) sr[c] += gr[c] / denom[r];
                         }
                         if (acc.wants(ib) && !clamped[r]) {
                           auto ar = av.row(r);
                           double dot = 0.0;
                           for (std::size_t c = 0; c < gr.size(); ++c) dot += gr[c] * ar[c];
                           acc.slot(ib)[r] -= dot / (denom[r] * denom[r]);
                         }
                       }
                     });
}

Var col_sums(Var a) {
  const Tensor& av = a.value();
  Tensor out(1, av.cols());
  view(out).row(0) = view(av).colwise().sum();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)).rowwise() += view(g).row(0);
  });
}

Var hconcat(Var a, Var b) {
  same_tape(a, b, "hconcat");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) throw ShapeError("hconcat: row mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Tensor out(av.rows(), av.cols() + bv.cols());
  view(out).leftCols(static_cast<Eigen::Index>(av.cols())) = view(av);
  view(out).rightCols(static_cast<Eigen::Index>(bv.cols())) = view(bv);
  const std::size_t ia = a.id(), ib = b.id();
  const auto left = static_cast<Eigen::Index>(av.cols());
  const auto right = static_cast<Eigen::Index>(bv.cols());
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, left, right](const Tensor& g, GradAccumulator& acc) {
    if (acc.wants(ia)) view(acc.slot(ia)) += view(g).leftCols(left);
    if (acc.wants(ib)) view(acc.slot(ib)) += view(g).rightCols(right);
  });
}

Var masked_row_logsumexp(Var a, const Mask& mask) {
  const Tensor& x = a.value();
  if (mask.rows != x.rows() || mask.cols != x.cols())
    throw ShapeError("masked_row_logsumexp: mask shape does not match " + shape_str(x));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double peak = neg_inf;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (mask(r, c)) peak = std::max(peak, x(r, c));
    if (peak == neg_inf) {
      out[r] = neg_inf;
      continue;
    }
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c)
      if (mask(r, c)) total += std::exp(x(r, c) - peak);
    out[r] = peak + std::log(total);
  }
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  const std::size_t io = tape.size();
  return tape.record(std::move(out), {ia}, [&tape, ia, io, mask](const Tensor& g, GradAccumulator& acc) {
    const Tensor& x = tape.value(ia);
    const Tensor& lse = tape.value(io);
    Tensor& slot = acc.slot(ia);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (!std::isfinite(lse[r])) continue;
      for (std::size_t c = 0; c < x.cols(); ++c)
        if (mask(r, c)) slot(r, c) += g[r] * std::exp(x(r, c) - lse[r]);
    }
  });
}

Var spmm(const SparseMatrix& m, Var a) {
  Tensor out = m.multiply(a.value());
  const std::size_t ia = a.id();
  const SparseMatrix* mp = &m;
  return a.tape().record(std::move(out), {ia}, [mp, ia](const Tensor& g, GradAccumulator& acc) {
    view(acc.slot(ia)) += view(mp->multiply_transposed(g));
  });
}

}  // namespace gtca
