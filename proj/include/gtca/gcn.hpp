#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gtca/autodiff.hpp"
#include "gtca/init.hpp"
#include "gtca/sparse.hpp"

namespace gtca {

struct GcnParams {
  Tensor w0;  // F x hidden
  Tensor w1;  // hidden x E
  std::uint64_t seed = 0;
};

GcnParams init_gcn(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed);

// Two-layer graph convolution: ahat * relu(ahat * x * w0) * w1. The output
// layer is linear.
Var gcn_forward(Var x, const SparseMatrix& ahat, Var w0, Var w1);
Tensor gcn_forward(const Tensor& x, const SparseMatrix& ahat, const GcnParams& params);

/// GCN view encoder with optional input dropout in train mode.
class GcnEncoder {
 public:
  GcnEncoder(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed,
             double input_dropout = 0.0);

  // Parameter leaves on `tape`, in parameters() order.
  std::vector<Var> bind(Tape& tape) const;
  Var forward(Var x, const SparseMatrix& ahat, std::span<const Var> bound, Mode mode, Rng& rng) const;

  std::vector<Tensor*> parameters() { return {&params_.w0, &params_.w1}; }
  std::vector<const Tensor*> parameters() const { return {&params_.w0, &params_.w1}; }
  const GcnParams& params() const noexcept { return params_; }

 private:
  GcnParams params_;
  double input_dropout_;
};

}  // namespace gtca
