#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "gtca/sparse.hpp"
#include "gtca/tensor.hpp"

namespace gtca {

class Tape;

/// Handle to a value recorded on a Tape.
///
/// A Var is only meaningful while its Tape is alive. Ops combining two Vars
/// require both to live on the same tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar with respect to every requires_grad leaf of a tape.
class Gradients {
 public:
  // Throws ContractError if `leaf` was not a requires_grad leaf.
  const Tensor& of(Var leaf) const;
  bool contains(Var leaf) const noexcept;

 private:
  friend class Tape;
  std::vector<std::size_t> leaf_ids_;
  std::vector<Tensor> grads_;
};

// Scratch space handed to backward rules. slot(id) lazily allocates a zero
// gradient of the node's shape; rules accumulate into it.
class GradAccumulator {
 public:
  GradAccumulator(const Tape& tape, std::vector<Tensor>& grads) : tape_(tape), grads_(grads) {}
  bool wants(std::size_t id) const;
  Tensor& slot(std::size_t id);

 private:
  const Tape& tape_;
  std::vector<Tensor>& grads_;
};

/// Ordered record of a single forward pass.
///
/// Each recorded node keeps its value and, when any input needs a gradient,
/// the rule propagating an upstream gradient to its inputs. backward() does
/// not mutate the tape, so it can be replayed.
class Tape {
 public:
  using BackwardRule = std::function<void(const Tensor& upstream, GradAccumulator& acc)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is tracked iff value.requires_grad().
  Var leaf(Tensor value);
  Var parameter(Tensor value) { return leaf(std::move(value.set_requires_grad(true))); }
  Var constant(Tensor value) { return leaf(std::move(value.set_requires_grad(false))); }

  // Used by op implementations. The rule is dropped when no input needs grad.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardRule rule);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // loss must be 1x1.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    bool is_leaf = false;
    BackwardRule rule;
  };
  std::vector<Node> nodes_;
};

inline constexpr double kNormFloor = 1e-12;
inline constexpr double kDenominatorFloor = 1e-30;

// Dense boolean mask with the same shape as the matrix it selects from.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool fill = false) : rows(r), cols(c), bits(r * c, fill ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool on = true) { bits[r * cols + c] = on ? 1 : 0; }
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var exp(Var a);
Var sum(Var a);

// Each row divided by max(norm, kNormFloor).
Var row_l2_normalize(Var a);
// N x 1 column of squared row norms.
Var row_sqnorm(Var a);
// a (N x m) plus column c (N x 1) broadcast along each row.
Var add_col(Var a, Var c);
// a (N x d) with row i divided by max(b_i, kDenominatorFloor). Clamped rows
// are counted into *clamp_count when provided.
Var div_rows(Var a, Var b, std::size_t* clamp_count = nullptr);
// 1 x m column sums.
Var col_sums(Var a);
Var hconcat(Var a, Var b);
// N x 1: log sum_{c : mask(i,c)} exp(a(i,c)), computed with max shifting.
// A row with an empty mask yields -inf.
Var masked_row_logsumexp(Var a, const Mask& mask);
// Constant sparse matrix times a. `m` must outlive any backward() call.
Var spmm(const SparseMatrix& m, Var a);

}  // namespace gtca
