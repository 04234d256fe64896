#include "gtca/gcn.hpp"

#include "gtca/errors.hpp"

namespace gtca {

GcnParams init_gcn(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x6c6e);
  GcnParams p;
  p.w0 = glorot_uniform(in_dim, hidden_dim, rng);
  p.w1 = glorot_uniform(hidden_dim, out_dim, rng);
  p.seed = seed;
  return p;
}

Var gcn_forward(Var x, const SparseMatrix& ahat, Var w0, Var w1) {
  if (ahat.rows != x.rows() || ahat.cols != x.rows())
    throw ShapeError("gcn_forward: adjacency is " + std::to_string(ahat.rows) + "x" + std::to_string(ahat.cols) +
                     " for " + std::to_string(x.rows()) + " nodes");
  Var hidden = relu(spmm(ahat, matmul(x, w0)));
  return spmm(ahat, matmul(hidden, w1));
}

Tensor gcn_forward(const Tensor& x, const SparseMatrix& ahat, const GcnParams& params) {
  Tape tape;
  return gcn_forward(tape.constant(x), ahat, tape.constant(params.w0), tape.constant(params.w1)).value();
}

GcnEncoder::GcnEncoder(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, std::uint64_t seed,
                       double input_dropout)
    : params_(init_gcn(in_dim, hidden_dim, out_dim, seed)), input_dropout_(input_dropout) {}

std::vector<Var> GcnEncoder::bind(Tape& tape) const {
  return {tape.parameter(params_.w0), tape.parameter(params_.w1)};
}

Var GcnEncoder::forward(Var x, const SparseMatrix& ahat, std::span<const Var> bound, Mode mode, Rng& rng) const {
  if (mode == Mode::kTrain && input_dropout_ > 0.0) {
    // Inverted dropout: kept entries are rescaled so the expectation is unchanged.
    std::bernoulli_distribution keep(1.0 - input_dropout_);
    Tensor mask(x.rows(), x.cols());
    const double kept = 1.0 / (1.0 - input_dropout_);
    for (double& v : mask.values()) v = keep(rng) ? kept : 0.0;
    x = hadamard(x, x.tape().constant(std::move(mask)));
  }
  return gcn_forward(x, ahat, bound[0], bound[1]);
}

}  // namespace gtca
