#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "gtca/tensor.hpp"

namespace gtca {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

// U(-a, a) with a = sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Independent stream for (seed, stream) pairs.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace gtca
