#pragma once

#include <iosfwd>

namespace gtca {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

// Entry point for the gtca tool: train / eval / ablate / sweep / analyze / gen-sbm.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gtca
