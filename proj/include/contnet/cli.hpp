#pragma once

#include <iosfwd>

namespace contnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Default output directory for artifacts when --out is not given.
inline constexpr const char* kOutputDirEnv = "CONTNET_OUTPUT_DIR";

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

} // namespace contnet
