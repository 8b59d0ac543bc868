#pragma once

namespace gmg {

/// Exit codes of the `gmg` tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point for `gmg {train, generate, eval, inspect-rewards}`.
int run_cli(int argc, char** argv);

}  // namespace gmg
