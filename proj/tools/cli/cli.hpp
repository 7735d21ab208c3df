#pragma once

namespace dustk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUsage = 2;

// Parses argv and runs one subcommand. Returns 0 on success, 1 when input
// fails validation, 2 on a usage error.
int dispatch(int argc, const char* const* argv);

}  // namespace dustk::cli
