#pragma once

#include <string>
#include <vector>

namespace rumpl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;
/// An acceptance threshold from the config's "thresholds" section failed.
inline constexpr int kExitThreshold = 3;
inline constexpr int kExitUsage = 64;

/// Entry point of the `rumpl` tool; args excludes the program name.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace rumpl::cli
