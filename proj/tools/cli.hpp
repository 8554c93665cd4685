#pragma once

#include <string>
#include <vector>

namespace hrtfgraph::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line; args[0] is the program name. Usage errors, unknown
/// names and missing inputs return 2, module errors 1.
int run(const std::vector<std::string>& args);

/// 64-bit FNV-1a, lowercase hex. Keys resumable experiment cells.
std::string content_hash(const std::string& text);

}  // namespace hrtfgraph::cli
