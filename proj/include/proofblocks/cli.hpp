#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace proofblocks::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDiagnostics = 1;
inline constexpr int kRefuted = 2;
inline constexpr int kUsage = 64;

// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace proofblocks::cli
