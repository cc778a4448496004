#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hypalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

/// Parses `args` (without the program name), runs the selected subcommand and
/// returns the process exit code. Normal output goes to `out`, diagnostics to
/// `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace hypalign::cli
