#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace triage {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitInternal = 4;

// `args` excludes the program name. Never throws: every failure is mapped to
// an exit code with a one-line message on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace triage
