#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "idac/error.hpp"

namespace idac::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) noexcept;

/// $IDAC_OUTPUT_ROOT when set and non-empty, otherwise "results".
std::filesystem::path output_root();

/// Entry point of the `idac` executable. Never throws; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same, with the arguments after the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace idac::cli
