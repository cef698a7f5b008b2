#pragma once

#include <string>
#include <vector>

namespace cgan {

// Full command-line surface: make-data, train, calibrate, generate, evaluate.
// Returns the process exit code: 0 success, 2 validation/argument error,
// 3 runtime or divergence failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args without the program name

}  // namespace cgan
