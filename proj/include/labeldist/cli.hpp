#pragma once
// Command-line front end: synth, fuse, train, eval, sweep-alpha, ablate and
// analyze-kl. Every command writes manifest.txt to the output directory first.

#include <ostream>
#include <string>
#include <vector>

namespace labeldist::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,       // unexpected internal error
  kInvalidInput = 2,  // configuration, usage or input data
  kNumericFailure = 3,
};

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace labeldist::cli
