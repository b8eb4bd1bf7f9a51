#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedhar/error.hpp"

namespace fedhar::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kData = 3,
  kNumericHealth = 4,
  kIo = 5,
  kEvaluation = 6,
  kAggregation = 7,
  kInternal = 70,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Entry point shared by the binary and the tests. argv[0] is the program
/// name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fedhar::cli
