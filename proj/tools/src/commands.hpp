#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdk::cli {

enum Exit : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kMissingArtifact = 3,
  kPartialFailure = 4,
};

// args[0] is the program name. Reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hdk::cli
