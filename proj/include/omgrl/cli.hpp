#pragma once

// Command-line front end: omgrl <verb> [--config PATH] [--set KEY=VALUE]...
// [--seed N] [--strict] [--out DIR]. Verbs: gen-data, ingest, train-dynamics,
// train, evaluate, report.

#include <iosfwd>
#include <string>
#include <vector>

namespace omgrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumeric = 2;

// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace omgrl::cli
