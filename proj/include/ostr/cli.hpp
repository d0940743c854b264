#pragma once

// Command-line front end: search, oracle, correlate, diagnose, report.
//
// Every run resolves its JSON config (file plus flag overrides) into a
// complete config and records it in `<out>/manifest.json`. Passing that
// manifest back through --config repeats the run.

#include <iosfwd>
#include <string>
#include <vector>

namespace ostr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;      // runtime or input-data error
inline constexpr int kExitConfig = 2;       // bad flags or config, message names the field
inline constexpr int kExitNumericAbort = 3; // non-finite values during training

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

} // namespace ostr::cli
