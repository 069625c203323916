#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ctikit::cli {

inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kStageError = 3;
inline constexpr int kValidationError = 4;

/// Runs one command line (without the program name). `in` feeds `infer repl`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctikit::cli
