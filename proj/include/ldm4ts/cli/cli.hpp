#pragma once

#include <iosfwd>

namespace ldm4ts::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;   // usage, config, validation, parse and format errors
inline constexpr int kRuntimeError = 3;  // I/O, training and every other failure

int run(int argc, char** argv);
// Results go to out; the config echo, progress and errors go to err.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ldm4ts::cli
