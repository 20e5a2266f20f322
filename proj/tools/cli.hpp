#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dcae::cli {

// Runs one command line (args exclude the program name) and returns the exit
// code: 0 ok, 1 unexpected, 2 config/usage, 3 data, 4 numeric, 5 checkpoint,
// 6 pipeline order, 7 shape. Records go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dcae::cli
