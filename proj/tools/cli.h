#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lerg {

// Runs the lerg command line with args[0] as the program name. Errors are
// written to err as {"error": {"code": ..., "message": ...}} and mapped to
// exit codes 1 (validation), 2 (resource or cap) and 3 (model transport).
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace lerg
