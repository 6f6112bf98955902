#pragma once

#include <iostream>
#include <string>
#include <string_view>
#include <vector>

namespace descan::cli {

/// Runs one subcommand. args excludes the program name. Returns 0 on
/// success, 1 on a data error and 2 on a usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

}  // namespace descan::cli
