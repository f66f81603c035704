#pragma once

#include <string>

namespace pgd {

// Subcommand entry points. Each catches its own errors and prints a one-line
// diagnostic to stderr. Exit codes: 0 success, 1 configuration problem, 2 numerical
// or verification failure.
int cmd_run(const std::string& config_path, const std::string& out_dir, bool verify);
int cmd_compare(const std::string& config_path, const std::string& out_dir);
int cmd_gradcheck(const std::string& config_path, const std::string& out_dir);

} // namespace pgd
