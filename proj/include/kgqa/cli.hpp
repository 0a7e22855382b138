#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgqa {

/// Exit codes: 0 ok, 1 domain/data/endpoint failure, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the kgqa tool: mine | bench | run | eval | inspect.
/// Errors are reported as one line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgqa
