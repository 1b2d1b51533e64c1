#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace falip::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Entry point behind the `falip` binary. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Toy-fixture oracle checks; one PASS/FAIL line per check. Returns true if
/// all passed.
bool selftest(std::ostream& out);

}  // namespace falip::cli
