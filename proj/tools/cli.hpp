#pragma once

#include <iosfwd>

namespace hkkt {

/// Entry point of the `hybridkkt` command. Returns the process exit code:
/// 0 when every solve is Optimal, 3 otherwise, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hkkt
