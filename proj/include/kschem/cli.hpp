#pragma once

#include <iosfwd>

namespace kschem {

inline constexpr const char* kVersion = "0.1.0";

/// Exit codes: 0 success, 1 runtime failure, 2 configuration error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kschem
