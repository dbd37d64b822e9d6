#pragma once

#include <iosfwd>
#include <string>

#include "keylock/protect.hpp"

namespace keylock {

// Full command dispatcher. Returns the process exit status:
// 0 success, 1 usage error, 2 runtime error.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

// Aligned text table (accuracies as percentages with two decimals), one row
// per protected model plus the baseline row.
std::string render_report(const ProtectionReport& report);

}  // namespace keylock
