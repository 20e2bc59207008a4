#pragma once

#include <iosfwd>

namespace distill::cli {

/// Exit status: 0 success, 1 runtime failure, 2 usage or configuration error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace distill::cli
