#pragma once

#include <iosfwd>

namespace cvnn::cli {

/// Exit codes: 0 success, 2 usage error, 1 runtime error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cvnn::cli
