#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bcseg {

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
int cli_dispatch(int argc, char** argv);
/// `args` excludes the program name. Diagnostics go to `err`, results to `out`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bcseg
