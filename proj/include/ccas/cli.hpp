#ifndef CCAS_CLI_HPP
#define CCAS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include <ccas/numeric.hpp>

namespace ccas
{

enum ExitCode
{
    exit_pass = 0,
    exit_check_failed = 1,
    exit_invalid_config = 2,
    exit_derivation_failed = 3,
};

/// Integers, n, + - * /, parentheses; division only by nonzero constants.
/// "1-n/2" -> 1 - n/2. Throws ConfigError.
Poly parse_poly(const std::string &text);

/// "sym" or an even integer.
Dim parse_dim(const std::string &text);

/// Default finite-difference settings, overridable through the environment
/// variable CCAS_FD, e.g. "order=6;res=32,48,64".
struct FdDefaults
{
    int order = 4;
    std::vector<int> resolutions{32, 48, 64};
};

FdDefaults fd_defaults();

/// Runs the command line (without the program name) and returns the exit code.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace ccas

#endif
