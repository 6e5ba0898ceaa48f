#ifndef RGMWM_ERRORS_HPP
#define RGMWM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rgmwm {

// Error taxonomy. The CLI maps these onto its exit-code contract:
// invalid input / parse problems -> 1, non-convergence -> 2 (flagged result,
// not an exception), identifiability -> 3, numerical failure -> 4.

class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// CSV/config parsing; carries a 1-based line number when known.
class parse_error : public invalid_input {
public:
    parse_error(const std::string& what, long line = 0)
        : invalid_input(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_ = 0;
};

class identifiability_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class numerical_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A bracketing search exhausted its expansion range without a sign change.
class no_solution : public numerical_failure {
public:
    using numerical_failure::numerical_failure;
};

// Exact spatial simulation refuses grids larger than its documented limit.
class size_limit_error : public invalid_input {
public:
    using invalid_input::invalid_input;
};

// ACF requested for a component that has no stationary ACF (random walk).
class unsupported_for_acf : public invalid_input {
public:
    using invalid_input::invalid_input;
};

} // namespace rgmwm

#endif
