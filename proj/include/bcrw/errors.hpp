#pragma once
#include <stdexcept>
#include <string>

namespace bcrw {

// Arena caps, step budgets, enumeration limits.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Rejection-style samplers whose acceptance rate collapsed.
struct EfficiencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad config values or malformed config files.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Estimates whose diagnostics say the asymptotic regime was not reached
// (degenerate fits, drifting plateaus, truncated tails carrying real mass).
struct ConvergenceWarning : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace bcrw
