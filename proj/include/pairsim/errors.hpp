#pragma once

#include <stdexcept>
#include <string>

namespace pairsim {

// Invalid configuration or usage: bad units, broken invariants, unknown keys.
class config_error : public std::invalid_argument {
public:
    explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

// A numerical procedure failed: probability out of range, non-convergence,
// singular design matrix.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw config_error(what);
}

} // namespace detail
} // namespace pairsim
