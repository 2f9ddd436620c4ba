#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace panelfe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : Error {
    using Error::Error;
};

struct EstimationError : Error {
    using Error::Error;
};

struct CollinearityError : EstimationError {
    std::vector<std::string> columns;
    CollinearityError(const std::string& msg, std::vector<std::string> cols)
        : EstimationError(msg), columns(std::move(cols)) {}
};

struct ConfigError : Error {
    using Error::Error;
};

inline bool is_missing(double v) { return std::isnan(v); }

// splitmix64; used to derive independent substreams from (seed, key...) tuples
// so stochastic routines are reproducible regardless of scheduling order.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(mix64(seed) ^ a) ^ b);
}

}  // namespace panelfe
