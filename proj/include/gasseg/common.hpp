#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace gasseg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Bad input data: malformed files, inconsistent shapes, missing artifacts.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or usage.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence during numerical work.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Derives an independent child seed from a parent seed and a stage label
/// (splitmix64 over the parent mixed with an FNV-1a hash of the label).
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

/// git-describe string baked in at configure time.
std::string_view version_string();

}  // namespace gasseg
