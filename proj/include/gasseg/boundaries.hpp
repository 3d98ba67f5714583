#pragma once

#include <string_view>
#include <vector>

#include "gasseg/common.hpp"

namespace gasseg {

enum class BoundarySource { ground_truth, gas, rpm, interpolated, hac, periodic };

std::string_view to_string(BoundarySource source);

/// Strictly increasing boundary times inside [0, duration_ms].
struct BoundarySet {
  std::vector<double> times_ms;
  BoundarySource source = BoundarySource::ground_truth;
  double duration_ms = 0.0;
};

/// Throws DataError unless times are strictly increasing and within the
/// utterance.
void validate(const BoundarySet& set);

}  // namespace gasseg
