#pragma once

#include "gasseg/common.hpp"

namespace gasseg {

struct AdamHyperparams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vector m;
  Vector v;
  long step_count = 0;
  AdamHyperparams hyper;

  static AdamState fresh(Eigen::Index size, AdamHyperparams hyper = {});
};

/// One bias-corrected Adam step in place. Throws DataError on shape mismatch.
void adam_update(Vector& params, const Vector& gradients, AdamState& state);

}  // namespace gasseg
