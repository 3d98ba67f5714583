#include "gasseg/adam.hpp"

#include <cmath>

namespace gasseg {

AdamState AdamState::fresh(Eigen::Index size, AdamHyperparams hyper) {
  return {Vector::Zero(size), Vector::Zero(size), 0, hyper};
}

void adam_update(Vector& params, const Vector& gradients, AdamState& state) {
  if (params.size() != gradients.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw DataError("adam: parameter, gradient and moment sizes differ");
  const auto& h = state.hyper;
  ++state.step_count;
  state.m = h.beta1 * state.m + (1.0 - h.beta1) * gradients;
  state.v = h.beta2 * state.v + (1.0 - h.beta2) * gradients.cwiseAbs2();
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));
  params.array() -= h.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + h.epsilon);
}

}  // namespace gasseg
