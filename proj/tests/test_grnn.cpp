#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "gasseg/adam.hpp"
#include "gasseg/grnn.hpp"
#include "gasseg/models.hpp"

using namespace gasseg;

namespace {

template <typename P>
P random_params(Eigen::Index j, Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  P p = P::zeros(j, d);
  Network scratch;
  auto fill = [&](GateWeights& g) {
    for (auto* m : {&g.input, &g.recurrent})
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = u(rng);
    for (Eigen::Index k = 0; k < g.bias.size(); ++k) g.bias(k) = u(rng);
  };
  if constexpr (std::is_same_v<P, LstmParams>) {
    for (auto* g : {&p.forget, &p.input, &p.output, &p.candidate}) fill(*g);
  } else {
    for (auto* g : {&p.update, &p.reset, &p.candidate}) fill(*g);
  }
  return p;
}

Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = u(rng);
  return v;
}

double max_diff(const Vector& a, const oracle::Vec& b) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a(k) - b[k]));
  return m;
}

}  // namespace

TEST_CASE("lstm_step matches the scalar oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index j = 1 + trial % 5, d = 1 + (trial * 7) % 6;
    const auto p = random_params<LstmParams>(j, d, rng);
    const Vector x = random_vector(d, rng, 2.0), h = random_vector(j, rng), c = random_vector(j, rng, 2.0);
    const auto got = lstm_step(p, x, h, c);
    const auto want = oracle::lstm(p, oracle::vec(x), oracle::vec(h), oracle::vec(c));
    CHECK(max_diff(got.h, want.h) <= 1e-12);
    CHECK(max_diff(got.c, want.c) <= 1e-12);
    CHECK(max_diff(got.forget, want.f) <= 1e-12);
    CHECK(max_diff(got.input, want.i) <= 1e-12);
    CHECK(max_diff(got.output, want.o) <= 1e-12);
  }
}

TEST_CASE("gru_step matches the scalar oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index j = 1 + trial % 5, d = 1 + (trial * 3) % 6;
    const auto p = random_params<GruParams>(j, d, rng);
    const Vector x = random_vector(d, rng, 2.0), h = random_vector(j, rng);
    const auto got = gru_step(p, x, h);
    const auto want = oracle::gru(p, oracle::vec(x), oracle::vec(h));
    CHECK(max_diff(got.h, want.h) <= 1e-12);
    CHECK(max_diff(got.update, want.z) <= 1e-12);
    CHECK(max_diff(got.reset, want.r) <= 1e-12);
  }
}

TEST_CASE("step functions reject shape mismatches") {
  const auto lp = LstmParams::zeros(3, 2);
  CHECK_THROWS_AS(lstm_step(lp, Vector::Zero(3), Vector::Zero(3), Vector::Zero(3)), DataError);
  CHECK_THROWS_AS(lstm_step(lp, Vector::Zero(2), Vector::Zero(2), Vector::Zero(3)), DataError);
  const auto gp = GruParams::zeros(3, 2);
  CHECK_THROWS_AS(gru_step(gp, Vector::Zero(2), Vector::Zero(4)), DataError);
}

TEST_CASE("zero weights give half-open gates and GRU interpolation toward tanh(0)") {
  const auto gp = GruParams::zeros(2, 2);
  Vector h(2);
  h << 0.4, -0.6;
  const auto s = gru_step(gp, Vector::Ones(2), h);
  CHECK(s.update(0) == doctest::Approx(0.5));
  CHECK(s.h(0) == doctest::Approx(0.2));
  CHECK(s.h(1) == doctest::Approx(-0.3));
}

TEST_CASE("gate activations stay in (0,1) and states stay finite") {
  for (auto cell : {CellType::lstm, CellType::gru}) {
    auto model = oracle::tiny_model(cell, Architecture::ae_grnn, 5, 6, 5, 7);
    const Matrix x = oracle::random_frames(60, 6, 9) * 4.0;
    const GateSet gates = cell == CellType::lstm
                              ? GateSet{GateTag::lstm_forget, GateTag::lstm_input, GateTag::lstm_output}
                              : GateSet{GateTag::gru_update, GateTag::gru_reset};
    const auto fwd = forward_sequence(model.network, x, gates);
    CHECK(fwd.traces.size() == gates.size() * 2);
    for (const auto& t : fwd.traces) {
      CHECK(t.values.rows() == 60);
      CHECK(t.values.cols() == 5);
      CHECK(t.values.minCoeff() > 0.0);
      CHECK(t.values.maxCoeff() < 1.0);
    }
    CHECK(fwd.outputs.allFinite());
  }
}

TEST_CASE("capturing a gate the cell lacks is a config error") {
  auto model = oracle::tiny_model(CellType::lstm, Architecture::ae_grnn, 1);
  const Matrix x = oracle::random_frames(5, 3, 1);
  CHECK_THROWS_WITH_AS(forward_sequence(model.network, x, {GateTag::gru_update}), doctest::Contains("gate not available"),
                       ConfigError);
}

TEST_CASE("outputs are causal") {
  for (auto cell : {CellType::lstm, CellType::gru}) {
    auto model = oracle::tiny_model(cell, Architecture::rpm_4layer, 3, 4, 3, 5);
    Matrix x = oracle::random_frames(20, 4, 2);
    const auto before = forward_sequence(model.network, x, {}).outputs;
    x.row(12) *= -3.0;
    x.row(17).setConstant(5.0);
    const auto after = forward_sequence(model.network, x, {}).outputs;
    CHECK((before.topRows(12) - after.topRows(12)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((before.row(12) - after.row(12)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("bptt gradients match central finite differences") {
  for (auto cell : {CellType::lstm, CellType::gru}) {
    for (auto arch : {Architecture::rpm_2layer, Architecture::ae_grnn, Architecture::rpm_4layer}) {
      CAPTURE(to_string(cell));
      CAPTURE(to_string(arch));
      auto model = oracle::tiny_model(cell, arch, 21);
      const std::vector<Matrix> batch{oracle::random_frames(4, 3, 1), oracle::random_frames(4, 3, 2)};
      std::vector<SequenceView> views{{"a", &batch[0]}, {"b", &batch[1]}};
      const auto g = bptt_gradients(model.network, views, loss_kind(arch));
      CHECK(g.values.size() == parameter_count(model.network));
      CHECK(oracle::worst_fd_relative_error(model.network, batch, loss_kind(arch), g.values, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("batch gradient is the sum of per-utterance gradients") {
  auto model = oracle::tiny_model(CellType::gru, Architecture::rpm_4layer, 4);
  const Matrix a = oracle::random_frames(7, 3, 5), b = oracle::random_frames(4, 3, 6);
  const std::vector<SequenceView> both{{"a", &a}, {"b", &b}}, only_a{{"a", &a}}, only_b{{"b", &b}};
  const auto g = bptt_gradients(model.network, both, LossKind::prediction);
  const auto ga = bptt_gradients(model.network, only_a, LossKind::prediction);
  const auto gb = bptt_gradients(model.network, only_b, LossKind::prediction);
  CHECK((g.values - ga.values - gb.values).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g.loss == doctest::Approx(ga.loss + gb.loss).epsilon(1e-12));
  CHECK(g.frames == 6 + 3);
}

TEST_CASE("parameter count has the closed form") {
  for (auto cell : {CellType::lstm, CellType::gru}) {
    const long gates = cell == CellType::lstm ? 4 : 3;
    const long d = 39, j = 32, ff = 64;
    auto rec = [&](long in) { return gates * (j * in + j * j + j); };
    ModelConfig c;
    c.cell = cell;
    c.architecture = Architecture::ae_grnn;
    const long ae = (ff * d + ff) + rec(ff) + rec(j) + (ff * j + ff) + (d * ff + d);
    CHECK(parameter_count(build(c, 1).network) == ae);
    c.architecture = Architecture::rpm_2layer;
    CHECK(parameter_count(build(c, 1).network) == (ff * d + ff) + rec(ff) + (d * j + d));
  }
}

TEST_CASE("flatten and assign are inverses") {
  auto model = oracle::tiny_model(CellType::lstm, Architecture::ae_grnn, 8);
  const Vector theta = flatten_parameters(model.network);
  Network other = zeros_like(model.network);
  CHECK(flatten_parameters(other).cwiseAbs().maxCoeff() == 0.0);
  assign_parameters(other, theta);
  CHECK(flatten_parameters(other) == theta);
  CHECK_THROWS_AS(assign_parameters(other, Vector::Zero(theta.size() + 1)), DataError);
}

TEST_CASE("dropout mask keeps 70% and preserves the mean") {
  Rng rng(3);
  const Matrix m = dropout_mask(1000, 1000, 0.3, rng);
  const double kept = static_cast<double>((m.array() > 0.0).count()) / m.size();
  CHECK(kept == doctest::Approx(0.7).epsilon(0.01 / 0.7));
  CHECK(m.mean() == doctest::Approx(1.0).epsilon(0.01));
  CHECK(((m.array() == 0.0) || ((m.array() - 1.0 / 0.7).abs() < 1e-15)).all());
  CHECK_THROWS_AS(dropout_mask(2, 2, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(dropout_mask(2, 2, -0.1, rng), ConfigError);
}

TEST_CASE("eval mode ignores dropout; train mode applies it") {
  ModelConfig c;
  c.input_dim = 3;
  c.recurrent_units = 2;
  c.ff_units = 8;
  c.dropout_rate = 0.3;
  auto model = build(c, 2);
  const Matrix x = oracle::random_frames(6, 3, 4);
  const auto a = forward_sequence(model.network, x, {}).outputs;
  const auto b = forward_sequence(model.network, x, {}).outputs;
  CHECK(a == b);
  Rng rng(1);
  const auto t = forward_sequence(model.network, x, {}, true, &rng).outputs;
  CHECK((a - t).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("adam first two steps match a hand computation") {
  AdamHyperparams h;
  h.lr = 0.01;
  AdamState s = AdamState::fresh(2, h);
  Vector p(2), g(2);
  p << 1.0, -2.0;
  g << 0.5, -4.0;
  adam_update(p, g, s);
  // Step 1: m̂ = g, v̂ = g², so each component moves by lr * sign(g) (up to epsilon).
  CHECK(p(0) == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  Vector g2(2);
  g2 << -1.0, 2.0;
  const double m0 = 0.9 * 0.1 * 0.5 + 0.1 * -1.0, v0 = 0.999 * 0.001 * 0.25 + 0.001 * 1.0;
  const double m1 = 0.9 * 0.1 * -4.0 + 0.1 * 2.0, v1 = 0.999 * 0.001 * 16.0 + 0.001 * 4.0;
  const double c1 = 1.0 - 0.81, c2 = 1.0 - 0.999 * 0.999;
  const Vector before = p;
  adam_update(p, g2, s);
  CHECK(p(0) == doctest::Approx(before(0) - 0.01 * (m0 / c1) / (std::sqrt(v0 / c2) + 1e-8)).epsilon(1e-14));
  CHECK(p(1) == doctest::Approx(before(1) - 0.01 * (m1 / c1) / (std::sqrt(v1 / c2) + 1e-8)).epsilon(1e-14));
  CHECK(s.step_count == 2);
  Vector wrong(3);
  CHECK_THROWS_AS(adam_update(p, wrong, s), DataError);
}

TEST_CASE("non-finite loss names the utterance") {
  auto model = oracle::tiny_model(CellType::gru, Architecture::ae_grnn, 1);
  Matrix x = oracle::random_frames(4, 3, 1);
  x(2, 1) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<SequenceView> batch{{"utt-nan", &x}};
  CHECK_THROWS_WITH(bptt_gradients(model.network, batch, LossKind::reconstruction), doctest::Contains("utt-nan"));
}
