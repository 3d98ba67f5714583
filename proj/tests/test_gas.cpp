#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "gasseg/gas.hpp"

using namespace gasseg;

namespace {

GateTrace random_trace(long t, long j, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  GateTrace tr;
  tr.values.resize(t, j);
  for (long a = 0; a < t; ++a)
    for (long b = 0; b < j; ++b) tr.values(a, b) = u(rng);
  return tr;
}

DetectorSignal signal_of(std::initializer_list<double> v, SignalKind kind = SignalKind::diff_gas) {
  DetectorSignal s;
  s.values = Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()));
  s.kind = kind;
  return s;
}

}  // namespace

TEST_CASE("mean and difference GAS against direct computation") {
  const auto tr = random_trace(9, 5, 1);
  const auto series = mean_gas(tr);
  const auto diff = diff_gas(series);
  REQUIRE(diff.values.size() == 8);
  for (long t = 0; t < 8; ++t) {
    double next = 0.0, cur = 0.0;
    for (long j = 0; j < 5; ++j) {
      next += tr.values(t + 1, j);
      cur += tr.values(t, j);
    }
    CHECK(std::abs(diff.values(t) - (next - cur) / 5.0) < 1e-14);
  }
}

TEST_CASE("mean of per-unit differences equals the difference of means") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = random_trace(12, 7, seed);
    const Matrix per_unit = diff_gas_per_unit(tr);
    const Vector d = diff_gas(mean_gas(tr)).values;
    CHECK((per_unit.rowwise().mean() - d).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("a constant unit has an all-zero difference column") {
  auto tr = random_trace(6, 3, 4);
  tr.values.col(1).setConstant(0.25);
  CHECK(diff_gas_per_unit(tr).col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("difference operator is linear") {
  const auto a = random_trace(10, 4, 5), b = random_trace(10, 4, 6);
  GateTrace mix;
  mix.values = 0.3 * a.values + 0.6 * b.values;
  const Matrix lhs = diff_gas_per_unit(mix);
  const Matrix rhs = 0.3 * diff_gas_per_unit(a) + 0.6 * diff_gas_per_unit(b);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("extraction does not mutate traces and is repeatable") {
  const auto tr = random_trace(8, 3, 7);
  const Matrix copy = tr.values;
  const auto a = diff_gas(mean_gas(tr)).values;
  const auto b = diff_gas(mean_gas(tr)).values;
  CHECK(tr.values == copy);
  CHECK(a == b);
}

TEST_CASE("short traces are rejected") {
  const auto tr = random_trace(1, 3, 1);
  CHECK_THROWS_AS(diff_gas(mean_gas(tr)), DataError);
  CHECK_THROWS_AS(diff_gas_per_unit(tr), DataError);
}

TEST_CASE("rpm error signal") {
  const Matrix seq = oracle::random_frames(6, 4, 3);
  const auto perfect = rpm_error_signal(seq.bottomRows(5), seq);
  CHECK(perfect.signal.values.cwiseAbs().maxCoeff() == 0.0);

  const Matrix pred = oracle::random_frames(5, 4, 8);
  const auto e = rpm_error_signal(pred, seq);
  CHECK(e.per_dim.rows() == 5);
  for (long t = 0; t < 5; ++t) {
    double sum = 0.0;
    for (long k = 0; k < 4; ++k) {
      const double diff = seq(t + 1, k) - pred(t, k);
      CHECK(std::abs(e.per_dim(t, k) - diff * diff) < 1e-14);
      sum += diff * diff;
    }
    CHECK(std::abs(e.signal.values(t) - sum / 4.0) < 1e-14);
    CHECK(std::abs(e.signal.values(t) - e.per_dim.row(t).mean()) < 1e-14);
  }
  CHECK_THROWS_AS(rpm_error_signal(pred.topRows(4), seq), DataError);
}

TEST_CASE("interpolation") {
  const auto e = signal_of({0.2, 1.0, 3.0}, SignalKind::rpm_error), g = signal_of({0.4, -1.0, 2.0});
  CHECK(interpolate(e, g, 0.0).values == e.values);
  CHECK(interpolate(e, g, 1.0).values == g.values);
  CHECK(interpolate(e, g, 0.5).values(0) == doctest::Approx(0.3));
  CHECK(interpolate(e, g, 0.5).kind == SignalKind::interpolated);
  CHECK_THROWS_AS(interpolate(e, signal_of({1.0, 2.0}), 0.5), DataError);
  CHECK_THROWS_AS(interpolate(e, g, 1.5), ConfigError);
}

TEST_CASE("normalize_signal") {
  const auto s = signal_of({1.0, 4.0, 2.0, 9.0});
  const auto n = normalize_signal(s);
  const double mean = 4.0;
  const double sd = std::sqrt(((9.0 + 0.0 + 4.0 + 25.0)) / 4.0);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(n.values(k) - (s.values(k) - mean) / sd) < 1e-12);
  const auto again = normalize_signal(n);
  CHECK((again.values - n.values).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(normalize_signal(signal_of({3.0, 3.0, 3.0})).values.cwiseAbs().maxCoeff() == 0.0);
}
