#include "gasseg/gas.hpp"

#include <cmath>
#include <fstream>

namespace gasseg {

std::string_view to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::diff_gas: return "diff_gas";
    case SignalKind::rpm_error: return "rpm_error";
    case SignalKind::interpolated: return "interpolated";
  }
  return "?";
}

GasSeries mean_gas(const GateTrace& trace) {
  return {trace.values.rowwise().mean(), trace.values, trace.gate, trace.layer_index};
}

DetectorSignal diff_gas(const GasSeries& series, double frame_shift_ms) {
  const Eigen::Index n = series.mean_values.size();
  if (n < 2) throw DataError("difference GAS needs at least two frames");
  return {series.mean_values.tail(n - 1) - series.mean_values.head(n - 1), SignalKind::diff_gas, frame_shift_ms};
}

Matrix diff_gas_per_unit(const GateTrace& trace) {
  const Eigen::Index n = trace.values.rows();
  if (n < 2) throw DataError("difference GAS needs at least two frames");
  return trace.values.bottomRows(n - 1) - trace.values.topRows(n - 1);
}

RpmError rpm_error_signal(const Matrix& predictions, const Matrix& sequence, double frame_shift_ms) {
  if (sequence.rows() < 2 || predictions.rows() != sequence.rows() - 1 || predictions.cols() != sequence.cols())
    throw DataError("predictions must have T-1 rows of the sequence width");
  RpmError out;
  out.per_dim = (sequence.bottomRows(predictions.rows()) - predictions).array().square().matrix();
  out.signal = {out.per_dim.rowwise().mean(), SignalKind::rpm_error, frame_shift_ms};
  return out;
}

DetectorSignal interpolate(const DetectorSignal& error, const DetectorSignal& gas, double w) {
  if (error.values.size() != gas.values.size()) throw DataError("signals to interpolate differ in length");
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("interpolation weight must be in [0, 1]");
  return {(1.0 - w) * error.values + w * gas.values, SignalKind::interpolated, error.frame_shift_ms};
}

DetectorSignal normalize_signal(DetectorSignal signal) {
  Vector& v = signal.values;
  const Eigen::Index n = v.size();
  if (n == 0) return signal;
  v.array() -= v.mean();
  const double var = v.squaredNorm() / static_cast<double>(n);
  if (var <= 1e-24)
    v.setZero();
  else
    v /= std::sqrt(var);
  return signal;
}

void write_signal_csv(const std::filesystem::path& path, const DetectorSignal& signal, const Matrix* per_unit) {
  if (per_unit && per_unit->rows() != signal.values.size())
    throw DataError("per-unit matrix does not match signal length");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write signal dump: " + path.string());
  out.precision(17);
  out << "frame_index,signal_value";
  if (per_unit)
    for (Eigen::Index j = 0; j < per_unit->cols(); ++j) out << ",unit_" << j;
  out << '\n';
  for (Eigen::Index t = 0; t < signal.values.size(); ++t) {
    out << t << ',' << signal.values(t);
    if (per_unit)
      for (Eigen::Index j = 0; j < per_unit->cols(); ++j) out << ',' << (*per_unit)(t, j);
    out << '\n';
  }
}

}  // namespace gasseg
