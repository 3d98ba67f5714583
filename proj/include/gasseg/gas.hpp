#pragma once

#include <filesystem>
#include <string_view>

#include "gasseg/grnn.hpp"

namespace gasseg {

/// Unit-mean gate activation series of one gate in one recurrent layer.
struct GasSeries {
  Vector mean_values;  ///< length T
  Matrix per_unit;     ///< T x J
  GateTag gate = GateTag::gru_update;
  int layer_index = 0;
};

enum class SignalKind { diff_gas, rpm_error, interpolated };

std::string_view to_string(SignalKind kind);

/// A per-transition detector signal: values[t] describes the change from
/// frame t to frame t+1, so a T-frame utterance yields T-1 values.
struct DetectorSignal {
  Vector values;
  SignalKind kind = SignalKind::diff_gas;
  double frame_shift_ms = 10.0;
};

GasSeries mean_gas(const GateTrace& trace);

/// values[t] = mean[t+1] - mean[t]. Throws DataError when T < 2.
DetectorSignal diff_gas(const GasSeries& series, double frame_shift_ms = 10.0);

/// Per-unit forward difference, (T-1) x J. Throws DataError when T < 2.
Matrix diff_gas_per_unit(const GateTrace& trace);

struct RpmError {
  DetectorSignal signal;  ///< E_t = mean over dims of per_dim row t
  Matrix per_dim;         ///< (T-1) x d squared errors
};

/// `predictions` row t estimates `sequence` row t+1.
RpmError rpm_error_signal(const Matrix& predictions, const Matrix& sequence, double frame_shift_ms = 10.0);

/// (1 - w) * error + w * gas, index-wise. Throws DataError on length
/// mismatch, ConfigError unless 0 <= w <= 1.
DetectorSignal interpolate(const DetectorSignal& error, const DetectorSignal& gas, double w);

/// Z-score over the utterance; a constant signal maps to zeros.
DetectorSignal normalize_signal(DetectorSignal signal);

/// CSV dump: frame_index,signal_value[,unit_0..unit_{J-1}].
void write_signal_csv(const std::filesystem::path& path, const DetectorSignal& signal,
                      const Matrix* per_unit = nullptr);

}  // namespace gasseg
