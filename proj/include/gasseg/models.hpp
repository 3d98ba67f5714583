#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "gasseg/features.hpp"
#include "gasseg/grnn.hpp"

namespace gasseg {

enum class Architecture { ae_grnn, rpm_2layer, rpm_4layer };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);
bool is_predictor(Architecture arch);

struct ModelConfig {
  CellType cell = CellType::gru;
  int recurrent_units = 32;
  int ff_units = 64;
  double dropout_rate = 0.3;
  int input_dim = kFeatureDim;
  Architecture architecture = Architecture::ae_grnn;
};

/// Throws ConfigError on non-positive sizes or dropout outside [0, 1).
void validate(const ModelConfig& config);

struct TrainingInfo {
  int epochs = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
};

struct TrainedModel {
  ModelConfig config;
  Network network;
  TrainingInfo info;
};

/// Layer stacks (every FC(ff_units) uses ReLU and dropout):
///   ae_grnn, rpm_4layer: FC -> GRNN(J) -> GRNN(J) -> FC -> linear readout to d
///   rpm_2layer:          FC -> GRNN(J) -> linear readout to d
/// Weights ~ U(-0.08, 0.08), biases zero.
TrainedModel build(const ModelConfig& config, std::uint64_t seed);

struct ModelOutput {
  Matrix values;
  std::vector<GateTrace> traces;
};

/// Causal reconstruction, T x d. Throws ConfigError unless the model is ae_grnn.
ModelOutput ae_forward(const TrainedModel& model, const Matrix& features, const GateSet& capture = {});

/// Row t predicts frame t+1: (T-1) x d. Throws ConfigError unless the model
/// is a predictor, DataError when T < 2.
ModelOutput rpm_forward(const TrainedModel& model, const Matrix& features, const GateSet& capture = {});

/// Sum over frames of (1/d)||x_t - xhat_t||^2.
double ae_loss(const Matrix& reconstruction, const Matrix& target);
/// Batch form: sum over utterances.
double ae_loss(std::span<const Matrix> reconstructions, std::span<const Matrix> targets);

/// Sum over t < T-1 of (1/d)||x_{t+1} - prediction_t||^2; `sequence` is the
/// full T-frame input.
double rpm_loss(const Matrix& predictions, const Matrix& sequence);

LossKind loss_kind(Architecture arch);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 2;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  ///< 0 disables global-norm clipping
};

struct TrainResult {
  TrainedModel model;
  std::vector<double> loss_history;  ///< mean per-frame training loss per epoch
};

/// Thrown when the loss turns non-finite; carries the last finite model.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, TrainedModel last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const TrainedModel& last_good() const { return last_good_; }

 private:
  TrainedModel last_good_;
};

/// Adam over shuffled utterance batches. Deterministic for a fixed seed.
TrainResult train(TrainedModel model, std::span<const FeatureSequence> corpus, const TrainConfig& config);

/// JSON checkpoint: format_version, config, row-major named parameters,
/// training metadata.
void save(const TrainedModel& model, const std::filesystem::path& path);
/// Throws DataError on version mismatch or a corrupt/truncated file.
TrainedModel load(const std::filesystem::path& path);

}  // namespace gasseg
