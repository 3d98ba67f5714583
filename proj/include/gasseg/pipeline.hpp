#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gasseg/corpus.hpp"
#include "gasseg/eval.hpp"
#include "gasseg/features.hpp"
#include "gasseg/models.hpp"
#include "gasseg/segment.hpp"

namespace gasseg {

// Run configuration: a single JSON document with sections corpus, features,
// model, train, segment, eval and a top-level seed. Unknown keys are
// rejected; omitted keys take defaults.

nlohmann::json default_run_config();

/// Overlays `user` on the defaults. Throws ConfigError on unknown keys or
/// type mismatches.
nlohmann::json resolve_config(const nlohmann::json& user);

nlohmann::json load_config_file(const std::filesystem::path& path);

/// Seed for one pipeline stage, derived from the top-level seed.
std::uint64_t stage_seed(const nlohmann::json& config, std::string_view stage);

SyntheticSpec synthetic_spec(const nlohmann::json& config);
FrameConfig frame_config(const nlohmann::json& config);
ModelConfig model_config(const nlohmann::json& config);
TrainConfig train_config(const nlohmann::json& config);
EvalOptions eval_options(const nlohmann::json& config);

// Corpus directory layout: manifest.json, wav/<id>.wav, features/<id>.feat.

std::filesystem::path manifest_path(const std::filesystem::path& corpus_dir);

/// Synthesizes the configured corpus (plus white noise when corpus.snr_db is
/// set) into `out_dir`.
CorpusManifest synth_to_dir(const nlohmann::json& config, const std::filesystem::path& out_dir);

/// Builds a manifest for a TIMIT-style tree (*.wav with sibling *.phn). A
/// leading or trailing h# interval is treated as outside the utterance, so
/// its inner edge is not a reference boundary. With corpus.snr_db set, noisy
/// copies are written under out_dir/wav.
CorpusManifest ingest_timit(const nlohmann::json& config, const std::filesystem::path& timit_root,
                            const std::filesystem::path& out_dir);

std::filesystem::path resolve_audio_path(const std::filesystem::path& corpus_dir, const ManifestEntry& entry);

struct FeaturizeReport {
  int computed = 0;
  int cached = 0;
  int repaired = 0;
  std::vector<std::string> warnings;
};

/// Writes features/<id>.feat for each utterance (CMVN-normalized MFCC39),
/// skipping caches whose header and size are consistent with the audio.
FeaturizeReport featurize_corpus(const std::filesystem::path& corpus_dir, const FrameConfig& framing = {});

/// Loads cached features in manifest order. Throws DataError if missing.
std::vector<FeatureSequence> load_corpus_features(const std::filesystem::path& corpus_dir,
                                                  const CorpusManifest& manifest);

/// Reference boundaries in manifest order.
std::vector<BoundarySet> reference_boundaries(const CorpusManifest& manifest);

/// Trains from scratch and writes the checkpoint, `<out>.loss.csv` and
/// `<out>.config.json`. On divergence the last finite model goes to
/// `<out>.last_good.json` before the error propagates.
TrainResult train_to_checkpoint(const nlohmann::json& config, const std::filesystem::path& corpus_dir,
                                const std::filesystem::path& checkpoint);

enum class DetectorKind { gas, rpm, interp, hac, periodic };

struct DetectorSpec {
  DetectorKind kind = DetectorKind::gas;
  GateTag gate = GateTag::gru_update;
  std::optional<double> weight;  ///< interp: fixed w; unset sweeps the w grid
  double period_ms = 80.0;

  std::string label() const;
};

/// Parses "gas:<gate>", "rpm", "interp", "interp:<w>", "hac", "periodic[:<ms>]".
DetectorSpec parse_detector(std::string_view text, double default_period_ms = 80.0);

/// segment.detector with segment.periodic_ms and, for interp, the gate named
/// by segment.interp_gate.
DetectorSpec detector_from_config(const nlohmann::json& config);

/// Per-utterance detector signals for a model. Throws ConfigError when the
/// model cannot provide the detector ("gate not available", or rpm/interp on
/// an autoencoder).
std::vector<DetectorSignal> detector_signals(const TrainedModel& model, const DetectorSpec& detector,
                                             std::span<const FeatureSequence> features, const nlohmann::json& config,
                                             double weight = 0.0);

struct SegmentRequest {
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path corpus_dir;
  DetectorSpec detector;
  std::optional<double> threshold;  ///< unset: sweep
  std::filesystem::path out_dir;
};

struct SegmentOutcome {
  CorpusBoundaries boundaries;
  std::vector<SweepPoint> curve;  ///< empty in single-threshold mode
  EvalResult best;
  double best_threshold = 0.0;
  std::optional<double> best_weight;
};

/// Runs one detector over a corpus and writes boundaries.json, run.json,
/// signals/<id>.csv and, when sweeping, pr_curve.csv.
SegmentOutcome segment_corpus(const nlohmann::json& config, const SegmentRequest& request);

/// Boundary file: {"version", "config", "detector", "threshold", "edge_policy",
/// "boundaries": {utterance_id: [times_ms]}}.
void write_boundary_file(const std::filesystem::path& path, const CorpusBoundaries& boundaries,
                         const nlohmann::json& metadata);
CorpusBoundaries read_boundary_file(const std::filesystem::path& path, const CorpusManifest& manifest);

/// PR curve CSV: threshold,precision,recall,f1,over_segmentation,hit_rate,r_value (ascending threshold).
void write_pr_curve(const std::filesystem::path& path, std::span<const SweepPoint> curve);

/// Scores a boundary file against a manifest and writes one CSV row.
EvalResult evaluate_files(const nlohmann::json& config, const std::filesystem::path& manifest_file,
                          const std::filesystem::path& boundary_file, const std::filesystem::path& out_csv);

struct PlotDataReport {
  int gas_files = 0;
  int signal_files = 0;
  bool pr_curve = false;
};

/// Emits plot/gas_<id>.csv, plot/signal_<id>.csv and plot/pr_curve.csv for
/// a segment run directory.
PlotDataReport plotdata(const std::filesystem::path& run_dir, int max_utterances = -1);

/// Table of the best result of each run directory.
std::vector<ResultRow> sweep_report(std::span<const std::filesystem::path> run_dirs,
                                    const std::filesystem::path& out_csv);

}  // namespace gasseg
