#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "gasseg/boundaries.hpp"
#include "gasseg/eval.hpp"
#include "gasseg/features.hpp"
#include "gasseg/gas.hpp"

namespace gasseg {

/// Time of the transition between frames `index` and `index + 1`.
double transition_time_ms(long index, double frame_shift_ms);

/// Indices t with values[t] > values[t-1], values[t] > values[t+1] and
/// values[t] > threshold. Endpoints are never selected; fewer than three
/// values yield nothing.
std::vector<long> peak_indices(std::span<const double> values, double threshold);

BoundarySet peak_pick(const DetectorSignal& signal, double threshold, double duration_ms,
                      BoundarySource source = BoundarySource::gas);

/// Boundaries at k * period for k >= 1, strictly before the utterance end.
BoundarySet periodic_boundaries(double period_ms, double duration_ms);

struct HacMerge {
  long edge = 0;  ///< transition index (between frames edge and edge+1) removed by this merge
  double cost = 0.0;
};

/// Full bottom-up merge order of adjacent contiguous segments, starting from
/// one segment per frame. Each step merges the adjacent pair with the
/// smallest Ward cost n_a n_b / (n_a + n_b) * |mean_a - mean_b|^2; ties go
/// to the leftmost pair. T-1 merges.
std::vector<HacMerge> hac_merge_sequence(const Matrix& frames);

struct HacStop {
  std::optional<long> target_boundaries;    ///< stop when this many edges survive
  std::optional<double> distance_threshold; ///< stop before the first merge costing more
};

/// Surviving edges after merging under `stop` (exactly one criterion set).
/// Throws ConfigError if target_boundaries > T-1 or no/both criteria given.
std::vector<long> hac_edges(const std::vector<HacMerge>& merges, long num_frames, const HacStop& stop);

BoundarySet hac_segment(const FeatureSequence& features, const HacStop& stop, double duration_ms);

/// `count` thresholds at evenly spaced quantiles (min..max) of the pooled values.
std::vector<double> quantile_thresholds(std::span<const DetectorSignal> signals, int count = 41);
std::vector<double> quantile_thresholds(std::vector<double> pooled, int count = 41);

struct SweepPoint {
  double threshold = 0.0;
  EvalResult result;
};

struct SweepResult {
  std::vector<SweepPoint> points;  ///< ascending threshold
  std::size_t best = 0;            ///< index of the highest R-value (first on ties)

  const SweepPoint& best_point() const { return points.at(best); }
};

/// Evaluates peak_pick at every threshold over the whole corpus. `signals`
/// and `refs` are aligned per utterance; each ref carries the duration.
SweepResult threshold_sweep(std::span<const DetectorSignal> signals, std::span<const BoundarySet> refs,
                            std::vector<double> thresholds, const EvalOptions& options = {});

/// Generic sweep: `hypotheses(threshold, k)` produces utterance k's boundaries.
SweepResult sweep(std::span<const BoundarySet> refs, std::vector<double> thresholds,
                  const std::function<BoundarySet(double, std::size_t)>& hypotheses,
                  const EvalOptions& options = {});

}  // namespace gasseg
