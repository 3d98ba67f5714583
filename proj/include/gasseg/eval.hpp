#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gasseg/boundaries.hpp"

namespace gasseg {

struct BoundaryCounts {
  long n_ref = 0;
  long n_hyp = 0;
  long n_hit = 0;

  BoundaryCounts& operator+=(const BoundaryCounts& o) {
    n_ref += o.n_ref;
    n_hyp += o.n_hyp;
    n_hit += o.n_hit;
    return *this;
  }
};

/// Fractions in [0, 1] except r_value, which is on the percent scale.
struct EvalResult {
  long n_ref = 0;
  long n_hyp = 0;
  long n_hit = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double hit_rate = 0.0;
  double over_segmentation = 0.0;
  double r_value = 0.0;
  bool degenerate = false;  ///< no hypotheses, no references or zero precision; r_value floored at 0
};

struct EvalOptions {
  double tolerance_ms = 20.0;
  /// Drop boundaries at (or beyond) the utterance start and end before scoring.
  bool exclude_edges = true;
};

/// Size of a maximum one-to-one matching between sorted reference and
/// hypothesis times where a pair matches when |ref - hyp| <= tolerance.
long match_boundaries(std::span<const double> ref, std::span<const double> hyp, double tolerance_ms = 20.0);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// precision = hit/hyp (0 when hyp = 0), recall = hit/ref (0 when ref = 0),
/// F1 = 2PR/(P+R) (0 when P+R = 0).
PrecisionRecall precision_recall_f1(long n_ref, long n_hyp, long n_hit);

/// 2PR/(P+R), 0 when P+R = 0.
double f1_score(double precision, double recall);

/// R-value on the percent scale from precision and recall fractions:
///   HR = recall, OS = recall/precision - 1,
///   r1 = sqrt((1-HR)^2 + OS^2), r2 = (-OS + HR - 1)/sqrt(2),
///   R = 1 - (|r1| + |r2|)/2.
/// Returns 0 when precision is 0.
double r_value(double precision, double recall);

EvalResult metrics_from_counts(const BoundaryCounts& counts);

BoundaryCounts count_matches(const BoundarySet& ref, const BoundarySet& hyp, const EvalOptions& options = {});

EvalResult evaluate(const BoundarySet& ref, const BoundarySet& hyp, const EvalOptions& options = {});

using CorpusBoundaries = std::map<std::string, BoundarySet>;

/// Micro-averaged: counts pooled over utterances, metrics from the totals.
/// Throws DataError if the two id sets differ.
EvalResult evaluate_corpus(const CorpusBoundaries& refs, const CorpusBoundaries& hyps,
                           const EvalOptions& options = {});

struct ResultRow {
  std::string model;
  std::string condition;
  EvalResult result;
};

/// CSV: model,condition,r_value,precision,recall,f1,hit_rate,over_segmentation,n_ref,n_hyp,n_hit
void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);

}  // namespace gasseg
