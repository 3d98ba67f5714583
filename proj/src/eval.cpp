#include "gasseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "gasseg/common.hpp"

namespace gasseg {

std::string_view to_string(BoundarySource source) {
  switch (source) {
    case BoundarySource::ground_truth: return "ground_truth";
    case BoundarySource::gas: return "gas";
    case BoundarySource::rpm: return "rpm";
    case BoundarySource::interpolated: return "interpolated";
    case BoundarySource::hac: return "hac";
    case BoundarySource::periodic: return "periodic";
  }
  return "?";
}

void validate(const BoundarySet& set) {
  for (std::size_t k = 0; k < set.times_ms.size(); ++k) {
    const double t = set.times_ms[k];
    if (!std::isfinite(t) || t < 0.0 || t > set.duration_ms)
      throw DataError("boundary time outside the utterance");
    if (k > 0 && t <= set.times_ms[k - 1]) throw DataError("boundary times are not strictly increasing");
  }
}

long match_boundaries(std::span<const double> ref, std::span<const double> hyp, double tolerance_ms) {
  // Every hypothesis window has the same width, so pairing each hypothesis
  // (in time order) with the earliest still-reachable reference is maximum.
  long hits = 0;
  std::size_t r = 0;
  for (double h : hyp) {
    while (r < ref.size() && ref[r] < h - tolerance_ms) ++r;
    if (r == ref.size()) break;
    if (ref[r] <= h + tolerance_ms) {
      ++hits;
      ++r;
    }
  }
  return hits;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

PrecisionRecall precision_recall_f1(long n_ref, long n_hyp, long n_hit) {
  PrecisionRecall out;
  out.precision = n_hyp > 0 ? static_cast<double>(n_hit) / n_hyp : 0.0;
  out.recall = n_ref > 0 ? static_cast<double>(n_hit) / n_ref : 0.0;
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

namespace {

double r_value_from(double hit_rate, double over_segmentation) {
  const double r1 = std::sqrt((1.0 - hit_rate) * (1.0 - hit_rate) + over_segmentation * over_segmentation);
  const double r2 = (-over_segmentation + hit_rate - 1.0) / std::numbers::sqrt2;
  return 100.0 * (1.0 - (std::abs(r1) + std::abs(r2)) / 2.0);
}

std::vector<double> interior(const BoundarySet& set, bool exclude_edges) {
  if (!exclude_edges) return set.times_ms;
  std::vector<double> out;
  for (double t : set.times_ms)
    if (t > 0.0 && t < set.duration_ms) out.push_back(t);
  return out;
}

}  // namespace

double r_value(double precision, double recall) {
  if (precision <= 0.0) return 0.0;
  return r_value_from(recall, recall / precision - 1.0);
}

EvalResult metrics_from_counts(const BoundaryCounts& c) {
  EvalResult r;
  r.n_ref = c.n_ref;
  r.n_hyp = c.n_hyp;
  r.n_hit = c.n_hit;
  const auto prf = precision_recall_f1(c.n_ref, c.n_hyp, c.n_hit);
  r.precision = prf.precision;
  r.recall = prf.recall;
  r.f1 = prf.f1;
  r.hit_rate = prf.recall;
  if (c.n_ref > 0) r.over_segmentation = static_cast<double>(c.n_hyp) / c.n_ref - 1.0;
  r.degenerate = c.n_ref == 0 || c.n_hyp == 0 || c.n_hit == 0;
  r.r_value = r.degenerate ? 0.0 : r_value_from(r.hit_rate, r.over_segmentation);
  return r;
}

BoundaryCounts count_matches(const BoundarySet& ref, const BoundarySet& hyp, const EvalOptions& options) {
  const auto r = interior(ref, options.exclude_edges);
  const auto h = interior(hyp, options.exclude_edges);
  return {static_cast<long>(r.size()), static_cast<long>(h.size()), match_boundaries(r, h, options.tolerance_ms)};
}

EvalResult evaluate(const BoundarySet& ref, const BoundarySet& hyp, const EvalOptions& options) {
  return metrics_from_counts(count_matches(ref, hyp, options));
}

EvalResult evaluate_corpus(const CorpusBoundaries& refs, const CorpusBoundaries& hyps, const EvalOptions& options) {
  if (refs.size() != hyps.size()) throw DataError("reference and hypothesis utterance sets differ");
  BoundaryCounts total;
  for (const auto& [id, ref] : refs) {
    const auto it = hyps.find(id);
    if (it == hyps.end()) throw DataError("no hypothesis for utterance " + id);
    total += count_matches(ref, it->second, options);
  }
  return metrics_from_counts(total);
}

void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write results: " + path.string());
  out.precision(10);
  out << "model,condition,r_value,precision,recall,f1,hit_rate,over_segmentation,n_ref,n_hyp,n_hit\n";
  for (const auto& row : rows) {
    const auto& r = row.result;
    out << row.model << ',' << row.condition << ',' << r.r_value << ',' << r.precision << ',' << r.recall << ','
        << r.f1 << ',' << r.hit_rate << ',' << r.over_segmentation << ',' << r.n_ref << ',' << r.n_hyp << ','
        << r.n_hit << '\n';
  }
}

}  // namespace gasseg
