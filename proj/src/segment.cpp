#include "gasseg/segment.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace gasseg {

double transition_time_ms(long index, double frame_shift_ms) {
  return static_cast<double>(index + 1) * frame_shift_ms;
}

std::vector<long> peak_indices(std::span<const double> values, double threshold) {
  std::vector<long> out;
  for (std::size_t t = 1; t + 1 < values.size(); ++t)
    if (values[t] > values[t - 1] && values[t] > values[t + 1] && values[t] > threshold)
      out.push_back(static_cast<long>(t));
  return out;
}

BoundarySet peak_pick(const DetectorSignal& signal, double threshold, double duration_ms, BoundarySource source) {
  BoundarySet out{{}, source, duration_ms};
  const std::span<const double> values(signal.values.data(), static_cast<std::size_t>(signal.values.size()));
  for (long t : peak_indices(values, threshold)) {
    const double time = transition_time_ms(t, signal.frame_shift_ms);
    if (time < duration_ms) out.times_ms.push_back(time);
  }
  return out;
}

BoundarySet periodic_boundaries(double period_ms, double duration_ms) {
  if (!(period_ms > 0.0)) throw ConfigError("period must be positive");
  BoundarySet out{{}, BoundarySource::periodic, duration_ms};
  for (long k = 1;; ++k) {
    const double t = static_cast<double>(k) * period_ms;
    if (t >= duration_ms) break;
    out.times_ms.push_back(t);
  }
  return out;
}

std::vector<HacMerge> hac_merge_sequence(const Matrix& frames) {
  const Eigen::Index n = frames.rows();
  struct Segment {
    long start;
    long count;
    Vector sum;
    long prev, next;
    long version;
  };
  std::vector<Segment> segs;
  segs.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < n; ++t)
    segs.push_back({static_cast<long>(t), 1, frames.row(t).transpose(), static_cast<long>(t) - 1,
                    t + 1 < n ? static_cast<long>(t) + 1 : -1, 0});

  auto cost = [&](long a, long b) {
    const Segment& sa = segs[static_cast<std::size_t>(a)];
    const Segment& sb = segs[static_cast<std::size_t>(b)];
    const double na = static_cast<double>(sa.count), nb = static_cast<double>(sb.count);
    return na * nb / (na + nb) * (sa.sum / na - sb.sum / nb).squaredNorm();
  };

  struct Candidate {
    double cost;
    long left_start;
    long left, right;
    long left_version, right_version;
    bool operator>(const Candidate& o) const {
      return cost != o.cost ? cost > o.cost : left_start > o.left_start;
    }
  };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  auto push = [&](long a, long b) {
    const auto& sa = segs[static_cast<std::size_t>(a)];
    heap.push({cost(a, b), sa.start, a, b, sa.version, segs[static_cast<std::size_t>(b)].version});
  };
  for (long t = 0; t + 1 < n; ++t) push(t, t + 1);

  std::vector<HacMerge> merges;
  while (!heap.empty()) {
    const Candidate c = heap.top();
    heap.pop();
    Segment& a = segs[static_cast<std::size_t>(c.left)];
    Segment& b = segs[static_cast<std::size_t>(c.right)];
    if (a.version != c.left_version || b.version != c.right_version || a.next != c.right) continue;
    merges.push_back({b.start - 1, c.cost});
    a.count += b.count;
    a.sum += b.sum;
    a.next = b.next;
    ++a.version;
    b.version = -1;
    if (a.next >= 0) segs[static_cast<std::size_t>(a.next)].prev = c.left;
    if (a.prev >= 0) push(a.prev, c.left);
    if (a.next >= 0) push(c.left, a.next);
  }
  return merges;
}

std::vector<long> hac_edges(const std::vector<HacMerge>& merges, long num_frames, const HacStop& stop) {
  if (stop.target_boundaries.has_value() == stop.distance_threshold.has_value())
    throw ConfigError("HAC needs exactly one stopping criterion");
  const long edges = std::max(0L, num_frames - 1);
  std::size_t performed = 0;
  if (stop.target_boundaries) {
    const long target = *stop.target_boundaries;
    if (target < 0 || target > edges) throw ConfigError("HAC target boundary count exceeds T-1");
    performed = static_cast<std::size_t>(edges - target);
  } else {
    while (performed < merges.size() && merges[performed].cost <= *stop.distance_threshold) ++performed;
  }
  std::vector<bool> alive(static_cast<std::size_t>(edges), true);
  for (std::size_t k = 0; k < performed; ++k) alive[static_cast<std::size_t>(merges[k].edge)] = false;
  std::vector<long> out;
  for (long e = 0; e < edges; ++e)
    if (alive[static_cast<std::size_t>(e)]) out.push_back(e);
  return out;
}

BoundarySet hac_segment(const FeatureSequence& features, const HacStop& stop, double duration_ms) {
  if (features.num_frames() < 2) throw DataError("HAC needs at least two frames");
  const auto edges = hac_edges(hac_merge_sequence(features.frames), features.num_frames(), stop);
  BoundarySet out{{}, BoundarySource::hac, duration_ms};
  for (long e : edges) {
    const double t = transition_time_ms(e, features.frame_shift_ms);
    if (t < duration_ms) out.times_ms.push_back(t);
  }
  return out;
}

std::vector<double> quantile_thresholds(std::vector<double> pooled, int count) {
  if (pooled.empty() || count < 1) return {};
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> out;
  const double last = static_cast<double>(pooled.size() - 1);
  for (int k = 0; k < count; ++k) {
    const double pos = count == 1 ? last : last * k / (count - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, pooled.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out.push_back(pooled[lo] + frac * (pooled[hi] - pooled[lo]));
  }
  return out;
}

std::vector<double> quantile_thresholds(std::span<const DetectorSignal> signals, int count) {
  std::vector<double> pooled;
  for (const auto& s : signals) pooled.insert(pooled.end(), s.values.data(), s.values.data() + s.values.size());
  return quantile_thresholds(std::move(pooled), count);
}

SweepResult sweep(std::span<const BoundarySet> refs, std::vector<double> thresholds,
                  const std::function<BoundarySet(double, std::size_t)>& hypotheses, const EvalOptions& options) {
  std::sort(thresholds.begin(), thresholds.end());
  SweepResult out;
  for (double thr : thresholds) {
    BoundaryCounts total;
    for (std::size_t k = 0; k < refs.size(); ++k) total += count_matches(refs[k], hypotheses(thr, k), options);
    out.points.push_back({thr, metrics_from_counts(total)});
  }
  for (std::size_t k = 1; k < out.points.size(); ++k)
    if (out.points[k].result.r_value > out.points[out.best].result.r_value) out.best = k;
  return out;
}

SweepResult threshold_sweep(std::span<const DetectorSignal> signals, std::span<const BoundarySet> refs,
                            std::vector<double> thresholds, const EvalOptions& options) {
  if (signals.size() != refs.size()) throw DataError("signals and references differ in utterance count");
  return sweep(refs, std::move(thresholds),
               [&](double thr, std::size_t k) { return peak_pick(signals[k], thr, refs[k].duration_ms); }, options);
}

}  // namespace gasseg
