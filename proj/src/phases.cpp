#include "assoclab/phases.hpp"

#include <algorithm>

namespace assoclab {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Encoding: return "Encoding";
    case Phase::Consolidation: return "Consolidation";
    case Phase::Forgetting: return "Forgetting";
  }
  return "unknown";
}

Phase PhaseSegmentation::phase_of(int r) const {
  if (!std::binary_search(schedule.begin(), schedule.end(), r))
    throw Error(ErrorCode::RangeError,
                "repetition " + std::to_string(r) + " not in observed schedule");
  if (r <= encoding.last_r) return Phase::Encoding;
  if (r <= consolidation.last_r) return Phase::Consolidation;
  return Phase::Forgetting;
}

PhaseSegmentation segment_phases(const std::vector<AccuracyPoint>& curve,
                                 const PhaseThresholds& thresholds) {
  const int n = static_cast<int>(curve.size());
  if (n < 3)
    throw Error(ErrorCode::InsufficientData,
                "phase segmentation needs at least 3 curve points");
  for (int i = 0; i < n; ++i) {
    if (curve[i].mean_accuracy < 0.0 || curve[i].mean_accuracy > 1.0)
      throw Error(ErrorCode::RangeError, "accuracy outside [0, 1]");
    if (i > 0 && curve[i].r <= curve[i - 1].r)
      throw Error(ErrorCode::InputError, "curve repetitions must be increasing");
  }

  const auto acc = [&](int i) { return curve[i].mean_accuracy; };
  double peak = 0.0;
  for (int i = 0; i < n; ++i) peak = std::max(peak, acc(i));

  // Encoding ends at the earlier of the two rules (both inclusive):
  //  - first point >= peak_fraction * peak
  //  - first point whose rise over the previous point is <= rise, once at
  //    least one rise > rise has been observed
  int peak_rule = n - 1;
  for (int i = 0; i < n; ++i) {
    if (acc(i) >= thresholds.peak_fraction * peak) {
      peak_rule = i;
      break;
    }
  }
  int rise_rule = n - 1;
  bool saw_rise = false;
  for (int i = 1; i < n; ++i) {
    const double rise = acc(i) - acc(i - 1);
    if (saw_rise && rise <= thresholds.rise) {
      rise_rule = i;
      break;
    }
    if (rise > thresholds.rise) saw_rise = true;
  }
  // Leave room for a non-empty consolidation.
  const int enc_end = std::min({peak_rule, rise_rule, n - 2});

  // Forgetting starts at the first later point that drops more than `drop`
  // below the mean of the two immediately prior observed points.
  int forget_start = -1;
  for (int i = std::max(2, enc_end + 2); i < n; ++i) {
    if (acc(i) < 0.5 * (acc(i - 1) + acc(i - 2)) - thresholds.drop) {
      forget_start = i;
      break;
    }
  }

  PhaseSegmentation seg;
  seg.thresholds = thresholds;
  seg.peak_accuracy = peak;
  for (const auto& pt : curve) seg.schedule.push_back(pt.r);
  seg.encoding = RepRange{curve[0].r, curve[enc_end].r};
  const int cons_end = forget_start < 0 ? n - 1 : forget_start - 1;
  seg.consolidation = RepRange{curve[enc_end + 1].r, curve[cons_end].r};
  if (forget_start >= 0)
    seg.forgetting = RepRange{curve[forget_start].r, curve[n - 1].r};
  return seg;
}

double normalize_repetitions(const PhaseSegmentation& seg, int r) {
  const auto it = std::lower_bound(seg.schedule.begin(), seg.schedule.end(), r);
  if (it == seg.schedule.end() || *it != r)
    throw Error(ErrorCode::RangeError,
                "repetition " + std::to_string(r) + " not in observed schedule");
  const int idx = static_cast<int>(it - seg.schedule.begin());
  const auto index_of = [&](int rep) {
    return static_cast<int>(std::lower_bound(seg.schedule.begin(), seg.schedule.end(),
                                             rep) -
                            seg.schedule.begin());
  };
  const auto map_segment = [](int i, int first, int last, double base) {
    if (last == first) return base + 1.0;  // degenerate phase: right endpoint
    return base + static_cast<double>(i - first) / (last - first);
  };
  const Phase phase = seg.phase_of(r);
  switch (phase) {
    case Phase::Encoding: {
      const int s = index_of(seg.encoding.first_r), e = index_of(seg.encoding.last_r);
      if (e == s) return 0.0;  // degenerate encoding anchors at its start
      return map_segment(idx, s, e, 0.0);
    }
    case Phase::Consolidation:
      return map_segment(idx, index_of(seg.consolidation.first_r),
                         index_of(seg.consolidation.last_r), 1.0);
    case Phase::Forgetting:
      return map_segment(idx, index_of(seg.forgetting->first_r),
                         index_of(seg.forgetting->last_r), 2.0);
  }
  throw Error(ErrorCode::RangeError, "unreachable");
}

}  // namespace assoclab
