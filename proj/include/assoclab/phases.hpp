#pragma once

#include <optional>
#include <vector>

#include "assoclab/icl.hpp"

namespace assoclab {

enum class Phase { Encoding, Consolidation, Forgetting };

const char* phase_name(Phase p);

struct RepRange {
  int first_r = 0;  // inclusive, in repetition values
  int last_r = 0;   // inclusive
};

struct PhaseThresholds {
  double rise = 0.03;           // absolute accuracy points
  double peak_fraction = 0.97;  // fraction of peak accuracy
  double band = 0.03;           // consolidation plateau band (reported only)
  double drop = 0.03;           // absolute accuracy points
};

struct PhaseSegmentation {
  std::vector<int> schedule;  // observed repetition values, ascending
  RepRange encoding;
  RepRange consolidation;
  std::optional<RepRange> forgetting;
  double peak_accuracy = 0.0;
  PhaseThresholds thresholds;

  Phase phase_of(int r) const;
};

// Threshold rules over an observed accuracy curve. "Consecutive repetitions"
// means consecutive observed points, so subsampled schedules work unchanged.
PhaseSegmentation segment_phases(const std::vector<AccuracyPoint>& curve,
                                 const PhaseThresholds& thresholds = {});

// Piecewise-linear map over observed indices: encoding -> [0,1],
// consolidation -> [1,2], forgetting -> [2,3]. Phase boundaries land on
// integers exactly; a single-point phase maps to its right endpoint.
double normalize_repetitions(const PhaseSegmentation& seg, int r);

}  // namespace assoclab
