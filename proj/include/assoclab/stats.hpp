#pragma once

#include <optional>
#include <vector>

#include "assoclab/interference.hpp"
#include "assoclab/phases.hpp"
#include "assoclab/search.hpp"

namespace assoclab {

// Index of the unique half-open group containing before_sim, or nullopt.
std::optional<int> group_bin(double before_sim,
                             const std::vector<SimilarityGroup>& groups);

struct PairedTResult {
  double t = 0.0;
  double p = 0.0;  // lower tail: alternative "after < before"
  int df = 0;
  bool degenerate = false;  // zero variance of the differences
};

// One-sided paired t-test on d = after - before. p is the lower-tail
// Student's t probability, evaluated through the regularized incomplete
// beta identity (continued fraction, see student_t_cdf in stats.cpp).
PairedTResult paired_t_one_sided(const std::vector<double>& before,
                                 const std::vector<double>& after);

// Lower-tail CDF of Student's t with df degrees of freedom.
double student_t_cdf(double t, int df);

// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

// Benjamini-Yekutieli step-up at level q; flags returned in input order.
std::vector<bool> by_correction(const std::vector<double>& p_values, double q = 0.05);

struct GroupPhaseStat {
  int group_index = 0;
  Phase phase = Phase::Encoding;
  int n = 0;        // number of (pair, r) records in the cell
  int n_pairs = 0;  // pairs contributing to the paired test
  double mean_delta_s = 0.0;
  double standard_error = 0.0;
  bool se_defined = false;
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool tested = false;
  bool degenerate = false;
  bool rejected = false;
};

enum class AfterMode { PhaseMean, PhaseLast };

struct AggregateSettings {
  double q = 0.05;
  AfterMode after_mode = AfterMode::PhaseMean;
};

// Bins every (pair, r) record by (similarity group, phase), aggregates
// delta_s, runs the one-sided paired test per cell on
// (before_sim, per-pair after-learning cosine), and applies BY across all
// tested cells jointly. Segmentations are keyed by backend id.
std::vector<GroupPhaseStat> aggregate_group_phase(
    const std::vector<RepetitionTrace>& traces,
    const std::map<std::string, PhaseSegmentation>& segmentations,
    const std::vector<SimilarityGroup>& groups,
    const AggregateSettings& settings = {});

// Single-backend convenience.
std::vector<GroupPhaseStat> aggregate_group_phase(
    const std::vector<RepetitionTrace>& traces, const PhaseSegmentation& seg,
    const std::vector<SimilarityGroup>& groups,
    const AggregateSettings& settings = {});

}  // namespace assoclab
