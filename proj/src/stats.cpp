#include "assoclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace assoclab {

std::optional<int> group_bin(double before_sim,
                             const std::vector<SimilarityGroup>& groups) {
  for (const auto& g : groups)
    if (g.contains(before_sim)) return g.index;
  return std::nullopt;
}

namespace {

// Continued fraction for the regularized incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0)
    throw Error(ErrorCode::RangeError, "incomplete beta argument outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int df) {
  if (df < 1) throw Error(ErrorCode::RangeError, "degrees of freedom must be >= 1");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
  return t < 0.0 ? tail : 1.0 - tail;
}

PairedTResult paired_t_one_sided(const std::vector<double>& before,
                                 const std::vector<double>& after) {
  if (before.size() != after.size())
    throw Error(ErrorCode::InputError, "paired samples must have equal length");
  const int n = static_cast<int>(before.size());
  if (n < 2)
    throw Error(ErrorCode::InsufficientData, "paired t-test needs n >= 2");

  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = after[i] - before[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));

  PairedTResult res;
  res.df = n - 1;
  if (sd == 0.0) {
    res.degenerate = true;
    res.p = mean < 0.0 ? 0.0 : 1.0;
    res.t = mean < 0.0 ? -std::numeric_limits<double>::infinity()
                       : (mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p = student_t_cdf(res.t, res.df);
  return res;
}

std::vector<bool> by_correction(const std::vector<double>& p_values, double q) {
  if (q <= 0.0 || q >= 1.0)
    throw Error(ErrorCode::InputError, "q must lie in (0, 1)");
  const std::size_t m = p_values.size();
  std::vector<bool> rejected(m, false);
  if (m == 0) return rejected;
  for (double p : p_values)
    if (p < 0.0 || p > 1.0)
      throw Error(ErrorCode::RangeError, "p-value outside [0, 1]");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return p_values[a] < p_values[b];
  });

  double c_m = 0.0;
  for (std::size_t i = 1; i <= m; ++i) c_m += 1.0 / static_cast<double>(i);

  std::size_t cutoff = 0;  // number of rejected ranks
  for (std::size_t i = m; i >= 1; --i) {
    const double threshold = static_cast<double>(i) * q / (static_cast<double>(m) * c_m);
    if (p_values[order[i - 1]] <= threshold) {
      cutoff = i;
      break;
    }
  }
  for (std::size_t i = 0; i < cutoff; ++i) rejected[order[i]] = true;
  return rejected;
}

std::vector<GroupPhaseStat> aggregate_group_phase(
    const std::vector<RepetitionTrace>& traces,
    const std::map<std::string, PhaseSegmentation>& segmentations,
    const std::vector<SimilarityGroup>& groups, const AggregateSettings& settings) {
  struct Cell {
    std::vector<double> delta_s;
    std::vector<double> before;  // per pair
    std::vector<double> after;   // per pair
  };
  std::map<std::pair<int, int>, Cell> cells;  // (group index, phase as int)

  bool any_forgetting = false;
  for (const auto& [id, seg] : segmentations)
    if (seg.forgetting) any_forgetting = true;

  for (const auto& trace : traces) {
    const auto seg_it = segmentations.find(trace.backend_id);
    if (seg_it == segmentations.end())
      throw Error(ErrorCode::AggregationError,
                  "no segmentation for backend " + trace.backend_id);
    const auto& seg = seg_it->second;
    const auto group = group_bin(trace.pair.before_sim, groups);
    if (!group) continue;

    std::map<Phase, std::vector<double>> phase_cosines;
    for (const auto& rec : trace.records) {
      const Phase phase = seg.phase_of(rec.r);
      cells[{*group, static_cast<int>(phase)}].delta_s.push_back(rec.delta_s);
      phase_cosines[phase].push_back(rec.pair_cosine);
    }
    for (const auto& [phase, cosines] : phase_cosines) {
      double after = 0.0;
      if (settings.after_mode == AfterMode::PhaseMean) {
        after = std::accumulate(cosines.begin(), cosines.end(), 0.0) / cosines.size();
      } else {
        after = cosines.back();  // records arrive in ascending r
      }
      auto& cell = cells[{*group, static_cast<int>(phase)}];
      cell.before.push_back(trace.pair.before_sim);
      cell.after.push_back(after);
    }
  }

  std::vector<GroupPhaseStat> stats;
  std::vector<double> family_p;
  std::vector<std::size_t> family_index;
  for (const auto& g : groups) {
    for (Phase phase : {Phase::Encoding, Phase::Consolidation, Phase::Forgetting}) {
      if (phase == Phase::Forgetting && !any_forgetting) continue;
      GroupPhaseStat st;
      st.group_index = g.index;
      st.phase = phase;
      auto it = cells.find({g.index, static_cast<int>(phase)});
      if (it != cells.end()) {
        const auto& cell = it->second;
        st.n = static_cast<int>(cell.delta_s.size());
        st.n_pairs = static_cast<int>(cell.before.size());
        if (st.n > 0)
          st.mean_delta_s =
              std::accumulate(cell.delta_s.begin(), cell.delta_s.end(), 0.0) / st.n;
        if (st.n >= 2) {
          double ss = 0.0;
          for (double v : cell.delta_s) ss += (v - st.mean_delta_s) * (v - st.mean_delta_s);
          st.standard_error = std::sqrt(ss / (st.n - 1)) / std::sqrt(st.n);
          st.se_defined = true;
        }
        if (st.n_pairs >= 2) {
          const auto res = paired_t_one_sided(cell.before, cell.after);
          st.t_statistic = res.t;
          st.p_value = res.p;
          st.degenerate = res.degenerate;
          st.tested = true;
          family_index.push_back(stats.size());
          family_p.push_back(res.p);
        }
      }
      stats.push_back(st);
    }
  }

  const auto flags = by_correction(family_p, settings.q);
  for (std::size_t i = 0; i < flags.size(); ++i)
    stats[family_index[i]].rejected = flags[i];
  return stats;
}

std::vector<GroupPhaseStat> aggregate_group_phase(
    const std::vector<RepetitionTrace>& traces, const PhaseSegmentation& seg,
    const std::vector<SimilarityGroup>& groups, const AggregateSettings& settings) {
  std::map<std::string, PhaseSegmentation> segs;
  for (const auto& trace : traces) segs.emplace(trace.backend_id, seg);
  if (segs.empty()) segs.emplace("", seg);
  return aggregate_group_phase(traces, segs, groups, settings);
}

}  // namespace assoclab
