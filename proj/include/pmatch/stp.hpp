#pragma once

// Static threshold policy for selling one resource over a scenario tree.
//
// The policy computes, at each node S_t, the threshold
//
//   h(S_t) = E[ future reward mass | S_t ] / (1 + tbar - mass(S_1..S_t))
//
// where "future reward mass" is sum_{t'>t} sum_i r_i p_i along the remaining
// path, mass(S_1..S_t) is the realized cumulative arrival mass, and tbar is a
// uniform upper bound on total path mass. The first arrival whose reward
// meets the threshold (ties accept) buys the resource.
//
// The process Z(S_t) = h(S_t) + sum_{t'<=t} sum_i p_i (r_i - h(S_t'))^+ is a
// submartingale whose optional-stopping value equals the expected policy
// reward; both facts are checkable exactly on enumerable trees and drive the
// guarantee  E[policy] >= E[sum r p] / (1 + tbar).

#include <string>
#include <vector>

#include "pmatch/rng.hpp"
#include "pmatch/scenario_tree.hpp"

namespace pmatch::stp {

using scenario::SamplePath;
using scenario::ScenarioTree;

struct ThresholdEstimate {
  double value = 0.0;
  double stderr_ = 0.0;  // 0 for exact evaluation
};

struct ThresholdEstimator {
  enum class Kind { exact, mc };
  Kind kind = Kind::exact;
  int n_paths = 100;  // mc only

  static ThresholdEstimator exact() { return {Kind::exact, 0}; }
  static ThresholdEstimator mc(int n) { return {Kind::mc, n}; }
};

struct StpTrace {
  std::vector<int> node_ids;          // realized path, period 0..T
  int stop_period = -1;               // -1: never sold
  int accepted_type = -1;
  double reward = 0.0;
  std::vector<double> thresholds;      // h(S_t) by period, [0] = root threshold
  std::vector<double> cumulative_mass; // realized arrival mass through period t
};

struct ZTrace {
  std::vector<double> z;  // Z(S_t) for t = 0..stop (or 0..T+1 when never sold)
};

struct SubmartingaleReport {
  double max_violation = 0.0;  // max over nodes of Z(S_t) - E[Z(S_t+1) | S_t]
  std::string worst_node;
};

struct OptionalStoppingReport {
  double e_v_stp = 0.0;  // exact expected policy reward
  double e_z_tau = 0.0;  // exact E[Z at the stopping period]
  double gap = 0.0;      // |e_v_stp - e_z_tau|
};

struct RatioLemmaResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

// Exact thresholds for every node, one bottom-up pass. Throws
// std::invalid_argument when tbar undercuts the realized total mass of some
// path (an invalid upper bound would break the denominator guarantee).
std::vector<double> node_thresholds(const ScenarioTree& tree, double tbar);

double threshold_exact(const ScenarioTree& tree, int node, double tbar);

// Monte Carlo threshold: samples n_paths continuations below `node`; the
// denominator is deterministic given the node, so only the future reward
// mass is averaged. Degenerate (chain) subtrees yield stderr exactly 0.
ThresholdEstimate threshold_mc(const ScenarioTree& tree, int node, double tbar,
                               int n_paths, Rng& rng);

// Runs the policy along a realized path. With an mc estimator, inner
// continuations are drawn from `rng` fresh at every period (no reuse across
// decisions). Thresholds are recorded for every period regardless of when
// the sale happens so the Z trace can be evaluated afterwards.
StpTrace run_stp(const ScenarioTree& tree, const SamplePath& path, double tbar,
                 const ThresholdEstimator& est, Rng* rng = nullptr);

// Expected policy reward conditional on reaching `node` unsold, via the exact
// backward recursion
//   V(S_t) = sum_{i: r_i >= h} p_i (r_i - E[V(S_t+1)|S_t]) + E[V(S_t+1)|S_t].
double stp_value_recursion(const ScenarioTree& tree, int node, double tbar);

// V at the root (the root has no arrivals, so this is E[policy reward]).
double expected_stp_value(const ScenarioTree& tree, double tbar);

// Hindsight optimum for one realized path: the best reward among arrivals.
double offline_oracle(const ScenarioTree& tree, const SamplePath& path);

// Exact E[max realized reward]: per path, P(max <= v) factors across periods
// because arrivals are independent given the path.
double expected_offline_value(const ScenarioTree& tree,
                              std::size_t cap = scenario::kEnumerationCap);

// Exact E[sum_t sum_i r_i p_i(S_t)], the reward-mass numerator of h(S_0).
double reward_mass_bound(const ScenarioTree& tree);

// Z values along a realized trace, using the supplied per-period thresholds
// (index 0..T aligned with trace.node_ids). The sum in Z uses all types, not
// just the realized arrivals.
ZTrace z_trace(const ScenarioTree& tree, const StpTrace& trace,
               const std::vector<double>& thresholds);

// Max over non-leaf nodes of Z(S_t) - E[Z(S_t+1) | S_t]; <= 0 (within float
// noise) certifies the submartingale property. Thresholds at the horizon
// vanish, so the step to T+1 is exactly zero and skipped. threshold_scale
// multiplies every threshold before the check; values other than 1 corrupt
// the process and serve as a negative control for this detector.
SubmartingaleReport check_submartingale(const ScenarioTree& tree, double tbar,
                                        double threshold_scale = 1.0);

// Exact optional-stopping identity: E[policy reward] vs E[Z(S_tau)], both by
// enumerating paths and integrating the stopping law in closed form.
OptionalStoppingReport check_optional_stopping(const ScenarioTree& tree, double tbar);

// (a + sum p r) / (b + sum p) <= a/b + sum p (r - a/b)^+  for b >= 1.
// Throws std::invalid_argument outside the domain (a >= 0, p, r >= 0).
RatioLemmaResult ratio_lemma_check(double a, double b, const std::vector<double>& p,
                                   const std::vector<double>& r);

// Two-period chain with arrival mass exactly 1 whose policy-to-reward-mass
// ratio equals 1/(2 - epsilon): period 1 carries (p, r) = (1-eps, 1), period
// 2 carries (eps, 1/eps). epsilon must lie strictly inside (0, 1).
ScenarioTree tight_instance(double epsilon);

}  // namespace pmatch::stp
