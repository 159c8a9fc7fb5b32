#pragma once

// Online two-sided matching with correlated routing probabilities.
//
// Demand units of type i and supply units of type j arrive over periods
// 0..T-1 (at most one per side per period, interval sampling on per-period
// uniforms). A demand arriving at t may match any available supply that
// arrived at s <= t, earning r(i,j,t,s).
//
// The online policy first solves a fluid relaxation (LP3 here: the offline
// matching LP with arrival probabilities as capacities), then runs per
// arrival:
//   separation  - route the demand to at most one arrived unit (j,s) with
//                 probability p_ijts / lambda_it, where p scales the LP flow
//                 by the realized supply history:
//                   Y_js = x*_ijts / mu_js  for arrived units,
//                   p_ijts = min(lambda_it, sum Y) / sum Y * Y_js  (0/0 -> 0)
//   admission   - match the routed unit only when its reward clears the
//                 unit's threshold h_js(S_t): the expected future routed
//                 reward mass of that unit divided by (2 - realized routed
//                 mass so far), estimated by Monte Carlo over future supply
//                 arrivals.
// Every arrived unit accumulates its routed mass sum_i p_ijts each period;
// that mass never exceeds 1, which is what makes the threshold denominator
// safe and the 1/4 revenue guarantee sound.
//
// Reference policies: greedy (max immediate reward), bid-price (reward minus
// the unit's LP supply dual), and the recourse variants ON+^k. Whenever the
// base two-step rule leaves a customer unserved -- routing picked no unit,
// the routed unit was already taken, or its reward fell below the admission
// bar -- ON+^k rematches the customer to the available unit with the largest
// nonnegative net value r_ijts - k * h_js(S_t) (r > 0), trading the unit's
// scaled future value against the reward on the table.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmatch/flow.hpp"
#include "pmatch/rng.hpp"

namespace pmatch::matching {

struct MatchInstance {
  int num_demand_types = 0;  // I
  int num_supply_types = 0;  // J
  int horizon = 0;           // T; periods are 0-based everywhere
  std::vector<double> lambda;   // I x T, lambda[i*T + t]
  std::vector<double> mu;       // J x T
  std::vector<double> rewards;  // I x J x T x T, rewards[((i*J + j)*T + t)*T + s]

  double lam(int i, int t) const {
    return lambda[static_cast<std::size_t>(i * horizon + t)];
  }
  double mu_at(int j, int s) const {
    return mu[static_cast<std::size_t>(j * horizon + s)];
  }
  double r(int i, int j, int t, int s) const {
    if (s > t) return 0.0;
    return rewards[static_cast<std::size_t>(
        ((i * num_supply_types + j) * horizon + t) * horizon + s)];
  }
};

// Shape, positivity and per-period mass checks; throws std::invalid_argument.
void validate_match_instance(const MatchInstance& inst);

struct MatchRealization {
  std::vector<int> demand;  // per period, type index or -1
  std::vector<int> supply;
  std::vector<double> demand_u;  // the uniforms behind the draws
  std::vector<double> supply_u;
};

MatchRealization sample_realization(const MatchInstance& inst, Rng& rng);

struct SupplyUnit {
  int j = 0;
  int s = 0;
  bool available = true;
  double cum_mass = 0.0;  // sum over past periods of sum_i p_ijts
};

struct SupplyState {
  std::vector<SupplyUnit> units;  // in arrival order
};

// ---- fluid relaxation ----

struct Lp3Result {
  flow::BipartiteLpInstance lp;
  flow::LpSolution sol;
  std::vector<double> x;             // dense I x J x T x T flow lookup
  std::vector<double> supply_duals;  // dense J x T
  double objective = 0.0;

  double x_at(const MatchInstance& inst, int i, int j, int t, int s) const {
    return x[static_cast<std::size_t>(
        ((i * inst.num_supply_types + j) * inst.horizon + t) * inst.horizon + s)];
  }
};

// All (i,t) demand nodes capped at lambda, all (j,s) supply nodes capped at
// mu, edges s <= t with r > 0 capped at lambda*mu.
flow::BipartiteLpInstance build_lp3(const MatchInstance& inst);
Lp3Result solve_lp3(const MatchInstance& inst);

// Hindsight optimum for one realization: unit-capacity max-weight matching
// of realized arrivals (solved by the same flow engine; integrality holds
// because every capacity is 1). Flows outside {0,1} by more than 1e-9 would
// indicate a solver defect and throw.
struct OfflineMatch {
  int i = 0, t = 0, j = 0, s = 0;
  double reward = 0.0;
};
struct OfflineResult {
  double value = 0.0;
  std::vector<OfflineMatch> matches;
};
OfflineResult solve_offline_matching(const MatchInstance& inst,
                                     const MatchRealization& realization);

// ---- separation / admission primitives ----

// Routing probabilities of demand (i,t) across the arrived units. Uses every
// arrived unit regardless of availability: the routing measure depends only
// on the exogenous supply history.
std::vector<double> separation_probs(const MatchInstance& inst, const std::vector<double>& x,
                                     const std::vector<SupplyUnit>& units, int i, int t);

// Interval lookup on u in [0,1): unit index, or -1 for no pick. Also guards
// sum(probs) <= lambda within 1e-9 (a violation means the routing math broke).
int separation_pick(const std::vector<double>& probs, double lambda_it, double u);

// Adds this period's routed mass sum_i p_ijts to every arrived unit. Call
// once per period after recording the period's supply arrival and before any
// admission decision. Throws if a unit's mass would exceed 1 + 1e-9.
void advance_supply_mass(const MatchInstance& inst, const std::vector<double>& x,
                         SupplyState& state, int t);

struct ThresholdEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

// Monte Carlo threshold for one unit at period t: n_paths simulations of the
// remaining supply process, averaging the unit's future routed reward mass,
// divided by (2 - realized routed mass). The divisor uses the mass already
// accumulated in `state`, never a re-simulation.
ThresholdEstimate admission_threshold(const MatchInstance& inst, const std::vector<double>& x,
                                      const SupplyState& state, int unit_idx, int t,
                                      int n_paths, Rng& rng);

// Memoizing wrapper keyed by (unit, period). Inner-simulation seeds derive
// from (seed_base, unit, period) alone, so estimates are identical no matter
// which policy asks first; sharing one provider across policy runs of the
// same replicate is exact common-random-numbers coupling.
class ThresholdProvider {
 public:
  ThresholdProvider(const MatchInstance& inst, const std::vector<double>& x, int n_paths,
                    std::uint64_t seed_base)
      : inst_(&inst), x_(&x), n_paths_(n_paths), seed_base_(seed_base) {}

  ThresholdEstimate get(const SupplyState& state, int unit_idx, int t);

 private:
  const MatchInstance* inst_;
  const std::vector<double>* x_;
  int n_paths_;
  std::uint64_t seed_base_;
  std::unordered_map<std::uint64_t, ThresholdEstimate> memo_;
};

// ---- policies ----

enum class PolicyKind { on, on_plus, greedy, bid_price };

struct PolicySpec {
  PolicyKind kind = PolicyKind::on;
  double multiplier = 1.0;  // on_plus margin multiplier
};

enum class Decision { matched, no_pick, threshold, unavailable };

struct MatchEvent {
  int period = 0;
  int i = -1;
  int j = -1, s = -1;  // matched unit, or the picked unit on a rejection
  double reward = 0.0;
  double threshold = 0.0;
  bool threshold_set = false;
  Decision decision = Decision::no_pick;
};

struct MatchTrace {
  std::vector<MatchEvent> events;  // one per demand arrival
  double total_reward = 0.0;
  int matches = 0;
};

struct PolicyContext {
  const MatchInstance* inst = nullptr;
  const Lp3Result* lp3 = nullptr;
  int n_paths = 50;
  ThresholdProvider* provider = nullptr;  // optional shared threshold memo
};

MatchTrace run_policy(const PolicyContext& ctx, const MatchRealization& realization,
                      const PolicySpec& spec, Rng& rng);

// Spec'd entry points; all run on one realization with fresh thresholds from
// `rng` unless a provider is supplied via ctx in run_policy.
MatchTrace run_online(const MatchInstance& inst, const Lp3Result& lp3,
                      const MatchRealization& realization, int n_paths, Rng& rng);
MatchTrace run_online_plus(const MatchInstance& inst, const Lp3Result& lp3,
                           const MatchRealization& realization, double multiplier,
                           int n_paths, Rng& rng);
MatchTrace run_greedy(const MatchInstance& inst, const MatchRealization& realization);
MatchTrace run_bid_price(const MatchInstance& inst, const Lp3Result& lp3,
                         const MatchRealization& realization);

std::string trace_to_csv(const MatchTrace& trace);

// ---- diagnostics ----

// E[p_ijts] over fresh supply histories vs the lower bound x*/2.
struct SeparationBoundResult {
  double mean = 0.0;
  double stderr_ = 0.0;
  double x_star = 0.0;
  bool ok = false;  // mean >= x*/2 - 3 stderr
};
SeparationBoundResult check_separation_bound(const MatchInstance& inst,
                                             const std::vector<double>& x, int i, int j,
                                             int t, int s, int n_draws, Rng& rng);

// min(lambda, x)/x >= 1 - x/(4 lambda) for x, lambda > 0.
struct Lemma4Result {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};
Lemma4Result lemma4_check(double lambda, double x);

}  // namespace pmatch::matching
