#pragma once

// Synthetic market generation and policy benchmarking.
//
// A market couples demand type i and supply type j through
//   r_ijts = s_ij * f_ts * g_ij,   s <= t,
// where s_ij ~ Normal(0,1) is pair quality, f_ts = 1 - alpha + alpha *
// exp(-(t-s)/tau_idle) decays with the supply unit's idle time, and
// g_ij = 1 - beta + beta * exp(-d(i,j)/omega) decays with the L1 distance
// between type locations drawn uniformly on a 0.25 x 0.25 degree square.
// Negative qualities stay in the instance; policies must avoid them.
//
// A benchmark solves the fluid relaxation once per scenario, then simulates
// replicates. Policies on one replicate share the realization, the pick
// uniforms, and one memoized threshold provider (common random numbers), so
// ratio differences are policy differences, not sampling noise.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pmatch/matching.hpp"
#include "pmatch/rng.hpp"

namespace pmatch::bench {

struct SweepSpec {
  std::string parameter;       // alpha | tau_idle | beta | omega
  std::vector<double> values;
};

struct ExperimentConfig {
  int num_demand_types = 30;
  int num_supply_types = 30;
  int horizon = 60;
  double alpha = 0.5;
  double tau_idle = 10.0;   // periods
  double omega = 0.05;      // degrees
  double beta = 0.5;
  int replicates = 1000;
  int n_inner_paths = 100;
  std::uint64_t master_seed = 1;
  std::vector<SweepSpec> sweeps = default_sweeps();
  // Optional injected geography; empty means draw seeded uniform points.
  std::vector<std::array<double, 2>> demand_coords;
  std::vector<std::array<double, 2>> supply_coords;

  static std::vector<SweepSpec> default_sweeps();
  static ExperimentConfig desk_scale();  // I=J=10, T=30, 200 replicates, 50 paths
};

void validate_config(const ExperimentConfig& config);

// Strict JSON round trip: unknown keys are errors. "preset": "desk" | "paper"
// selects the baseline the remaining keys override.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

// Sets one of alpha | tau_idle | beta | omega; throws on other names.
void set_parameter(ExperimentConfig& config, const std::string& name, double value);

struct GeneratedScenario {
  matching::MatchInstance instance;
  std::vector<std::array<double, 2>> demand_coords;  // one point per type
  std::vector<std::array<double, 2>> supply_coords;
  std::vector<double> demand_rate;  // per period; type i gets rate/I
  std::vector<double> supply_rate;
  std::vector<double> quality;      // s_ij, quality[i*J + j]
};

GeneratedScenario generate_market(const ExperimentConfig& config, Rng& rng);

double idle_decay(double alpha, double tau_idle, int t, int s);
double distance_decay(double beta, double omega, double d);

// Policy order everywhere: ON, ON+1..ON+4, Greedy, BPH.
inline constexpr int kNumPolicies = 7;
extern const std::array<const char*, kNumPolicies> kPolicyNames;
extern const std::array<const char*, kNumPolicies> kPolicyColumns;
extern const std::array<double, 4> kPlusMultipliers;

struct PolicyReport {
  std::string name;
  double mean_reward = 0.0;
  double ratio = 0.0;           // mean reward / LP3 objective (0 when LP3 is 0)
  double halfwidth = 0.0;       // 95% halfwidth of the ratio
  bool halfwidth_set = false;   // false when replicates < 2
};

struct SimReport {
  std::string label;
  double lp3_objective = 0.0;
  int replicates = 0;
  std::vector<PolicyReport> policies;
  std::vector<std::string> flags;  // "lp3-objective-zero", "ratio-above-1.05:<name>"
};

struct Interval {
  double mean = 0.0;
  double halfwidth = 0.0;
};

// Sample mean with 1.96 * stderr halfwidth; throws std::invalid_argument for n < 2.
Interval confidence_interval(const std::vector<double>& samples);

// One scenario, `replicates` simulated realizations, all policies per
// replicate. threads <= 0 means one worker per logical core. Results do not
// depend on the worker count. Solver errors carry the replicate index.
SimReport run_scenario_benchmark(const GeneratedScenario& scenario,
                                 const ExperimentConfig& config, const std::string& label,
                                 int threads);

// generate_market + run_scenario_benchmark under seeds derived from
// config.master_seed.
SimReport run_benchmark(const ExperimentConfig& config, int threads = 0);

// Base row plus one row per sweep value, each with a freshly drawn market
// (seeded per row). Default sweeps give 17 rows.
std::vector<SimReport> reproduce_tables(const ExperimentConfig& config, int threads = 0);

// report.csv / report.txt renderings. Both are deterministic byte-for-byte.
std::string report_csv(const std::vector<SimReport>& rows);
std::string report_text(const std::vector<SimReport>& rows);

}  // namespace pmatch::bench
