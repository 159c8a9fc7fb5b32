#pragma once

// Exact max-reward transportation solver.
//
// Problem: maximize sum_e r_e x_e over bipartite edges e = (demand, supply)
// subject to per-demand capacity, per-supply capacity, per-edge capacity and
// x >= 0. Solved as min-cost flow (costs = -r) by successive shortest
// augmenting paths with node potentials; augmentation stops when the best
// residual path gains no more than the pivot tolerance. Ties in the path
// search resolve by node index and arc insertion order, so runs are
// deterministic.
//
// Optimal duals come from one extra shortest-path pass over the final
// residual network, seeded at both the source and (when flow is positive)
// the sink; the resulting potentials satisfy complementary slackness with
// the flow, which verify_solution checks directly.

#include <string>
#include <vector>

namespace pmatch::flow {

struct DemandNode {
  int i = 0;  // type
  int t = 0;  // period
  double cap = 0.0;
};

struct SupplyNode {
  int j = 0;
  int s = 0;
  double cap = 0.0;
};

struct Edge {
  int demand = 0;  // index into demands
  int supply = 0;  // index into supplies
  double reward = 0.0;
  double cap = 0.0;
};

struct BipartiteLpInstance {
  std::vector<DemandNode> demands;
  std::vector<SupplyNode> supplies;
  std::vector<Edge> edges;
};

struct LpSolution {
  std::vector<double> flows;  // aligned with instance.edges
  double objective = 0.0;
  std::vector<double> demand_duals;
  std::vector<double> supply_duals;
  std::vector<double> edge_duals;
  int augmentations = 0;
};

struct ResidualReport {
  double max_primal_violation = 0.0;  // capacity/nonnegativity overshoot
  double max_dual_violation = 0.0;    // reward above covered price
  double max_cs_violation = 0.0;      // complementary slackness slack x price
  double duality_gap = 0.0;           // |primal objective - dual objective|
};

inline constexpr double kPivotTolerance = 1e-9;

// Throws std::invalid_argument on malformed input: negative or non-finite
// caps, rewards <= 0 (prune them before building), bad node indices, or an
// edge whose supply period exceeds its demand period.
void validate_instance(const BipartiteLpInstance& inst);

// Exact optimum. Throws std::runtime_error if augmentation fails to converge
// within a generous iteration budget (reported with the current residuals).
LpSolution solve_max_reward_flow(const BipartiteLpInstance& inst,
                                 double tol = kPivotTolerance);

ResidualReport verify_solution(const BipartiteLpInstance& inst, const LpSolution& sol);

// Positive flows as CSV rows "i,j,t,s,x" (17 significant digits, stable edge
// order). The header line is included.
std::string flows_to_csv(const BipartiteLpInstance& inst, const LpSolution& sol);

std::string solution_to_json(const BipartiteLpInstance& inst, const LpSolution& sol);

}  // namespace pmatch::flow
