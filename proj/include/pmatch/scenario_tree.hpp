#pragma once

// Finite scenario tree driving per-period customer arrivals.
//
// A tree with horizon T has its root at period 0 (a dummy state with no
// arrivals) and every leaf at period T. Each node carries the probability of
// being reached from its parent (branch_prob; siblings sum to 1) together
// with one arrival probability and one reward per customer type for the
// period it occupies. Within a period at most one customer arrives: type i
// arrives when a uniform draw u falls in
//   [ sum_{k<i} p_k , sum_{k<=i} p_k ),
// and no one arrives when u lands beyond the total mass. The per-node type
// masses therefore must not exceed 1.

#include <cstdint>
#include <string>
#include <vector>

#include "pmatch/rng.hpp"

namespace pmatch::scenario {

struct NodeInput {
  std::string id;
  std::string parent;  // empty for the root
  double branch_prob = 1.0;
  std::vector<double> arrival_probs;
  std::vector<double> rewards;
};

struct ScenarioNode {
  std::string id;
  int parent = -1;
  int period = 0;
  double branch_prob = 1.0;
  std::vector<double> arrival_probs;
  std::vector<double> rewards;

  // Cached aggregates, filled during build.
  double type_mass = 0.0;    // sum_i arrival_probs[i]
  double reward_mass = 0.0;  // sum_i rewards[i] * arrival_probs[i]
  double path_mass = 0.0;    // cumulative type mass along root..this, inclusive
};

struct ScenarioTree {
  int horizon = 0;
  int num_types = 0;
  int root = -1;
  std::vector<ScenarioNode> nodes;
  std::vector<std::vector<int>> children;  // aligned with nodes
  std::vector<int> leaves;                 // node indices at period == horizon

  const ScenarioNode& node(int idx) const { return nodes[static_cast<std::size_t>(idx)]; }
};

// One realized walk from the root to a leaf, with the arrival draws used.
// Entries are aligned by period: node_ids[t] is the node occupied at period t,
// arrivals[t] is the realized type index (-1: none) and uniforms[t] the draw
// behind it. Period 0 never has an arrival.
struct SamplePath {
  std::vector<int> node_ids;
  std::vector<int> arrivals;
  std::vector<double> uniforms;
};

// Leaf path with its unconditional probability (product of branch probs).
struct PathWeight {
  std::vector<int> node_ids;
  double probability = 0.0;
};

inline constexpr double kProbTolerance = 1e-12;
inline constexpr std::size_t kEnumerationCap = 1'000'000;

// Validates structure and probabilities; throws std::invalid_argument with
// the offending node named. Rejects rather than renormalizes: sibling branch
// probabilities must sum to 1 and per-node type mass must stay within 1, both
// to within kProbTolerance.
ScenarioTree build_tree(int horizon, int num_types, const std::vector<NodeInput>& nodes);

// Arrival interval lookup for one uniform draw; -1 when no type arrives.
int sample_arrival(const ScenarioNode& node, double u);

// Walks root to leaf choosing children by branch probability, drawing one
// arrival uniform per period. Identical seeds give identical paths.
SamplePath sample_path(const ScenarioTree& tree, Rng& rng);

// All root-to-leaf paths with probabilities. Throws when the leaf count
// exceeds `cap` (exact enumeration is meant for desk-scale trees).
std::vector<PathWeight> enumerate_paths(const ScenarioTree& tree,
                                        std::size_t cap = kEnumerationCap);

// Max over leaves of the cumulative type mass along the path: the tightest
// uniform upper bound on realized total arrival mass.
double tbar_upper_bound(const ScenarioTree& tree);

// JSON round trip. Schema:
//   {"horizon": T, "num_types": I,
//    "nodes": [{"id": "...", "parent": null|"...", "branch_prob": x,
//               "p": [...], "r": [...]}, ...]}
// Parse errors throw std::runtime_error; invariant violations propagate from
// build_tree as std::invalid_argument.
ScenarioTree load_tree_json(const std::string& path);
ScenarioTree parse_tree_json(const std::string& text);
std::string tree_to_json(const ScenarioTree& tree);

}  // namespace pmatch::scenario
