#pragma once

// Randomized fixture generators shared by the unit tests and the acceptance
// suite. Everything is driven by an explicit Rng so sweeps are reproducible.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pmatch/matching.hpp"
#include "pmatch/rng.hpp"
#include "pmatch/scenario_tree.hpp"

namespace testsupport {

// Random enumerable tree: horizon <= max_horizon, <= max_branch children per
// node, <= max_types customer types, per-node arrival mass strictly below 1.
inline pmatch::scenario::ScenarioTree random_tree(pmatch::Rng& rng, int max_horizon = 5,
                                                  int max_branch = 3, int max_types = 3) {
  using pmatch::scenario::NodeInput;
  const int horizon = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(max_horizon)));
  const int types = 1 + static_cast<int>(rng.uniform_index(
                            static_cast<std::size_t>(max_types)));

  std::vector<NodeInput> nodes;
  nodes.push_back({"n0", "", 1.0, std::vector<double>(types, 0.0),
                   std::vector<double>(types, 0.0)});
  // frontier holds indices into `nodes` of the current period's nodes.
  std::vector<std::size_t> frontier = {0};
  for (int t = 1; t <= horizon; ++t) {
    std::vector<std::size_t> next;
    for (std::size_t parent : frontier) {
      const int kids = 1 + static_cast<int>(rng.uniform_index(
                               static_cast<std::size_t>(max_branch)));
      std::vector<double> w(static_cast<std::size_t>(kids));
      double wsum = 0.0;
      for (double& v : w) {
        v = rng.uniform_pos();
        wsum += v;
      }
      for (int c = 0; c < kids; ++c) {
        NodeInput in;
        in.id = "n" + std::to_string(nodes.size());
        in.parent = nodes[parent].id;
        in.branch_prob = w[static_cast<std::size_t>(c)] / wsum;
        const double mass = rng.uniform(0.0, 0.95);
        std::vector<double> raw(static_cast<std::size_t>(types));
        double rsum = 0.0;
        for (double& v : raw) {
          v = rng.uniform_pos();
          rsum += v;
        }
        for (double& v : raw) v *= mass / rsum;
        in.arrival_probs = raw;
        in.rewards.resize(static_cast<std::size_t>(types));
        for (double& r : in.rewards) r = rng.uniform(0.0, 5.0);
        next.push_back(nodes.size());
        nodes.push_back(std::move(in));
      }
    }
    frontier = std::move(next);
  }
  return pmatch::scenario::build_tree(horizon, types, nodes);
}

// Random tree whose every root-to-leaf path carries total arrival mass 1
// (up to float rounding) and whose period-1 state is deterministic: the root
// has exactly one child. Suitable for the half-of-reward-mass bound.
inline pmatch::scenario::ScenarioTree random_mass_one_tree(pmatch::Rng& rng,
                                                           int max_horizon = 4,
                                                           int max_branch = 3,
                                                           int max_types = 2) {
  using pmatch::scenario::NodeInput;
  const int horizon = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::size_t>(max_horizon)));
  const int types = 1 + static_cast<int>(rng.uniform_index(
                            static_cast<std::size_t>(max_types)));

  std::vector<NodeInput> nodes;
  nodes.push_back({"n0", "", 1.0, std::vector<double>(types, 0.0),
                   std::vector<double>(types, 0.0)});

  struct Pending {
    std::size_t parent;
    double branch_prob;
    double budget;
    int period;
  };
  std::vector<Pending> queue = {{0, 1.0, 1.0, 1}};
  while (!queue.empty()) {
    const Pending cur = queue.back();
    queue.pop_back();
    NodeInput in;
    in.id = "n" + std::to_string(nodes.size());
    in.parent = nodes[cur.parent].id;
    in.branch_prob = cur.branch_prob;
    // Leaves absorb the remaining budget exactly; interior nodes keep a
    // fraction and pass the rest down every branch.
    const double mass =
        cur.period == horizon ? cur.budget : cur.budget * rng.uniform(0.2, 0.8);
    std::vector<double> raw(static_cast<std::size_t>(types));
    double rsum = 0.0;
    for (double& v : raw) {
      v = rng.uniform_pos();
      rsum += v;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] *= mass / rsum;
    // Force the exact total in the face of rounding: recompute the last entry
    // as the difference so the row sums to `mass` bit-for-bit where possible.
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < raw.size(); ++i) partial += raw[i];
    raw.back() = mass - partial;
    in.arrival_probs = raw;
    in.rewards.resize(static_cast<std::size_t>(types));
    for (double& r : in.rewards) r = rng.uniform(0.0, 5.0);

    const std::size_t self = nodes.size();
    nodes.push_back(std::move(in));
    if (cur.period < horizon) {
      const int kids = 1 + static_cast<int>(rng.uniform_index(
                               static_cast<std::size_t>(max_branch)));
      std::vector<double> w(static_cast<std::size_t>(kids));
      double wsum = 0.0;
      for (double& v : w) {
        v = rng.uniform_pos();
        wsum += v;
      }
      const double left = cur.budget - mass;
      for (int c = 0; c < kids; ++c)
        queue.push_back({self, w[static_cast<std::size_t>(c)] / wsum, left,
                         cur.period + 1});
    }
  }
  return pmatch::scenario::build_tree(horizon, types, nodes);
}

// Random small two-sided market. Rewards are dense positives on s <= t with a
// droppable fraction zeroed so the positive-edge pruning path gets exercised.
inline pmatch::matching::MatchInstance random_match_instance(pmatch::Rng& rng,
                                                             int max_i = 3, int max_j = 3,
                                                             int max_t = 6) {
  pmatch::matching::MatchInstance inst;
  inst.num_demand_types =
      1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(max_i)));
  inst.num_supply_types =
      1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(max_j)));
  inst.horizon =
      2 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(max_t - 1)));
  const int I = inst.num_demand_types, J = inst.num_supply_types, T = inst.horizon;
  inst.lambda.resize(static_cast<std::size_t>(I * T));
  inst.mu.resize(static_cast<std::size_t>(J * T));
  for (int t = 0; t < T; ++t) {
    const double lt = rng.uniform(0.05, 0.95);
    const double mt = rng.uniform(0.05, 0.95);
    for (int i = 0; i < I; ++i)
      inst.lambda[static_cast<std::size_t>(i * T + t)] = lt / I;
    for (int j = 0; j < J; ++j)
      inst.mu[static_cast<std::size_t>(j * T + t)] = mt / J;
  }
  inst.rewards.assign(static_cast<std::size_t>(I) * J * T * T, 0.0);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j)
      for (int t = 0; t < T; ++t)
        for (int s = 0; s <= t; ++s) {
          const double drop = rng.uniform01();
          const double val = drop < 0.2 ? 0.0 : rng.uniform(0.1, 4.0);
          inst.rewards[static_cast<std::size_t>(((i * J + j) * T + t) * T + s)] = val;
        }
  return inst;
}

}  // namespace testsupport
