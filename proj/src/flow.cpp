#include "pmatch/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <stdexcept>

#include "json.hpp"

namespace pmatch::flow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Arc {
  int to = 0;
  double residual = 0.0;  // remaining capacity
  double cost = 0.0;
};

// Paired arcs: arc k and k^1 are mutual reverses; flow on a forward arc is
// the residual of its reverse.
struct Network {
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> adj;

  int add_node() {
    adj.emplace_back();
    return static_cast<int>(adj.size()) - 1;
  }

  int add_arc(int from, int to, double cap, double cost) {
    const int id = static_cast<int>(arcs.size());
    arcs.push_back({to, cap, cost});
    arcs.push_back({from, 0.0, -cost});
    adj[static_cast<std::size_t>(from)].push_back(id);
    adj[static_cast<std::size_t>(to)].push_back(id + 1);
    return id;
  }
};

struct Dist {
  std::vector<double> d;
  std::vector<int> parent_arc;
};

// Dijkstra over residual arcs with reduced costs cost + pi[u] - pi[v]
// (clamped at zero against roundoff). `seeds` are (node, initial label)
// pairs; with all reduced costs nonnegative, arbitrary initial labels keep
// the algorithm exact. Ties pop by node index, and arcs relax in insertion
// order with strict improvement only, so the search is deterministic.
Dist dijkstra(const Network& net, const std::vector<double>& pi,
              const std::vector<std::pair<int, double>>& seeds) {
  Dist out;
  out.d.assign(net.adj.size(), kInf);
  out.parent_arc.assign(net.adj.size(), -1);

  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  for (auto [node, label] : seeds) {
    if (label < out.d[static_cast<std::size_t>(node)]) {
      out.d[static_cast<std::size_t>(node)] = label;
      heap.push({label, node});
    }
  }
  while (!heap.empty()) {
    auto [du, u] = heap.top();
    heap.pop();
    if (du > out.d[static_cast<std::size_t>(u)]) continue;
    for (int a : net.adj[static_cast<std::size_t>(u)]) {
      const Arc& arc = net.arcs[static_cast<std::size_t>(a)];
      if (arc.residual <= 1e-15) continue;
      const double w = std::max(
          0.0, arc.cost + pi[static_cast<std::size_t>(u)] - pi[static_cast<std::size_t>(arc.to)]);
      const double nd = du + w;
      if (nd < out.d[static_cast<std::size_t>(arc.to)]) {
        out.d[static_cast<std::size_t>(arc.to)] = nd;
        out.parent_arc[static_cast<std::size_t>(arc.to)] = a;
        heap.push({nd, arc.to});
      }
    }
  }
  return out;
}

}  // namespace

void validate_instance(const BipartiteLpInstance& inst) {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("lp instance: " + msg); };
  for (std::size_t k = 0; k < inst.demands.size(); ++k) {
    const double c = inst.demands[k].cap;
    if (!(c >= 0.0) || !std::isfinite(c))
      bad("demand node " + std::to_string(k) + " has invalid capacity");
  }
  for (std::size_t k = 0; k < inst.supplies.size(); ++k) {
    const double c = inst.supplies[k].cap;
    if (!(c >= 0.0) || !std::isfinite(c))
      bad("supply node " + std::to_string(k) + " has invalid capacity");
  }
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    const Edge& e = inst.edges[k];
    if (e.demand < 0 || e.demand >= static_cast<int>(inst.demands.size()))
      bad("edge " + std::to_string(k) + " demand index out of range");
    if (e.supply < 0 || e.supply >= static_cast<int>(inst.supplies.size()))
      bad("edge " + std::to_string(k) + " supply index out of range");
    if (!(e.reward > 0.0) || !std::isfinite(e.reward))
      bad("edge " + std::to_string(k) + " has reward <= 0; prune before solving");
    if (!(e.cap >= 0.0) || !std::isfinite(e.cap))
      bad("edge " + std::to_string(k) + " has invalid capacity");
    if (inst.supplies[static_cast<std::size_t>(e.supply)].s >
        inst.demands[static_cast<std::size_t>(e.demand)].t)
      bad("edge " + std::to_string(k) + " matches a supply period after its demand period");
  }
}

LpSolution solve_max_reward_flow(const BipartiteLpInstance& inst, double tol) {
  validate_instance(inst);

  const int nd = static_cast<int>(inst.demands.size());
  const int ns = static_cast<int>(inst.supplies.size());
  Network net;
  const int src = net.add_node();
  for (int k = 0; k < nd + ns; ++k) net.add_node();
  const int sink = net.add_node();
  auto dnode = [&](int k) { return 1 + k; };
  auto snode = [&](int k) { return 1 + nd + k; };

  for (int k = 0; k < nd; ++k) net.add_arc(src, dnode(k), inst.demands[static_cast<std::size_t>(k)].cap, 0.0);
  std::vector<int> supply_arc(static_cast<std::size_t>(ns));
  for (int k = 0; k < ns; ++k)
    supply_arc[static_cast<std::size_t>(k)] =
        net.add_arc(snode(k), sink, inst.supplies[static_cast<std::size_t>(k)].cap, 0.0);
  std::vector<int> edge_arc(inst.edges.size());
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    const Edge& e = inst.edges[k];
    edge_arc[k] = net.add_arc(dnode(e.demand), snode(e.supply), e.cap, -e.reward);
  }

  // Initial potentials follow the layer structure so reduced costs start
  // nonnegative: pi(supply) = -max reward into it, pi(sink) = min over those.
  std::vector<double> pi(net.adj.size(), 0.0);
  for (const Edge& e : inst.edges)
    pi[static_cast<std::size_t>(snode(e.supply))] =
        std::min(pi[static_cast<std::size_t>(snode(e.supply))], -e.reward);
  double pk = 0.0;
  for (int k = 0; k < ns; ++k) pk = std::min(pk, pi[static_cast<std::size_t>(snode(k))]);
  pi[static_cast<std::size_t>(sink)] = pk;

  LpSolution sol;
  const long max_iters = 10L * static_cast<long>(net.arcs.size()) + 100;
  for (long iter = 0;; ++iter) {
    if (iter >= max_iters)
      throw std::runtime_error("flow solver did not converge after " +
                               std::to_string(max_iters) + " augmentations");
    const Dist dist = dijkstra(net, pi, {{src, 0.0}});
    if (dist.d[static_cast<std::size_t>(sink)] == kInf) break;
    const double true_cost =
        dist.d[static_cast<std::size_t>(sink)] + pi[static_cast<std::size_t>(sink)];
    if (true_cost >= -tol) break;

    const double dk = dist.d[static_cast<std::size_t>(sink)];
    for (std::size_t v = 0; v < pi.size(); ++v)
      pi[v] += std::min(dist.d[v], dk);  // capped update keeps reduced costs >= 0

    double push = kInf;
    for (int v = sink; v != src;) {
      const int a = dist.parent_arc[static_cast<std::size_t>(v)];
      push = std::min(push, net.arcs[static_cast<std::size_t>(a)].residual);
      v = net.arcs[static_cast<std::size_t>(a ^ 1)].to;
    }
    for (int v = sink; v != src;) {
      const int a = dist.parent_arc[static_cast<std::size_t>(v)];
      net.arcs[static_cast<std::size_t>(a)].residual -= push;
      net.arcs[static_cast<std::size_t>(a ^ 1)].residual += push;
      v = net.arcs[static_cast<std::size_t>(a ^ 1)].to;
    }
    ++sol.augmentations;
  }

  sol.flows.resize(inst.edges.size());
  sol.objective = 0.0;
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    sol.flows[k] = net.arcs[static_cast<std::size_t>(edge_arc[k] ^ 1)].residual;
    sol.objective += sol.flows[k] * inst.edges[k].reward;
  }

  // Dual extraction. Total flow > 0 adds the sink seed: the free flow value
  // means source and sink must share a potential, which the seed encodes.
  double total = 0.0;
  for (int k = 0; k < ns; ++k)
    total += net.arcs[static_cast<std::size_t>(supply_arc[static_cast<std::size_t>(k)] ^ 1)].residual;
  std::vector<std::pair<int, double>> seeds{{src, 0.0}};
  if (total > 1e-12) seeds.push_back({sink, -pi[static_cast<std::size_t>(sink)]});
  Dist fin = dijkstra(net, pi, seeds);

  double dmax = 0.0;
  for (double v : fin.d)
    if (v != kInf) dmax = std::max(dmax, v);
  std::vector<double> tau(pi.size());
  for (std::size_t v = 0; v < pi.size(); ++v)
    tau[v] = pi[v] + (fin.d[v] == kInf ? dmax : fin.d[v]);
  const double shift = tau[static_cast<std::size_t>(src)];

  sol.demand_duals.resize(static_cast<std::size_t>(nd));
  for (int k = 0; k < nd; ++k)
    sol.demand_duals[static_cast<std::size_t>(k)] =
        std::max(0.0, tau[static_cast<std::size_t>(dnode(k))] - shift);
  sol.supply_duals.resize(static_cast<std::size_t>(ns));
  for (int k = 0; k < ns; ++k)
    sol.supply_duals[static_cast<std::size_t>(k)] =
        std::max(0.0, -(tau[static_cast<std::size_t>(snode(k))] - shift));
  sol.edge_duals.resize(inst.edges.size());
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    const Edge& e = inst.edges[k];
    sol.edge_duals[k] = std::max(
        0.0, e.reward - sol.demand_duals[static_cast<std::size_t>(e.demand)] -
                 sol.supply_duals[static_cast<std::size_t>(e.supply)]);
  }
  return sol;
}

ResidualReport verify_solution(const BipartiteLpInstance& inst, const LpSolution& sol) {
  if (sol.flows.size() != inst.edges.size() ||
      sol.demand_duals.size() != inst.demands.size() ||
      sol.supply_duals.size() != inst.supplies.size() ||
      sol.edge_duals.size() != inst.edges.size())
    throw std::invalid_argument("solution does not match the instance shape");

  ResidualReport rep;
  std::vector<double> din(inst.demands.size(), 0.0), sin(inst.supplies.size(), 0.0);
  double primal = 0.0;
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    const Edge& e = inst.edges[k];
    const double x = sol.flows[k];
    rep.max_primal_violation = std::max({rep.max_primal_violation, -x, x - e.cap});
    din[static_cast<std::size_t>(e.demand)] += x;
    sin[static_cast<std::size_t>(e.supply)] += x;
    primal += x * e.reward;
  }
  for (std::size_t k = 0; k < inst.demands.size(); ++k)
    rep.max_primal_violation =
        std::max(rep.max_primal_violation, din[k] - inst.demands[k].cap);
  for (std::size_t k = 0; k < inst.supplies.size(); ++k)
    rep.max_primal_violation =
        std::max(rep.max_primal_violation, sin[k] - inst.supplies[k].cap);

  double dual = 0.0;
  for (std::size_t k = 0; k < inst.demands.size(); ++k) {
    rep.max_dual_violation = std::max(rep.max_dual_violation, -sol.demand_duals[k]);
    dual += inst.demands[k].cap * sol.demand_duals[k];
    rep.max_cs_violation = std::max(
        rep.max_cs_violation, sol.demand_duals[k] * (inst.demands[k].cap - din[k]));
  }
  for (std::size_t k = 0; k < inst.supplies.size(); ++k) {
    rep.max_dual_violation = std::max(rep.max_dual_violation, -sol.supply_duals[k]);
    dual += inst.supplies[k].cap * sol.supply_duals[k];
    rep.max_cs_violation = std::max(
        rep.max_cs_violation, sol.supply_duals[k] * (inst.supplies[k].cap - sin[k]));
  }
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    const Edge& e = inst.edges[k];
    const double covered = sol.demand_duals[static_cast<std::size_t>(e.demand)] +
                           sol.supply_duals[static_cast<std::size_t>(e.supply)] +
                           sol.edge_duals[k];
    rep.max_dual_violation =
        std::max({rep.max_dual_violation, -sol.edge_duals[k], e.reward - covered});
    dual += e.cap * sol.edge_duals[k];
    rep.max_cs_violation =
        std::max({rep.max_cs_violation, sol.flows[k] * (covered - e.reward),
                  sol.edge_duals[k] * (e.cap - sol.flows[k])});
  }
  rep.duality_gap = std::abs(primal - dual);
  return rep;
}

std::string flows_to_csv(const BipartiteLpInstance& inst, const LpSolution& sol) {
  std::string out = "i,j,t,s,x\n";
  char buf[128];
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    if (sol.flows[k] <= 0.0) continue;
    const Edge& e = inst.edges[k];
    const DemandNode& d = inst.demands[static_cast<std::size_t>(e.demand)];
    const SupplyNode& s = inst.supplies[static_cast<std::size_t>(e.supply)];
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g\n", d.i, s.j, d.t, s.s, sol.flows[k]);
    out += buf;
  }
  return out;
}

std::string solution_to_json(const BipartiteLpInstance& inst, const LpSolution& sol) {
  nlohmann::ordered_json j;
  j["objective"] = sol.objective;
  j["augmentations"] = sol.augmentations;
  auto& flows = j["flows"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < inst.edges.size(); ++k) {
    if (sol.flows[k] <= 0.0) continue;
    const Edge& e = inst.edges[k];
    flows.push_back({{"i", inst.demands[static_cast<std::size_t>(e.demand)].i},
                     {"j", inst.supplies[static_cast<std::size_t>(e.supply)].j},
                     {"t", inst.demands[static_cast<std::size_t>(e.demand)].t},
                     {"s", inst.supplies[static_cast<std::size_t>(e.supply)].s},
                     {"x", sol.flows[k]}});
  }
  j["demand_duals"] = sol.demand_duals;
  j["supply_duals"] = sol.supply_duals;
  j["edge_duals"] = sol.edge_duals;
  return j.dump(2);
}

}  // namespace pmatch::flow
