#include "pmatch/stp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pmatch::stp {

namespace {

constexpr double kMassSlack = 1e-9;

// Children-before-parent traversal order (reverse BFS).
std::vector<int> bottom_up_order(const ScenarioTree& tree) {
  std::vector<int> order{tree.root};
  order.reserve(tree.nodes.size());
  for (std::size_t q = 0; q < order.size(); ++q)
    for (int c : tree.children[static_cast<std::size_t>(order[q])]) order.push_back(c);
  std::reverse(order.begin(), order.end());
  return order;
}

// E[ sum_{t' > t} sum_i r_i p_i | node ] for every node.
std::vector<double> future_reward_mass(const ScenarioTree& tree) {
  std::vector<double> fut(tree.nodes.size(), 0.0);
  for (int u : bottom_up_order(tree)) {
    double acc = 0.0;
    for (int c : tree.children[static_cast<std::size_t>(u)]) {
      const auto& cn = tree.node(c);
      acc += cn.branch_prob * (cn.reward_mass + fut[static_cast<std::size_t>(c)]);
    }
    fut[static_cast<std::size_t>(u)] = acc;
  }
  return fut;
}

void require_valid_tbar(const ScenarioTree& tree, double tbar) {
  const double need = scenario::tbar_upper_bound(tree);
  if (tbar < need - kMassSlack)
    throw std::invalid_argument("invalid upper bound: tbar=" + std::to_string(tbar) +
                                " is below the realized path mass " + std::to_string(need));
}

double denom(const ScenarioTree& tree, int node, double tbar) {
  return 1.0 + tbar - tree.node(node).path_mass;
}

}  // namespace

std::vector<double> node_thresholds(const ScenarioTree& tree, double tbar) {
  require_valid_tbar(tree, tbar);
  const std::vector<double> fut = future_reward_mass(tree);
  std::vector<double> h(tree.nodes.size(), 0.0);
  for (std::size_t k = 0; k < tree.nodes.size(); ++k)
    h[k] = fut[k] / denom(tree, static_cast<int>(k), tbar);
  return h;
}

double threshold_exact(const ScenarioTree& tree, int node, double tbar) {
  return node_thresholds(tree, tbar)[static_cast<std::size_t>(node)];
}

ThresholdEstimate threshold_mc(const ScenarioTree& tree, int node, double tbar,
                               int n_paths, Rng& rng) {
  if (n_paths < 1) throw std::invalid_argument("threshold_mc needs n_paths >= 1");
  const auto& start = tree.node(node);
  if (start.path_mass > tbar + kMassSlack)
    throw std::invalid_argument("invalid upper bound: tbar below realized past mass");

  double sum = 0.0, sumsq = 0.0;
  for (int k = 0; k < n_paths; ++k) {
    double rp = 0.0, mass = start.path_mass;
    int cur = node;
    while (!tree.children[static_cast<std::size_t>(cur)].empty()) {
      const auto& kids = tree.children[static_cast<std::size_t>(cur)];
      const double u = rng.uniform01();
      double hi = 0.0;
      int next = kids.back();
      for (int c : kids) {
        hi += tree.node(c).branch_prob;
        if (u < hi) {
          next = c;
          break;
        }
      }
      cur = next;
      rp += tree.node(cur).reward_mass;
      mass += tree.node(cur).type_mass;
    }
    if (mass > tbar + kMassSlack)
      throw std::invalid_argument("invalid upper bound: sampled path mass " +
                                  std::to_string(mass) + " exceeds tbar " +
                                  std::to_string(tbar));
    sum += rp;
    sumsq += rp * rp;
  }

  const double n = static_cast<double>(n_paths);
  const double mean = sum / n;
  double var = 0.0;
  if (n_paths > 1) var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
  const double d = denom(tree, node, tbar);
  return {mean / d, std::sqrt(var / n) / d};
}

StpTrace run_stp(const ScenarioTree& tree, const SamplePath& path, double tbar,
                 const ThresholdEstimator& est, Rng* rng) {
  if (static_cast<int>(path.node_ids.size()) != tree.horizon + 1)
    throw std::invalid_argument("path length does not match the tree horizon");
  if (est.kind == ThresholdEstimator::Kind::mc && rng == nullptr)
    throw std::invalid_argument("mc estimator needs an rng");

  std::vector<double> exact;
  if (est.kind == ThresholdEstimator::Kind::exact) exact = node_thresholds(tree, tbar);

  StpTrace trace;
  trace.node_ids = path.node_ids;
  trace.thresholds.assign(path.node_ids.size(), 0.0);
  trace.cumulative_mass.assign(path.node_ids.size(), 0.0);

  for (std::size_t t = 0; t < path.node_ids.size(); ++t) {
    const int node = path.node_ids[t];
    trace.cumulative_mass[t] = tree.node(node).path_mass;
    trace.thresholds[t] =
        est.kind == ThresholdEstimator::Kind::exact
            ? exact[static_cast<std::size_t>(node)]
            : threshold_mc(tree, node, tbar, est.n_paths, *rng).value;
    if (t == 0 || trace.stop_period >= 0) continue;

    const int type = path.arrivals[t];
    if (type < 0) continue;
    const double r = tree.node(node).rewards[static_cast<std::size_t>(type)];
    if (r >= trace.thresholds[t]) {
      trace.stop_period = static_cast<int>(t);
      trace.accepted_type = type;
      trace.reward = r;
    }
  }
  return trace;
}

double stp_value_recursion(const ScenarioTree& tree, int node, double tbar) {
  const std::vector<double> h = node_thresholds(tree, tbar);
  std::vector<double> v(tree.nodes.size(), 0.0);
  for (int u : bottom_up_order(tree)) {
    double ev_next = 0.0;
    for (int c : tree.children[static_cast<std::size_t>(u)])
      ev_next += tree.node(c).branch_prob * v[static_cast<std::size_t>(c)];
    const auto& n = tree.node(u);
    double val = ev_next;
    for (int i = 0; i < tree.num_types; ++i) {
      const double r = n.rewards[static_cast<std::size_t>(i)];
      if (r >= h[static_cast<std::size_t>(u)])
        val += n.arrival_probs[static_cast<std::size_t>(i)] * (r - ev_next);
    }
    v[static_cast<std::size_t>(u)] = val;
  }
  return v[static_cast<std::size_t>(node)];
}

double expected_stp_value(const ScenarioTree& tree, double tbar) {
  return stp_value_recursion(tree, tree.root, tbar);
}

double offline_oracle(const ScenarioTree& tree, const SamplePath& path) {
  double best = 0.0;
  for (std::size_t t = 1; t < path.node_ids.size(); ++t) {
    const int type = path.arrivals[t];
    if (type < 0) continue;
    best = std::max(best, tree.node(path.node_ids[t]).rewards[static_cast<std::size_t>(type)]);
  }
  return best;
}

double expected_offline_value(const ScenarioTree& tree, std::size_t cap) {
  const auto paths = scenario::enumerate_paths(tree, cap);
  double total = 0.0;
  std::vector<double> values;
  for (const auto& pw : paths) {
    // Distinct positive reward levels reachable along this path.
    values.clear();
    for (std::size_t t = 1; t < pw.node_ids.size(); ++t) {
      const auto& n = tree.node(pw.node_ids[t]);
      for (int i = 0; i < tree.num_types; ++i)
        if (n.arrival_probs[static_cast<std::size_t>(i)] > 0.0 &&
            n.rewards[static_cast<std::size_t>(i)] > 0.0)
          values.push_back(n.rewards[static_cast<std::size_t>(i)]);
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    // P(max <= v) = prod_t (1 - sum_{i: r_i > v} p_i); E[max] by levels.
    auto prob_max_below = [&](double v, bool strict) {
      double prod = 1.0;
      for (std::size_t t = 1; t < pw.node_ids.size(); ++t) {
        const auto& n = tree.node(pw.node_ids[t]);
        double excess = 0.0;
        for (int i = 0; i < tree.num_types; ++i) {
          const double r = n.rewards[static_cast<std::size_t>(i)];
          if (strict ? (r >= v) : (r > v)) excess += n.arrival_probs[static_cast<std::size_t>(i)];
        }
        prod *= std::max(0.0, 1.0 - excess);
      }
      return prod;
    };

    double e_max = 0.0;
    for (double v : values) e_max += v * (prob_max_below(v, false) - prob_max_below(v, true));
    total += pw.probability * e_max;
  }
  return total;
}

double reward_mass_bound(const ScenarioTree& tree) {
  std::vector<double> rm(tree.nodes.size(), 0.0);
  for (int u : bottom_up_order(tree)) {
    double acc = tree.node(u).reward_mass;
    for (int c : tree.children[static_cast<std::size_t>(u)])
      acc += tree.node(c).branch_prob * rm[static_cast<std::size_t>(c)];
    rm[static_cast<std::size_t>(u)] = acc;
  }
  return rm[static_cast<std::size_t>(tree.root)];
}

namespace {

// sum_i p_i (r_i - h)^+ at one node.
double positive_part_mass(const scenario::ScenarioNode& n, double h) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n.arrival_probs.size(); ++i)
    acc += n.arrival_probs[i] * std::max(0.0, n.rewards[i] - h);
  return acc;
}

}  // namespace

ZTrace z_trace(const ScenarioTree& tree, const StpTrace& trace,
               const std::vector<double>& thresholds) {
  if (thresholds.size() != trace.node_ids.size())
    throw std::invalid_argument("thresholds must align with the trace path");
  const std::size_t stop = trace.stop_period >= 0
                               ? static_cast<std::size_t>(trace.stop_period)
                               : trace.node_ids.size();  // T+1 when never sold

  ZTrace zt;
  double pastsum = 0.0;
  for (std::size_t t = 0; t < trace.node_ids.size() && t <= stop; ++t) {
    pastsum += positive_part_mass(tree.node(trace.node_ids[t]), thresholds[t]);
    zt.z.push_back(thresholds[t] + pastsum);
  }
  if (stop == trace.node_ids.size()) zt.z.push_back(pastsum);  // Z(S_{T+1}): h vanishes
  return zt;
}

SubmartingaleReport check_submartingale(const ScenarioTree& tree, double tbar,
                                        double threshold_scale) {
  std::vector<double> h = node_thresholds(tree, tbar);
  if (threshold_scale != 1.0)
    for (double& v : h) v *= threshold_scale;

  std::vector<double> pastsum(tree.nodes.size(), 0.0), z(tree.nodes.size(), 0.0);
  std::vector<int> order{tree.root};
  for (std::size_t q = 0; q < order.size(); ++q)
    for (int c : tree.children[static_cast<std::size_t>(order[q])]) order.push_back(c);
  for (int u : order) {
    const auto& n = tree.node(u);
    const double parent_sum = n.parent >= 0 ? pastsum[static_cast<std::size_t>(n.parent)] : 0.0;
    pastsum[static_cast<std::size_t>(u)] =
        parent_sum + positive_part_mass(n, h[static_cast<std::size_t>(u)]);
    z[static_cast<std::size_t>(u)] =
        h[static_cast<std::size_t>(u)] + pastsum[static_cast<std::size_t>(u)];
  }

  SubmartingaleReport report;
  report.max_violation = -1e300;
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    if (tree.children[k].empty()) continue;
    double ez_next = 0.0;
    for (int c : tree.children[k])
      ez_next += tree.node(c).branch_prob * z[static_cast<std::size_t>(c)];
    const double viol = z[k] - ez_next;
    if (viol > report.max_violation) {
      report.max_violation = viol;
      report.worst_node = tree.nodes[k].id;
    }
  }
  if (report.max_violation == -1e300) report.max_violation = 0.0;
  return report;
}

OptionalStoppingReport check_optional_stopping(const ScenarioTree& tree, double tbar) {
  const std::vector<double> h = node_thresholds(tree, tbar);
  const auto paths = scenario::enumerate_paths(tree);

  OptionalStoppingReport rep;
  for (const auto& pw : paths) {
    double survive = 1.0;
    double pastsum = 0.0;
    double ev = 0.0, ez = 0.0;
    for (std::size_t t = 1; t < pw.node_ids.size(); ++t) {
      const auto& n = tree.node(pw.node_ids[t]);
      const double ht = h[static_cast<std::size_t>(pw.node_ids[t])];
      pastsum += positive_part_mass(n, ht);

      double q = 0.0, qr = 0.0;
      for (int i = 0; i < tree.num_types; ++i) {
        const double r = n.rewards[static_cast<std::size_t>(i)];
        if (r >= ht) {
          q += n.arrival_probs[static_cast<std::size_t>(i)];
          qr += n.arrival_probs[static_cast<std::size_t>(i)] * r;
        }
      }
      ev += survive * qr;
      ez += survive * q * (ht + pastsum);
      survive *= 1.0 - q;
    }
    ez += survive * pastsum;  // stop never happened: Z(S_{T+1})
    rep.e_v_stp += pw.probability * ev;
    rep.e_z_tau += pw.probability * ez;
  }
  rep.gap = std::abs(rep.e_v_stp - rep.e_z_tau);
  return rep;
}

RatioLemmaResult ratio_lemma_check(double a, double b, const std::vector<double>& p,
                                   const std::vector<double>& r) {
  if (!(a >= 0.0)) throw std::invalid_argument("ratio_lemma_check requires a >= 0");
  if (!(b >= 1.0)) throw std::invalid_argument("ratio_lemma_check requires b >= 1");
  if (p.size() != r.size())
    throw std::invalid_argument("ratio_lemma_check requires matching p and r lengths");
  double sp = 0.0, spr = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !(r[i] >= 0.0))
      throw std::invalid_argument("ratio_lemma_check requires nonnegative p and r");
    sp += p[i];
    spr += p[i] * r[i];
    pos += p[i] * std::max(0.0, r[i] - a / b);
  }
  RatioLemmaResult res;
  res.lhs = (a + spr) / (b + sp);
  res.rhs = a / b + pos;
  res.holds = res.lhs <= res.rhs + 1e-12;
  return res;
}

ScenarioTree tight_instance(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("epsilon out of range (0, 1): " + std::to_string(epsilon));
  std::vector<scenario::NodeInput> nodes;
  nodes.push_back({"root", "", 1.0, {0.0}, {0.0}});
  nodes.push_back({"t1", "root", 1.0, {1.0 - epsilon}, {1.0}});
  nodes.push_back({"t2", "t1", 1.0, {epsilon}, {1.0 / epsilon}});
  return scenario::build_tree(2, 1, nodes);
}

}  // namespace pmatch::stp
