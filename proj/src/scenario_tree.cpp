#include "pmatch/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace pmatch::scenario {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ScenarioTree build_tree(int horizon, int num_types, const std::vector<NodeInput>& inputs) {
  if (horizon < 1) fail("horizon must be >= 1");
  if (num_types < 1) fail("num_types must be >= 1");
  if (inputs.empty()) fail("tree has no nodes");

  std::unordered_map<std::string, int> index;
  index.reserve(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (inputs[k].id.empty()) fail("node " + std::to_string(k) + " has an empty id");
    if (!index.emplace(inputs[k].id, static_cast<int>(k)).second)
      fail("duplicate node id '" + inputs[k].id + "'");
  }

  ScenarioTree tree;
  tree.horizon = horizon;
  tree.num_types = num_types;
  tree.nodes.resize(inputs.size());
  tree.children.resize(inputs.size());

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const NodeInput& in = inputs[k];
    ScenarioNode& n = tree.nodes[k];
    n.id = in.id;
    n.branch_prob = in.branch_prob;
    n.arrival_probs = in.arrival_probs;
    n.rewards = in.rewards;

    if (in.parent.empty()) {
      if (tree.root >= 0)
        fail("multiple roots: '" + tree.nodes[static_cast<std::size_t>(tree.root)].id +
             "' and '" + in.id + "'");
      tree.root = static_cast<int>(k);
      n.parent = -1;
    } else {
      auto it = index.find(in.parent);
      if (it == index.end())
        fail("node '" + in.id + "' references unknown parent '" + in.parent + "'");
      if (it->second == static_cast<int>(k)) fail("node '" + in.id + "' is its own parent");
      n.parent = it->second;
      tree.children[static_cast<std::size_t>(n.parent)].push_back(static_cast<int>(k));
    }

    if (static_cast<int>(n.arrival_probs.size()) != num_types)
      fail("node '" + n.id + "' has " + std::to_string(n.arrival_probs.size()) +
           " arrival probabilities, expected " + std::to_string(num_types));
    if (static_cast<int>(n.rewards.size()) != num_types)
      fail("node '" + n.id + "' has " + std::to_string(n.rewards.size()) +
           " rewards, expected " + std::to_string(num_types));
    if (!(n.branch_prob >= 0.0 && n.branch_prob <= 1.0 + kProbTolerance))
      fail("node '" + n.id + "' branch probability " + fmt_double(n.branch_prob) +
           " outside [0, 1]");

    double mass = 0.0, rp = 0.0;
    for (int i = 0; i < num_types; ++i) {
      const double p = n.arrival_probs[static_cast<std::size_t>(i)];
      const double r = n.rewards[static_cast<std::size_t>(i)];
      if (!(p >= 0.0 && p <= 1.0 + kProbTolerance))
        fail("node '" + n.id + "' type " + std::to_string(i) + " arrival probability " +
             fmt_double(p) + " outside [0, 1]");
      if (!(r >= 0.0) || !std::isfinite(r))
        fail("node '" + n.id + "' type " + std::to_string(i) + " reward " + fmt_double(r) +
             " is negative or not finite");
      mass += p;
      rp += r * p;
    }
    if (mass > 1.0 + kProbTolerance)
      fail("node '" + n.id + "' arrival probabilities sum to " + fmt_double(mass) +
           ", exceeding 1");
    n.type_mass = mass;
    n.reward_mass = rp;
  }

  if (tree.root < 0) fail("tree has no root (exactly one node must have a null parent)");

  const ScenarioNode& root = tree.nodes[static_cast<std::size_t>(tree.root)];
  if (root.type_mass != 0.0)
    fail("root '" + root.id + "' must have zero arrival probabilities");
  if (std::abs(root.branch_prob - 1.0) > kProbTolerance)
    fail("root '" + root.id + "' must have branch probability 1");

  // Periods and path masses top-down; also detects disconnected nodes (never
  // visited) and cycles (parent chains that bypass the root).
  std::vector<int> order;
  order.reserve(tree.nodes.size());
  order.push_back(tree.root);
  tree.nodes[static_cast<std::size_t>(tree.root)].period = 0;
  tree.nodes[static_cast<std::size_t>(tree.root)].path_mass = 0.0;
  for (std::size_t q = 0; q < order.size(); ++q) {
    const int u = order[q];
    const ScenarioNode& pn = tree.nodes[static_cast<std::size_t>(u)];
    for (int c : tree.children[static_cast<std::size_t>(u)]) {
      ScenarioNode& cn = tree.nodes[static_cast<std::size_t>(c)];
      cn.period = pn.period + 1;
      if (cn.period > horizon)
        fail("node '" + cn.id + "' sits at period " + std::to_string(cn.period) +
             ", beyond horizon " + std::to_string(horizon));
      cn.path_mass = pn.path_mass + cn.type_mass;
      order.push_back(c);
    }
  }
  if (order.size() != tree.nodes.size())
    fail("tree is disconnected or cyclic: " +
         std::to_string(tree.nodes.size() - order.size()) + " node(s) unreachable from root");

  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    const ScenarioNode& n = tree.nodes[k];
    const auto& kids = tree.children[k];
    if (kids.empty()) {
      if (n.period != horizon)
        fail("leaf '" + n.id + "' sits at period " + std::to_string(n.period) +
             ", every leaf must sit at horizon " + std::to_string(horizon));
      tree.leaves.push_back(static_cast<int>(k));
    } else {
      if (n.period == horizon)
        fail("node '" + n.id + "' at the horizon must not have children");
      double s = 0.0;
      for (int c : kids) s += tree.nodes[static_cast<std::size_t>(c)].branch_prob;
      if (std::abs(s - 1.0) > kProbTolerance)
        fail("branch probabilities sum " + fmt_double(s) + " != 1 (children of node '" +
             n.id + "')");
    }
  }

  return tree;
}

int sample_arrival(const ScenarioNode& node, double u) {
  double hi = 0.0;
  for (std::size_t i = 0; i < node.arrival_probs.size(); ++i) {
    hi += node.arrival_probs[i];
    if (u < hi) return static_cast<int>(i);
  }
  return -1;
}

SamplePath sample_path(const ScenarioTree& tree, Rng& rng) {
  SamplePath path;
  path.node_ids.reserve(static_cast<std::size_t>(tree.horizon) + 1);
  path.arrivals.assign(static_cast<std::size_t>(tree.horizon) + 1, -1);
  path.uniforms.assign(static_cast<std::size_t>(tree.horizon) + 1, 0.0);

  int cur = tree.root;
  path.node_ids.push_back(cur);
  for (int t = 1; t <= tree.horizon; ++t) {
    const auto& kids = tree.children[static_cast<std::size_t>(cur)];
    double u = rng.uniform01();
    double hi = 0.0;
    int next = kids.back();  // guard against branch probs summing to 1 - eps
    for (int c : kids) {
      hi += tree.node(c).branch_prob;
      if (u < hi) {
        next = c;
        break;
      }
    }
    cur = next;
    path.node_ids.push_back(cur);

    const double ua = rng.uniform01();
    path.uniforms[static_cast<std::size_t>(t)] = ua;
    path.arrivals[static_cast<std::size_t>(t)] = sample_arrival(tree.node(cur), ua);
  }
  return path;
}

std::vector<PathWeight> enumerate_paths(const ScenarioTree& tree, std::size_t cap) {
  if (tree.leaves.size() > cap)
    throw std::runtime_error("tree too large for enumeration: " +
                             std::to_string(tree.leaves.size()) + " leaves exceed cap " +
                             std::to_string(cap));
  std::vector<PathWeight> out;
  out.reserve(tree.leaves.size());
  for (int leaf : tree.leaves) {
    PathWeight pw;
    double prob = 1.0;
    for (int u = leaf; u >= 0; u = tree.node(u).parent) {
      pw.node_ids.push_back(u);
      if (u != tree.root) prob *= tree.node(u).branch_prob;
    }
    std::reverse(pw.node_ids.begin(), pw.node_ids.end());
    pw.probability = prob;
    out.push_back(std::move(pw));
  }
  return out;
}

double tbar_upper_bound(const ScenarioTree& tree) {
  double best = 0.0;
  for (int leaf : tree.leaves) best = std::max(best, tree.node(leaf).path_mass);
  return best;
}

// ---- JSON ----

namespace {

ScenarioTree tree_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("tree JSON root must be an object");
  for (const char* key : {"horizon", "num_types", "nodes"})
    if (!j.contains(key))
      throw std::runtime_error(std::string("tree JSON missing field '") + key + "'");

  const int horizon = j.at("horizon").get<int>();
  const int num_types = j.at("num_types").get<int>();
  const auto& jnodes = j.at("nodes");
  if (!jnodes.is_array()) throw std::runtime_error("tree JSON field 'nodes' must be an array");

  std::vector<NodeInput> inputs;
  inputs.reserve(jnodes.size());
  for (const auto& jn : jnodes) {
    NodeInput in;
    const auto& jid = jn.at("id");
    in.id = jid.is_string() ? jid.get<std::string>() : jid.dump();
    if (jn.contains("parent") && !jn.at("parent").is_null()) {
      const auto& jp = jn.at("parent");
      in.parent = jp.is_string() ? jp.get<std::string>() : jp.dump();
    }
    in.branch_prob = jn.value("branch_prob", 1.0);
    in.arrival_probs = jn.at("p").get<std::vector<double>>();
    in.rewards = jn.at("r").get<std::vector<double>>();
    inputs.push_back(std::move(in));
  }
  return build_tree(horizon, num_types, inputs);
}

}  // namespace

ScenarioTree parse_tree_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("tree JSON parse error: ") + e.what());
  }
  try {
    return tree_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("tree JSON schema error: ") + e.what());
  }
}

ScenarioTree load_tree_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tree file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tree_json(buf.str());
}

std::string tree_to_json(const ScenarioTree& tree) {
  nlohmann::ordered_json j;
  j["horizon"] = tree.horizon;
  j["num_types"] = tree.num_types;
  auto& arr = j["nodes"] = nlohmann::ordered_json::array();
  // Emit in BFS order so parents precede children.
  std::vector<int> order{tree.root};
  for (std::size_t q = 0; q < order.size(); ++q)
    for (int c : tree.children[static_cast<std::size_t>(order[q])]) order.push_back(c);
  for (int u : order) {
    const ScenarioNode& n = tree.node(u);
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    if (n.parent < 0)
      jn["parent"] = nullptr;
    else
      jn["parent"] = tree.node(n.parent).id;
    jn["branch_prob"] = n.branch_prob;
    jn["p"] = n.arrival_probs;
    jn["r"] = n.rewards;
    arr.push_back(std::move(jn));
  }
  return j.dump(2);
}

}  // namespace pmatch::scenario
