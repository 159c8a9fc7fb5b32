#include "pmatch/bench.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace pmatch::bench {

using json = nlohmann::ordered_json;

const std::array<const char*, kNumPolicies> kPolicyNames = {
    "ON", "ON+1", "ON+2", "ON+3", "ON+4", "Greedy", "BPH"};
const std::array<const char*, kNumPolicies> kPolicyColumns = {
    "on", "on_plus_1", "on_plus_2", "on_plus_3", "on_plus_4", "greedy", "bid_price"};
const std::array<double, 4> kPlusMultipliers = {1.0, 1.3, 1.6, 2.0};

namespace {

// Seed derivation tags; fixed forever so reports stay reproducible.
constexpr std::uint64_t kTagMarket = 1;
constexpr std::uint64_t kTagRealization = 2;
constexpr std::uint64_t kTagPick = 3;
constexpr std::uint64_t kTagThreshold = 4;
constexpr std::uint64_t kTagRow = 5;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

std::vector<SweepSpec> ExperimentConfig::default_sweeps() {
  return {{"alpha", {0.0, 0.2, 0.8, 1.0}},
          {"tau_idle", {2.0, 5.0, 20.0, 30.0}},
          {"beta", {0.0, 0.2, 0.8, 1.0}},
          {"omega", {0.005, 0.02, 0.08, 0.15}}};
}

ExperimentConfig ExperimentConfig::desk_scale() {
  ExperimentConfig cfg;
  cfg.num_demand_types = 10;
  cfg.num_supply_types = 10;
  cfg.horizon = 30;
  cfg.replicates = 200;
  cfg.n_inner_paths = 50;
  return cfg;
}

void validate_config(const ExperimentConfig& config) {
  if (config.num_demand_types < 1 || config.num_supply_types < 1 || config.horizon < 1)
    fail("market dimensions must be positive");
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (!(config.beta >= 0.0 && config.beta <= 1.0)) fail("beta must lie in [0, 1]");
  if (!(config.tau_idle > 0.0) || !std::isfinite(config.tau_idle))
    fail("tau_idle must be positive");
  if (!(config.omega > 0.0) || !std::isfinite(config.omega)) fail("omega must be positive");
  if (config.replicates < 1) fail("replicates must be at least 1");
  if (config.n_inner_paths < 1) fail("n_inner_paths must be at least 1");
  for (const SweepSpec& sw : config.sweeps) {
    if (sw.values.empty()) fail("sweep over '" + sw.parameter + "' has no values");
    for (double v : sw.values) {
      ExperimentConfig probe = config;
      probe.sweeps.clear();
      set_parameter(probe, sw.parameter, v);  // throws on unknown names
      if ((sw.parameter == "alpha" || sw.parameter == "beta") && !(v >= 0.0 && v <= 1.0))
        fail("sweep value " + fmt("%g", v) + " out of [0, 1] for " + sw.parameter);
      if ((sw.parameter == "tau_idle" || sw.parameter == "omega") && !(v > 0.0))
        fail("sweep value " + fmt("%g", v) + " must be positive for " + sw.parameter);
    }
  }
  if (!config.demand_coords.empty() &&
      config.demand_coords.size() != static_cast<std::size_t>(config.num_demand_types))
    fail("demand_coords must list one point per demand type");
  if (!config.supply_coords.empty() &&
      config.supply_coords.size() != static_cast<std::size_t>(config.num_supply_types))
    fail("supply_coords must list one point per supply type");
  for (const auto& c : config.demand_coords)
    if (!std::isfinite(c[0]) || !std::isfinite(c[1])) fail("demand_coords must be finite");
  for (const auto& c : config.supply_coords)
    if (!std::isfinite(c[0]) || !std::isfinite(c[1])) fail("supply_coords must be finite");
}

void set_parameter(ExperimentConfig& config, const std::string& name, double value) {
  if (name == "alpha")
    config.alpha = value;
  else if (name == "tau_idle")
    config.tau_idle = value;
  else if (name == "beta")
    config.beta = value;
  else if (name == "omega")
    config.omega = value;
  else
    fail("unknown sweep parameter '" + name + "'");
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config JSON must be an object");

  ExperimentConfig cfg;
  if (j.contains("preset")) {
    const std::string preset = j["preset"].get<std::string>();
    if (preset == "desk")
      cfg = ExperimentConfig::desk_scale();
    else if (preset != "paper")
      throw std::runtime_error("unknown preset '" + preset + "' (expected desk or paper)");
  }

  auto coords = [](const json& arr, const char* what) {
    std::vector<std::array<double, 2>> out;
    if (!arr.is_array()) throw std::runtime_error(std::string(what) + " must be an array");
    for (const json& p : arr) {
      if (!p.is_array() || p.size() != 2)
        throw std::runtime_error(std::string(what) + " entries must be [x, y] pairs");
      out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return out;
  };

  for (const auto& [key, val] : j.items()) {
    if (key == "preset") continue;
    if (key == "num_demand_types")
      cfg.num_demand_types = val.get<int>();
    else if (key == "num_supply_types")
      cfg.num_supply_types = val.get<int>();
    else if (key == "horizon")
      cfg.horizon = val.get<int>();
    else if (key == "alpha")
      cfg.alpha = val.get<double>();
    else if (key == "tau_idle")
      cfg.tau_idle = val.get<double>();
    else if (key == "beta")
      cfg.beta = val.get<double>();
    else if (key == "omega")
      cfg.omega = val.get<double>();
    else if (key == "replicates")
      cfg.replicates = val.get<int>();
    else if (key == "n_inner_paths")
      cfg.n_inner_paths = val.get<int>();
    else if (key == "master_seed")
      cfg.master_seed = val.get<std::uint64_t>();
    else if (key == "demand_coords")
      cfg.demand_coords = coords(val, "demand_coords");
    else if (key == "supply_coords")
      cfg.supply_coords = coords(val, "supply_coords");
    else if (key == "sweeps") {
      cfg.sweeps.clear();
      if (!val.is_array()) throw std::runtime_error("sweeps must be an array");
      for (const json& sw : val) {
        SweepSpec spec;
        spec.parameter = sw.at("parameter").get<std::string>();
        for (const json& v : sw.at("values")) spec.values.push_back(v.get<double>());
        cfg.sweeps.push_back(std::move(spec));
      }
    } else {
      throw std::runtime_error("unknown config key '" + key + "'");
    }
  }
  validate_config(cfg);
  return cfg;
}

std::string config_to_json(const ExperimentConfig& config) {
  json j;
  j["num_demand_types"] = config.num_demand_types;
  j["num_supply_types"] = config.num_supply_types;
  j["horizon"] = config.horizon;
  j["alpha"] = config.alpha;
  j["tau_idle"] = config.tau_idle;
  j["beta"] = config.beta;
  j["omega"] = config.omega;
  j["replicates"] = config.replicates;
  j["n_inner_paths"] = config.n_inner_paths;
  j["master_seed"] = config.master_seed;
  j["sweeps"] = json::array();
  for (const SweepSpec& sw : config.sweeps)
    j["sweeps"].push_back({{"parameter", sw.parameter}, {"values", sw.values}});
  if (!config.demand_coords.empty()) {
    j["demand_coords"] = json::array();
    for (const auto& c : config.demand_coords) j["demand_coords"].push_back({c[0], c[1]});
  }
  if (!config.supply_coords.empty()) {
    j["supply_coords"] = json::array();
    for (const auto& c : config.supply_coords) j["supply_coords"].push_back({c[0], c[1]});
  }
  return j.dump(2) + "\n";
}

double idle_decay(double alpha, double tau_idle, int t, int s) {
  return 1.0 - alpha + alpha * std::exp(-static_cast<double>(t - s) / tau_idle);
}

double distance_decay(double beta, double omega, double d) {
  return 1.0 - beta + beta * std::exp(-d / omega);
}

GeneratedScenario generate_market(const ExperimentConfig& config, Rng& rng) {
  validate_config(config);
  const int I = config.num_demand_types, J = config.num_supply_types, T = config.horizon;

  GeneratedScenario sc;
  // Draw order is part of the reproducibility contract: quality, demand
  // geography, supply geography, demand rates, supply rates.
  sc.quality.resize(static_cast<std::size_t>(I) * static_cast<std::size_t>(J));
  for (double& q : sc.quality) q = rng.normal();

  if (config.demand_coords.empty()) {
    sc.demand_coords.resize(static_cast<std::size_t>(I));
    for (auto& c : sc.demand_coords) c = {rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25)};
  } else {
    sc.demand_coords = config.demand_coords;
  }
  if (config.supply_coords.empty()) {
    sc.supply_coords.resize(static_cast<std::size_t>(J));
    for (auto& c : sc.supply_coords) c = {rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25)};
  } else {
    sc.supply_coords = config.supply_coords;
  }

  sc.demand_rate.resize(static_cast<std::size_t>(T));
  for (double& v : sc.demand_rate) v = rng.uniform_pos();
  sc.supply_rate.resize(static_cast<std::size_t>(T));
  for (double& v : sc.supply_rate) v = rng.uniform_pos();

  matching::MatchInstance& inst = sc.instance;
  inst.num_demand_types = I;
  inst.num_supply_types = J;
  inst.horizon = T;
  inst.lambda.resize(static_cast<std::size_t>(I) * static_cast<std::size_t>(T));
  inst.mu.resize(static_cast<std::size_t>(J) * static_cast<std::size_t>(T));
  for (int i = 0; i < I; ++i)
    for (int t = 0; t < T; ++t)
      inst.lambda[static_cast<std::size_t>(i * T + t)] =
          sc.demand_rate[static_cast<std::size_t>(t)] / static_cast<double>(I);
  for (int j = 0; j < J; ++j)
    for (int s = 0; s < T; ++s)
      inst.mu[static_cast<std::size_t>(j * T + s)] =
          sc.supply_rate[static_cast<std::size_t>(s)] / static_cast<double>(J);

  inst.rewards.assign(static_cast<std::size_t>(I) * static_cast<std::size_t>(J) *
                          static_cast<std::size_t>(T) * static_cast<std::size_t>(T),
                      0.0);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < J; ++j) {
      const double d = std::abs(sc.demand_coords[static_cast<std::size_t>(i)][0] -
                                sc.supply_coords[static_cast<std::size_t>(j)][0]) +
                       std::abs(sc.demand_coords[static_cast<std::size_t>(i)][1] -
                                sc.supply_coords[static_cast<std::size_t>(j)][1]);
      const double qg = sc.quality[static_cast<std::size_t>(i * J + j)] *
                        distance_decay(config.beta, config.omega, d);
      for (int t = 0; t < T; ++t)
        for (int s = 0; s <= t; ++s)
          inst.rewards[static_cast<std::size_t>(((i * J + j) * T + t) * T + s)] =
              qg * idle_decay(config.alpha, config.tau_idle, t, s);
    }
  validate_match_instance(inst);
  return sc;
}

Interval confidence_interval(const std::vector<double>& samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("confidence_interval needs at least 2 samples");
  const double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double v : samples) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double stderr_ = std::sqrt(ss / (n - 1.0) / n);
  return {mean, 1.96 * stderr_};
}

namespace {

std::array<double, kNumPolicies> simulate_replicate(const matching::MatchInstance& inst,
                                                    const matching::Lp3Result& lp3,
                                                    int n_paths, std::uint64_t master,
                                                    int k) {
  const std::uint64_t rep = static_cast<std::uint64_t>(k);
  Rng realization_rng(derive_seed(master, kTagRealization, rep));
  const matching::MatchRealization real = matching::sample_realization(inst, realization_rng);

  matching::ThresholdProvider provider(inst, lp3.x, n_paths,
                                       derive_seed(master, kTagThreshold, rep));
  matching::PolicyContext ctx{&inst, &lp3, n_paths, &provider};
  const std::uint64_t pick_seed = derive_seed(master, kTagPick, rep);

  std::array<double, kNumPolicies> out{};
  {
    Rng r(pick_seed);
    out[0] = run_policy(ctx, real, {matching::PolicyKind::on, 1.0}, r).total_reward;
  }
  for (int m = 0; m < 4; ++m) {
    Rng r(pick_seed);
    out[static_cast<std::size_t>(1 + m)] =
        run_policy(ctx, real, {matching::PolicyKind::on_plus, kPlusMultipliers[m]}, r)
            .total_reward;
  }
  {
    Rng r(0);
    out[5] = run_policy(ctx, real, {matching::PolicyKind::greedy, 1.0}, r).total_reward;
  }
  {
    Rng r(0);
    out[6] = run_policy(ctx, real, {matching::PolicyKind::bid_price, 1.0}, r).total_reward;
  }
  return out;
}

}  // namespace

SimReport run_scenario_benchmark(const GeneratedScenario& scenario,
                                 const ExperimentConfig& config, const std::string& label,
                                 int threads) {
  validate_config(config);
  matching::validate_match_instance(scenario.instance);
  const matching::Lp3Result lp3 = matching::solve_lp3(scenario.instance);
  const int reps = config.replicates;

  std::vector<std::array<double, kNumPolicies>> rewards(static_cast<std::size_t>(reps));
  std::vector<std::string> errors(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= reps) return;
      try {
        rewards[static_cast<std::size_t>(k)] = simulate_replicate(
            scenario.instance, lp3, config.n_inner_paths, config.master_seed, k);
      } catch (const std::exception& e) {
        errors[static_cast<std::size_t>(k)] = e.what();
      }
    }
  };

  int n_threads = threads;
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  if (n_threads > reps) n_threads = reps;
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  for (int k = 0; k < reps; ++k)
    if (!errors[static_cast<std::size_t>(k)].empty())
      throw std::runtime_error("replicate " + std::to_string(k) + ": " +
                               errors[static_cast<std::size_t>(k)]);

  SimReport report;
  report.label = label;
  report.lp3_objective = lp3.objective;
  report.replicates = reps;
  const bool lp_zero = !(lp3.objective > 0.0);
  if (lp_zero) report.flags.push_back("lp3-objective-zero");

  std::vector<double> column(static_cast<std::size_t>(reps));
  for (int p = 0; p < kNumPolicies; ++p) {
    for (int k = 0; k < reps; ++k)
      column[static_cast<std::size_t>(k)] =
          rewards[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)];
    PolicyReport pr;
    pr.name = kPolicyNames[static_cast<std::size_t>(p)];
    double sum = 0.0;
    for (double v : column) sum += v;
    pr.mean_reward = sum / static_cast<double>(reps);
    if (!lp_zero) pr.ratio = pr.mean_reward / lp3.objective;
    if (reps >= 2) {
      const Interval ci = confidence_interval(column);
      pr.halfwidth = lp_zero ? 0.0 : ci.halfwidth / lp3.objective;
      pr.halfwidth_set = true;
    }
    if (pr.ratio > 1.05) report.flags.push_back(std::string("ratio-above-1.05:") + pr.name);
    report.policies.push_back(std::move(pr));
  }
  return report;
}

SimReport run_benchmark(const ExperimentConfig& config, int threads) {
  validate_config(config);
  Rng market_rng(derive_seed(config.master_seed, kTagMarket));
  const GeneratedScenario scenario = generate_market(config, market_rng);
  return run_scenario_benchmark(scenario, config, "base", threads);
}

std::vector<SimReport> reproduce_tables(const ExperimentConfig& config, int threads) {
  validate_config(config);
  std::vector<std::pair<std::string, ExperimentConfig>> rows;
  rows.emplace_back("base", config);
  for (const SweepSpec& sw : config.sweeps)
    for (double v : sw.values) {
      ExperimentConfig c = config;
      set_parameter(c, sw.parameter, v);
      rows.emplace_back(sw.parameter + "=" + fmt("%g", v), c);
    }

  std::vector<SimReport> out;
  out.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    ExperimentConfig c = rows[k].second;
    // Row 0 is exactly run_benchmark(config); sweep rows redraw their market
    // from a seed derived per row.
    if (k > 0) c.master_seed = derive_seed(config.master_seed, kTagRow, k);
    Rng market_rng(derive_seed(c.master_seed, kTagMarket));
    const GeneratedScenario scenario = generate_market(c, market_rng);
    out.push_back(run_scenario_benchmark(scenario, c, rows[k].first, threads));
  }
  return out;
}

std::string report_csv(const std::vector<SimReport>& rows) {
  std::string out = "label,lp3_objective,replicates";
  for (const char* col : kPolicyColumns) {
    out += ",";
    out += col;
    out += "_mean,";
    out += col;
    out += "_ratio,";
    out += col;
    out += "_halfwidth";
  }
  out += ",flags\n";
  for (const SimReport& row : rows) {
    out += row.label;
    out += "," + fmt("%.17g", row.lp3_objective);
    out += "," + std::to_string(row.replicates);
    for (const PolicyReport& pr : row.policies) {
      out += "," + fmt("%.17g", pr.mean_reward);
      out += "," + fmt("%.17g", pr.ratio);
      out += ",";
      if (pr.halfwidth_set) out += fmt("%.17g", pr.halfwidth);
    }
    out += ",";
    for (std::size_t f = 0; f < row.flags.size(); ++f) {
      if (f) out += ";";
      out += row.flags[f];
    }
    out += "\n";
  }
  return out;
}

std::string report_text(const std::vector<SimReport>& rows) {
  std::string out =
      "policy reward as % of the LP3 objective; +- is a 95% halfwidth\n\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-14s %12s", "scenario", "lp3_obj");
  out += buf;
  for (const char* name : kPolicyNames) {
    std::snprintf(buf, sizeof buf, " %12s", name);
    out += buf;
  }
  out += "\n";
  for (const SimReport& row : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %12.3f", row.label.c_str(), row.lp3_objective);
    out += buf;
    for (const PolicyReport& pr : row.policies) {
      std::string cell = fmt("%.1f", pr.ratio * 100.0);
      if (pr.halfwidth_set) cell += "+-" + fmt("%.1f", pr.halfwidth * 100.0);
      std::snprintf(buf, sizeof buf, " %12s", cell.c_str());
      out += buf;
    }
    if (!row.flags.empty()) {
      out += "  [";
      for (std::size_t f = 0; f < row.flags.size(); ++f) {
        if (f) out += ";";
        out += row.flags[f];
      }
      out += "]";
    }
    out += "\n";
  }
  return out;
}

}  // namespace pmatch::bench
