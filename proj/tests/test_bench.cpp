#include "doctest.h"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "pmatch/bench.hpp"
#include "pmatch/rng.hpp"

using namespace pmatch;
using bench::ExperimentConfig;
using bench::GeneratedScenario;
using bench::SimReport;

namespace {

ExperimentConfig micro_config() {
  ExperimentConfig cfg = ExperimentConfig::desk_scale();
  cfg.num_demand_types = 2;
  cfg.num_supply_types = 2;
  cfg.horizon = 4;
  cfg.replicates = 8;
  cfg.n_inner_paths = 5;
  cfg.master_seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("decay factors match their closed forms") {
  CHECK(bench::idle_decay(0.5, 10.0, 10, 0) ==
        doctest::Approx(0.5 + 0.5 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(bench::idle_decay(0.5, 10.0, 10, 0) == doctest::Approx(0.683940).epsilon(1e-6));
  CHECK(bench::idle_decay(0.5, 10.0, 3, 3) == 1.0);   // zero idle time
  CHECK(bench::idle_decay(0.0, 10.0, 9, 0) == 1.0);   // decay disabled
  CHECK(bench::idle_decay(1.0, 5.0, 10, 0) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

  CHECK(bench::distance_decay(0.5, 0.05, 0.0) == 1.0);
  CHECK(bench::distance_decay(0.0, 0.05, 3.0) == 1.0);
  CHECK(bench::distance_decay(1.0, 0.1, 0.2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(bench::distance_decay(0.4, 0.05, 0.1) ==
        doctest::Approx(0.6 + 0.4 * std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("confidence intervals use the 1.96 normal halfwidth") {
  std::vector<double> coin;
  for (int k = 0; k < 500; ++k) {
    coin.push_back(0.0);
    coin.push_back(1.0);
  }
  const bench::Interval ci = bench::confidence_interval(coin);
  CHECK(ci.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ci.halfwidth == doctest::Approx(0.031).epsilon(0.01));

  const bench::Interval flat = bench::confidence_interval({2.0, 2.0, 2.0});
  CHECK(flat.mean == doctest::Approx(2.0));
  CHECK(flat.halfwidth == 0.0);

  CHECK_THROWS_AS(bench::confidence_interval({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(bench::confidence_interval({}), std::invalid_argument);
}

TEST_CASE("config validation enforces ranges and sweep sanity") {
  ExperimentConfig cfg = micro_config();
  CHECK_NOTHROW(bench::validate_config(cfg));

  ExperimentConfig bad_alpha = cfg;
  bad_alpha.alpha = 1.5;
  CHECK_THROWS_WITH_AS(bench::validate_config(bad_alpha),
                       doctest::Contains("alpha must lie in [0, 1]"),
                       std::invalid_argument);

  ExperimentConfig no_reps = cfg;
  no_reps.replicates = 0;
  CHECK_THROWS_AS(bench::validate_config(no_reps), std::invalid_argument);

  ExperimentConfig bad_sweep = cfg;
  bad_sweep.sweeps = {{"voltage", {1.0}}};
  CHECK_THROWS_WITH_AS(bench::validate_config(bad_sweep),
                       doctest::Contains("unknown sweep parameter"),
                       std::invalid_argument);

  ExperimentConfig bad_coords = cfg;
  bad_coords.demand_coords = {{0.1, 0.1}};  // needs one point per type
  CHECK_THROWS_WITH_AS(bench::validate_config(bad_coords),
                       doctest::Contains("one point per demand type"),
                       std::invalid_argument);

  CHECK_THROWS_AS(bench::set_parameter(cfg, "gamma", 1.0), std::invalid_argument);
  bench::set_parameter(cfg, "alpha", 0.7);
  CHECK(cfg.alpha == 0.7);
  bench::set_parameter(cfg, "tau_idle", 3.0);
  CHECK(cfg.tau_idle == 3.0);
}

TEST_CASE("config JSON round trips and rejects unknown keys") {
  ExperimentConfig cfg = micro_config();
  cfg.alpha = 0.25;
  cfg.omega = 0.09;
  const std::string text = bench::config_to_json(cfg);
  const ExperimentConfig back = bench::config_from_json(text);
  CHECK(back.num_demand_types == cfg.num_demand_types);
  CHECK(back.horizon == cfg.horizon);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.omega == cfg.omega);
  CHECK(back.replicates == cfg.replicates);
  CHECK(back.master_seed == cfg.master_seed);
  REQUIRE(back.sweeps.size() == cfg.sweeps.size());
  for (std::size_t k = 0; k < cfg.sweeps.size(); ++k) {
    CHECK(back.sweeps[k].parameter == cfg.sweeps[k].parameter);
    CHECK(back.sweeps[k].values == cfg.sweeps[k].values);
  }

  CHECK_THROWS_WITH_AS(bench::config_from_json("{\"voltage\": 3}"),
                       doctest::Contains("unknown config key"), std::runtime_error);
  CHECK_THROWS_WITH_AS(bench::config_from_json("{\"preset\": \"galactic\"}"),
                       doctest::Contains("unknown preset"), std::runtime_error);
  CHECK_THROWS_AS(bench::config_from_json("{nope"), std::runtime_error);

  const ExperimentConfig desk = bench::config_from_json("{\"preset\": \"desk\"}");
  CHECK(desk.num_demand_types == 10);
  CHECK(desk.horizon == 30);
  CHECK(desk.replicates == 200);
  const ExperimentConfig paper = bench::config_from_json("{\"preset\": \"paper\"}");
  CHECK(paper.num_demand_types == 30);
  CHECK(paper.horizon == 60);
  CHECK(paper.replicates == 1000);

  // Overrides apply on top of the preset.
  const ExperimentConfig tweaked =
      bench::config_from_json("{\"preset\": \"desk\", \"alpha\": 0.9, \"replicates\": 3}");
  CHECK(tweaked.alpha == 0.9);
  CHECK(tweaked.replicates == 3);
  CHECK(tweaked.horizon == 30);
}

TEST_CASE("generated markets follow the quality-times-decay reward law") {
  ExperimentConfig cfg = micro_config();
  Rng rng(derive_seed(cfg.master_seed, 1));
  const GeneratedScenario sc = bench::generate_market(cfg, rng);
  const auto& inst = sc.instance;
  CHECK(inst.num_demand_types == 2);
  CHECK(inst.horizon == 4);
  REQUIRE(sc.demand_coords.size() == 2);
  REQUIRE(sc.supply_coords.size() == 2);
  REQUIRE(sc.quality.size() == 4);

  // Every admissible reward must equal quality * idle decay * distance decay.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int t = 0; t < 4; ++t)
        for (int s = 0; s <= t; ++s) {
          const double d = std::abs(sc.demand_coords[i][0] - sc.supply_coords[j][0]) +
                           std::abs(sc.demand_coords[i][1] - sc.supply_coords[j][1]);
          const double want = sc.quality[static_cast<std::size_t>(i * 2 + j)] *
                              bench::idle_decay(cfg.alpha, cfg.tau_idle, t, s) *
                              bench::distance_decay(cfg.beta, cfg.omega, d);
          CHECK(inst.r(i, j, t, s) == doctest::Approx(want).epsilon(1e-12));
        }

  // Rates spread uniformly over types, keeping each period's mass within 1.
  for (int t = 0; t < 4; ++t) {
    CHECK(inst.lam(0, t) == doctest::Approx(sc.demand_rate[t] / 2).epsilon(1e-12));
    CHECK(inst.mu_at(1, t) == doctest::Approx(sc.supply_rate[t] / 2).epsilon(1e-12));
  }
  CHECK_NOTHROW(matching::validate_match_instance(inst));

  // Same seed, same market.
  Rng again(derive_seed(cfg.master_seed, 1));
  const GeneratedScenario sc2 = bench::generate_market(cfg, again);
  CHECK(sc2.instance.rewards == inst.rewards);
  CHECK(sc2.instance.lambda == inst.lambda);
}

TEST_CASE("injected geography is honored verbatim") {
  ExperimentConfig cfg = micro_config();
  cfg.demand_coords = {{0.0, 0.0}, {0.1, 0.0}};
  cfg.supply_coords = {{0.0, 0.05}, {0.2, 0.2}};
  Rng rng(4);
  const GeneratedScenario sc = bench::generate_market(cfg, rng);
  CHECK(sc.demand_coords == cfg.demand_coords);
  CHECK(sc.supply_coords == cfg.supply_coords);
}

TEST_CASE("policy naming is fixed across reports") {
  REQUIRE(bench::kNumPolicies == 7);
  CHECK(std::string(bench::kPolicyNames[0]) == "ON");
  CHECK(std::string(bench::kPolicyNames[1]) == "ON+1");
  CHECK(std::string(bench::kPolicyNames[4]) == "ON+4");
  CHECK(std::string(bench::kPolicyNames[5]) == "Greedy");
  CHECK(std::string(bench::kPolicyNames[6]) == "BPH");
  CHECK(bench::kPlusMultipliers[0] == 1.0);
  CHECK(bench::kPlusMultipliers[1] == 1.3);
  CHECK(bench::kPlusMultipliers[2] == 1.6);
  CHECK(bench::kPlusMultipliers[3] == 2.0);
}

TEST_CASE("benchmarks are reproducible and independent of the worker count") {
  ExperimentConfig cfg = micro_config();
  const SimReport one = bench::run_benchmark(cfg, 1);
  const SimReport four = bench::run_benchmark(cfg, 4);
  REQUIRE(one.policies.size() == 7);
  REQUIRE(four.policies.size() == 7);
  for (std::size_t p = 0; p < 7; ++p) {
    CHECK(one.policies[p].mean_reward == four.policies[p].mean_reward);
    CHECK(one.policies[p].ratio == four.policies[p].ratio);
    CHECK(one.policies[p].halfwidth == four.policies[p].halfwidth);
  }
  CHECK(bench::report_csv({one}) == bench::report_csv({four}));

  const SimReport rerun = bench::run_benchmark(cfg, 1);
  CHECK(bench::report_csv({one}) == bench::report_csv({rerun}));
}

TEST_CASE("ratios are reward shares of the fluid objective") {
  ExperimentConfig cfg = micro_config();
  cfg.replicates = 12;
  const SimReport rep = bench::run_benchmark(cfg, 1);
  CHECK(rep.lp3_objective > 0.0);
  CHECK(rep.replicates == 12);
  for (const auto& pol : rep.policies) {
    CHECK(pol.ratio == doctest::Approx(pol.mean_reward / rep.lp3_objective).epsilon(1e-12));
    CHECK(pol.ratio >= 0.0);
    CHECK(pol.halfwidth_set);
    CHECK(pol.halfwidth >= 0.0);
  }
}

TEST_CASE("a market with no positive rewards is flagged, not crashed") {
  ExperimentConfig cfg = micro_config();
  cfg.replicates = 4;
  Rng rng(derive_seed(cfg.master_seed, 1));
  GeneratedScenario sc = bench::generate_market(cfg, rng);
  for (double& r : sc.instance.rewards) r = r > 0.0 ? 0.0 : r;
  const SimReport rep = bench::run_scenario_benchmark(sc, cfg, "zeroed", 1);
  CHECK(rep.lp3_objective == 0.0);
  REQUIRE(!rep.flags.empty());
  CHECK(rep.flags[0] == "lp3-objective-zero");
  for (const auto& pol : rep.policies) {
    CHECK(pol.mean_reward == 0.0);
    CHECK(pol.ratio == 0.0);
    CHECK(pol.halfwidth == 0.0);
  }
}

TEST_CASE("single-replicate runs omit halfwidths") {
  ExperimentConfig cfg = micro_config();
  cfg.replicates = 1;
  const SimReport rep = bench::run_benchmark(cfg, 1);
  for (const auto& pol : rep.policies) CHECK(!pol.halfwidth_set);
  const std::string csv = bench::report_csv({rep});
  // Halfwidth cells are empty: look for two adjacent separators after a mean.
  CHECK(csv.find(",,") != std::string::npos);
}

TEST_CASE("table sweeps produce one row per parameter value plus the base") {
  ExperimentConfig cfg = micro_config();
  cfg.replicates = 2;
  cfg.n_inner_paths = 2;
  const std::vector<SimReport> rows = bench::reproduce_tables(cfg, 1);
  REQUIRE(rows.size() == 17);  // base + 4 parameters x 4 values
  CHECK(rows[0].label == "base");
  CHECK(rows[1].label == "alpha=0");
  CHECK(rows[4].label == "alpha=1");
  CHECK(rows[5].label == "tau_idle=2");
  CHECK(rows[9].label == "beta=0");
  CHECK(rows[13].label == "omega=0.005");
  CHECK(rows[16].label == "omega=0.15");

  // The base row is exactly the plain benchmark of the same config.
  const SimReport base = bench::run_benchmark(cfg, 1);
  CHECK(bench::report_csv({rows[0]}) == bench::report_csv({base}));
}

TEST_CASE("report renderings carry the full policy grid") {
  ExperimentConfig cfg = micro_config();
  cfg.replicates = 3;
  const SimReport rep = bench::run_benchmark(cfg, 1);
  const std::string csv = bench::report_csv({rep});
  CHECK(csv.rfind("label,lp3_objective,replicates,", 0) == 0);
  CHECK(csv.find("on_mean,on_ratio,on_halfwidth") != std::string::npos);
  CHECK(csv.find("bid_price_mean") != std::string::npos);
  CHECK(csv.find("\nbase,") != std::string::npos);

  const std::string text = bench::report_text({rep});
  CHECK(text.find("ON+1") != std::string::npos);
  CHECK(text.find("BPH") != std::string::npos);
  CHECK(text.find("base") != std::string::npos);
  CHECK(text.find("% of the LP3 objective") != std::string::npos);
}
