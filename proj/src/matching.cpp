#include "pmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>

namespace pmatch::matching {

namespace {

constexpr double kMassSlack = 1e-9;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

void validate_match_instance(const MatchInstance& inst) {
  const int I = inst.num_demand_types, J = inst.num_supply_types, T = inst.horizon;
  if (I < 1 || J < 1 || T < 1) fail("instance dimensions must be positive");
  if (inst.lambda.size() != static_cast<std::size_t>(I) * static_cast<std::size_t>(T))
    fail("lambda has the wrong shape");
  if (inst.mu.size() != static_cast<std::size_t>(J) * static_cast<std::size_t>(T))
    fail("mu has the wrong shape");
  if (inst.rewards.size() != static_cast<std::size_t>(I) * static_cast<std::size_t>(J) *
                                 static_cast<std::size_t>(T) * static_cast<std::size_t>(T))
    fail("rewards have the wrong shape");
  for (double r : inst.rewards)
    if (!std::isfinite(r)) fail("rewards must be finite");

  for (int t = 0; t < T; ++t) {
    double dm = 0.0, sm = 0.0;
    for (int i = 0; i < I; ++i) {
      const double l = inst.lam(i, t);
      if (!(l > 0.0) || !std::isfinite(l))
        fail("lambda(" + std::to_string(i) + "," + std::to_string(t) +
             ") must be strictly positive");
      dm += l;
    }
    for (int j = 0; j < J; ++j) {
      const double m = inst.mu_at(j, t);
      if (!(m > 0.0) || !std::isfinite(m))
        fail("mu(" + std::to_string(j) + "," + std::to_string(t) +
             ") must be strictly positive");
      sm += m;
    }
    if (dm > 1.0 + 1e-12)
      fail("demand mass " + std::to_string(dm) + " exceeds 1 at period " + std::to_string(t));
    if (sm > 1.0 + 1e-12)
      fail("supply mass " + std::to_string(sm) + " exceeds 1 at period " + std::to_string(t));
  }
}

MatchRealization sample_realization(const MatchInstance& inst, Rng& rng) {
  const int T = inst.horizon;
  MatchRealization real;
  real.demand.assign(static_cast<std::size_t>(T), -1);
  real.supply.assign(static_cast<std::size_t>(T), -1);
  real.demand_u.assign(static_cast<std::size_t>(T), 0.0);
  real.supply_u.assign(static_cast<std::size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    const double u = rng.uniform01();
    real.demand_u[static_cast<std::size_t>(t)] = u;
    double hi = 0.0;
    int who = -1;
    for (int i = 0; i < inst.num_demand_types; ++i) {
      hi += inst.lam(i, t);
      if (u < hi) {
        who = i;
        break;
      }
    }
    real.demand[static_cast<std::size_t>(t)] = who;

    const double v = rng.uniform01();
    real.supply_u[static_cast<std::size_t>(t)] = v;
    hi = 0.0;
    who = -1;
    for (int j = 0; j < inst.num_supply_types; ++j) {
      hi += inst.mu_at(j, t);
      if (v < hi) {
        who = j;
        break;
      }
    }
    real.supply[static_cast<std::size_t>(t)] = who;
  }
  return real;
}

// ---- fluid relaxation ----

flow::BipartiteLpInstance build_lp3(const MatchInstance& inst) {
  validate_match_instance(inst);
  const int I = inst.num_demand_types, J = inst.num_supply_types, T = inst.horizon;
  flow::BipartiteLpInstance lp;
  lp.demands.reserve(static_cast<std::size_t>(I) * static_cast<std::size_t>(T));
  lp.supplies.reserve(static_cast<std::size_t>(J) * static_cast<std::size_t>(T));
  for (int i = 0; i < I; ++i)
    for (int t = 0; t < T; ++t) lp.demands.push_back({i, t, inst.lam(i, t)});
  for (int j = 0; j < J; ++j)
    for (int s = 0; s < T; ++s) lp.supplies.push_back({j, s, inst.mu_at(j, s)});
  for (int i = 0; i < I; ++i)
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j)
        for (int s = 0; s <= t; ++s) {
          const double r = inst.r(i, j, t, s);
          if (r > 0.0)
            lp.edges.push_back(
                {i * T + t, j * T + s, r, inst.lam(i, t) * inst.mu_at(j, s)});
        }
  return lp;
}

Lp3Result solve_lp3(const MatchInstance& inst) {
  Lp3Result res;
  res.lp = build_lp3(inst);
  res.sol = flow::solve_max_reward_flow(res.lp);
  res.objective = res.sol.objective;

  const int J = inst.num_supply_types, T = inst.horizon;
  res.x.assign(inst.rewards.size(), 0.0);
  for (std::size_t k = 0; k < res.lp.edges.size(); ++k) {
    const flow::Edge& e = res.lp.edges[k];
    const flow::DemandNode& d = res.lp.demands[static_cast<std::size_t>(e.demand)];
    const flow::SupplyNode& s = res.lp.supplies[static_cast<std::size_t>(e.supply)];
    res.x[static_cast<std::size_t>(
        ((d.i * J + s.j) * T + d.t) * T + s.s)] = res.sol.flows[k];
  }
  res.supply_duals.assign(static_cast<std::size_t>(J) * static_cast<std::size_t>(T), 0.0);
  for (std::size_t k = 0; k < res.lp.supplies.size(); ++k) {
    const flow::SupplyNode& s = res.lp.supplies[k];
    res.supply_duals[static_cast<std::size_t>(s.j * T + s.s)] = res.sol.supply_duals[k];
  }
  return res;
}

OfflineResult solve_offline_matching(const MatchInstance& inst,
                                     const MatchRealization& realization) {
  const int T = inst.horizon;
  flow::BipartiteLpInstance lp;
  for (int t = 0; t < T; ++t)
    if (realization.demand[static_cast<std::size_t>(t)] >= 0)
      lp.demands.push_back({realization.demand[static_cast<std::size_t>(t)], t, 1.0});
  for (int s = 0; s < T; ++s)
    if (realization.supply[static_cast<std::size_t>(s)] >= 0)
      lp.supplies.push_back({realization.supply[static_cast<std::size_t>(s)], s, 1.0});
  for (std::size_t a = 0; a < lp.demands.size(); ++a)
    for (std::size_t b = 0; b < lp.supplies.size(); ++b) {
      if (lp.supplies[b].s > lp.demands[a].t) continue;
      const double r =
          inst.r(lp.demands[a].i, lp.supplies[b].j, lp.demands[a].t, lp.supplies[b].s);
      if (r > 0.0)
        lp.edges.push_back({static_cast<int>(a), static_cast<int>(b), r, 1.0});
    }

  const flow::LpSolution sol = flow::solve_max_reward_flow(lp);
  OfflineResult out;
  out.value = sol.objective;
  for (std::size_t k = 0; k < lp.edges.size(); ++k) {
    const double xf = sol.flows[k];
    if (std::abs(xf - std::round(xf)) > 1e-9)
      throw std::runtime_error("offline matching produced a fractional flow: " +
                               std::to_string(xf));
    if (xf > 0.5) {
      const flow::Edge& e = lp.edges[k];
      out.matches.push_back({lp.demands[static_cast<std::size_t>(e.demand)].i,
                             lp.demands[static_cast<std::size_t>(e.demand)].t,
                             lp.supplies[static_cast<std::size_t>(e.supply)].j,
                             lp.supplies[static_cast<std::size_t>(e.supply)].s, e.reward});
    }
  }
  return out;
}

// ---- separation / admission ----

std::vector<double> separation_probs(const MatchInstance& inst, const std::vector<double>& x,
                                     const std::vector<SupplyUnit>& units, int i, int t) {
  const int J = inst.num_supply_types, T = inst.horizon;
  std::vector<double> probs(units.size(), 0.0);
  double sum_y = 0.0;
  for (std::size_t u = 0; u < units.size(); ++u) {
    const double xs = x[static_cast<std::size_t>(
        ((i * J + units[u].j) * T + t) * T + units[u].s)];
    const double y = xs / inst.mu_at(units[u].j, units[u].s);
    probs[u] = y;
    sum_y += y;
  }
  if (sum_y <= 0.0) {
    std::fill(probs.begin(), probs.end(), 0.0);
    return probs;
  }
  const double scale = std::min(inst.lam(i, t), sum_y) / sum_y;
  for (double& p : probs) p *= scale;
  return probs;
}

int separation_pick(const std::vector<double>& probs, double lambda_it, double u) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (total > lambda_it * (1.0 + kMassSlack) + 1e-15)
    throw std::runtime_error("separation probabilities sum " + std::to_string(total) +
                             " above lambda " + std::to_string(lambda_it));
  double hi = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    hi += probs[k] / lambda_it;
    if (u < hi) return static_cast<int>(k);
  }
  return -1;
}

void advance_supply_mass(const MatchInstance& inst, const std::vector<double>& x,
                         SupplyState& state, int t) {
  if (state.units.empty()) return;
  const int I = inst.num_demand_types, J = inst.num_supply_types, T = inst.horizon;
  for (int i = 0; i < I; ++i) {
    double sum_y = 0.0;
    for (const SupplyUnit& u : state.units)
      sum_y += x[static_cast<std::size_t>(((i * J + u.j) * T + t) * T + u.s)] /
               inst.mu_at(u.j, u.s);
    if (sum_y <= 0.0) continue;
    const double scale = std::min(inst.lam(i, t), sum_y) / sum_y;
    for (SupplyUnit& u : state.units)
      u.cum_mass += scale *
                    x[static_cast<std::size_t>(((i * J + u.j) * T + t) * T + u.s)] /
                    inst.mu_at(u.j, u.s);
  }
  for (const SupplyUnit& u : state.units)
    if (u.cum_mass > 1.0 + kMassSlack)
      throw std::runtime_error("routed mass " + std::to_string(u.cum_mass) +
                               " above 1 for supply unit (" + std::to_string(u.j) + "," +
                               std::to_string(u.s) + ")");
}

ThresholdEstimate admission_threshold(const MatchInstance& inst, const std::vector<double>& x,
                                      const SupplyState& state, int unit_idx, int t,
                                      int n_paths, Rng& rng) {
  if (n_paths < 1) throw std::invalid_argument("admission_threshold needs n_paths >= 1");
  const SupplyUnit& unit = state.units[static_cast<std::size_t>(unit_idx)];
  if (unit.cum_mass > 1.0 + kMassSlack)
    throw std::runtime_error("routed mass above 1 for the unit under evaluation");
  const double denom = 2.0 - unit.cum_mass;
  const int I = inst.num_demand_types, J = inst.num_supply_types, T = inst.horizon;
  const int nf = T - 1 - t;
  if (nf <= 0) return {0.0, 0.0};

  auto x_at = [&](int i, int j, int tt, int ss) {
    return x[static_cast<std::size_t>(((i * J + j) * T + tt) * T + ss)];
  };
  std::vector<double> inv_mu(static_cast<std::size_t>(J) * static_cast<std::size_t>(T));
  for (int j = 0; j < J; ++j)
    for (int s = 0; s < T; ++s)
      inv_mu[static_cast<std::size_t>(j * T + s)] = 1.0 / inst.mu_at(j, s);

  // Per future period tf = t+1+f and demand type i: the evaluated unit's
  // routing weight, its reward, and the total weight of the units already
  // arrived. Future arrivals only add to the total; everything else is fixed
  // across simulated paths, so precompute it once.
  std::vector<double> self_y(static_cast<std::size_t>(nf) * static_cast<std::size_t>(I));
  std::vector<double> self_r(self_y.size());
  std::vector<double> base_sum(self_y.size());
  int last_f = -1;
  for (int f = 0; f < nf; ++f) {
    const int tf = t + 1 + f;
    for (int i = 0; i < I; ++i) {
      const std::size_t idx = static_cast<std::size_t>(f * I + i);
      self_y[idx] = x_at(i, unit.j, tf, unit.s) * inv_mu[static_cast<std::size_t>(
                                                      unit.j * T + unit.s)];
      self_r[idx] = inst.r(i, unit.j, tf, unit.s);
      double sum_y = 0.0;
      for (const SupplyUnit& u : state.units)
        sum_y += x_at(i, u.j, tf, u.s) * inv_mu[static_cast<std::size_t>(u.j * T + u.s)];
      base_sum[idx] = sum_y;
      if (self_y[idx] > 0.0) last_f = f;
    }
  }
  if (last_f < 0) return {0.0, 0.0};  // no future flow on this unit: exact zero

  double sum = 0.0, sumsq = 0.0;
  std::vector<std::pair<int, int>> fut;  // (type, period) of simulated arrivals
  for (int k = 0; k < n_paths; ++k) {
    fut.clear();
    double acc = 0.0;
    for (int f = 0; f <= last_f; ++f) {
      const int tf = t + 1 + f;
      const double v = rng.uniform01();
      double hi = 0.0;
      for (int j = 0; j < J; ++j) {
        hi += inst.mu_at(j, tf);
        if (v < hi) {
          fut.emplace_back(j, tf);
          break;
        }
      }
      for (int i = 0; i < I; ++i) {
        const std::size_t idx = static_cast<std::size_t>(f * I + i);
        const double ys = self_y[idx];
        if (ys <= 0.0) continue;
        double sum_y = base_sum[idx];
        for (const auto& [ju, su] : fut)
          sum_y += x_at(i, ju, tf, su) * inv_mu[static_cast<std::size_t>(ju * T + su)];
        const double scale = std::min(inst.lam(i, tf), sum_y) / sum_y;
        acc += self_r[idx] * scale * ys;
      }
    }
    sum += acc;
    sumsq += acc * acc;
  }

  const double n = static_cast<double>(n_paths);
  const double mean = sum / n;
  double var = 0.0;
  if (n_paths > 1) var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
  return {mean / denom, std::sqrt(var / n) / denom};
}

ThresholdEstimate ThresholdProvider::get(const SupplyState& state, int unit_idx, int t) {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(unit_idx)) << 32) |
      static_cast<std::uint32_t>(t);
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;
  Rng rng(derive_seed(seed_base_, static_cast<std::uint64_t>(unit_idx),
                      static_cast<std::uint64_t>(t)));
  const ThresholdEstimate est =
      admission_threshold(*inst_, *x_, state, unit_idx, t, n_paths_, rng);
  memo_.emplace(key, est);
  return est;
}

// ---- policies ----

MatchTrace run_policy(const PolicyContext& ctx, const MatchRealization& realization,
                      const PolicySpec& spec, Rng& rng) {
  const MatchInstance& inst = *ctx.inst;
  const Lp3Result& lp3 = *ctx.lp3;
  const int T = inst.horizon;
  const bool uses_thresholds =
      spec.kind == PolicyKind::on || spec.kind == PolicyKind::on_plus;

  // Threshold policies without a shared provider draw one seed up front, so
  // run_online and run_online_plus on equal rng states stay pick-for-pick
  // aligned afterwards.
  std::optional<ThresholdProvider> local;
  ThresholdProvider* provider = ctx.provider;
  if (uses_thresholds && provider == nullptr) {
    local.emplace(inst, lp3.x, ctx.n_paths, rng.next_u64());
    provider = &*local;
  }

  MatchTrace trace;
  SupplyState state;
  for (int t = 0; t < T; ++t) {
    const int jt = realization.supply[static_cast<std::size_t>(t)];
    if (jt >= 0) state.units.push_back({jt, t, true, 0.0});
    if (uses_thresholds) advance_supply_mass(inst, lp3.x, state, t);

    const int i = realization.demand[static_cast<std::size_t>(t)];
    if (i < 0) continue;

    MatchEvent ev;
    ev.period = t;
    ev.i = i;

    auto match_unit = [&](int idx, double threshold, bool threshold_set) {
      SupplyUnit& u = state.units[static_cast<std::size_t>(idx)];
      u.available = false;
      ev.j = u.j;
      ev.s = u.s;
      ev.reward = inst.r(i, u.j, t, u.s);
      ev.threshold = threshold;
      ev.threshold_set = threshold_set;
      ev.decision = Decision::matched;
      trace.total_reward += ev.reward;
      ++trace.matches;
    };

    switch (spec.kind) {
      case PolicyKind::greedy: {
        int best = -1;
        double best_r = 0.0;
        for (std::size_t k = 0; k < state.units.size(); ++k) {
          const SupplyUnit& u = state.units[k];
          if (!u.available) continue;
          const double r = inst.r(i, u.j, t, u.s);
          if (r > 0.0 && r > best_r) {
            best_r = r;
            best = static_cast<int>(k);
          }
        }
        if (best >= 0)
          match_unit(best, 0.0, false);
        else
          ev.decision = Decision::no_pick;
        break;
      }
      case PolicyKind::bid_price: {
        int best = -1;
        double best_score = 0.0;
        bool any = false;
        for (std::size_t k = 0; k < state.units.size(); ++k) {
          const SupplyUnit& u = state.units[k];
          if (!u.available) continue;
          const double r = inst.r(i, u.j, t, u.s);
          if (r <= 0.0) continue;
          const double score =
              r - lp3.supply_duals[static_cast<std::size_t>(u.j * T + u.s)];
          if (!any || score > best_score) {
            any = true;
            best_score = score;
            best = static_cast<int>(k);
          }
        }
        if (any && best_score >= 0.0) {
          match_unit(best, lp3.supply_duals[static_cast<std::size_t>(
                               state.units[static_cast<std::size_t>(best)].j * T +
                               state.units[static_cast<std::size_t>(best)].s)],
                     true);
        } else {
          ev.decision = any ? Decision::threshold : Decision::no_pick;
        }
        break;
      }
      case PolicyKind::on:
      case PolicyKind::on_plus: {
        const std::vector<double> probs =
            separation_probs(inst, lp3.x, state.units, i, t);
        const int pick = separation_pick(probs, inst.lam(i, t), rng.uniform01());
        bool served = false;
        if (pick < 0) {
          ev.decision = Decision::no_pick;
        } else {
          const SupplyUnit& u = state.units[static_cast<std::size_t>(pick)];
          const double r = inst.r(i, u.j, t, u.s);
          const ThresholdEstimate h = provider->get(state, pick, t);
          if (u.available && r >= h.value) {
            match_unit(pick, h.value, true);
            served = true;
          } else {
            // Admission rejected the routed unit.
            ev.j = u.j;
            ev.s = u.s;
            ev.reward = r;
            ev.threshold = h.value;
            ev.threshold_set = true;
            ev.decision =
                u.available ? Decision::threshold : Decision::unavailable;
          }
        }
        // The recourse scan runs whenever the base rule leaves the customer
        // unserved, whatever the reason: routing chose no unit, the routed
        // unit was already taken, or the offer fell below its admission bar.
        if (!served && spec.kind == PolicyKind::on_plus) {
          int best = -1;
          double best_margin = 0.0, best_h = 0.0;
          for (std::size_t k = 0; k < state.units.size(); ++k) {
            const SupplyUnit& cand = state.units[k];
            if (!cand.available) continue;
            const double rc = inst.r(i, cand.j, t, cand.s);
            if (rc <= 0.0) continue;
            const double hc = provider->get(state, static_cast<int>(k), t).value;
            const double margin = rc - spec.multiplier * hc;
            if (margin >= 0.0 && (best < 0 || margin > best_margin)) {
              best = static_cast<int>(k);
              best_margin = margin;
              best_h = hc;
            }
          }
          if (best >= 0) match_unit(best, best_h, true);
        }
        break;
      }
    }
    trace.events.push_back(ev);
  }
  return trace;
}

MatchTrace run_online(const MatchInstance& inst, const Lp3Result& lp3,
                      const MatchRealization& realization, int n_paths, Rng& rng) {
  PolicyContext ctx{&inst, &lp3, n_paths, nullptr};
  return run_policy(ctx, realization, {PolicyKind::on, 1.0}, rng);
}

MatchTrace run_online_plus(const MatchInstance& inst, const Lp3Result& lp3,
                           const MatchRealization& realization, double multiplier,
                           int n_paths, Rng& rng) {
  PolicyContext ctx{&inst, &lp3, n_paths, nullptr};
  return run_policy(ctx, realization, {PolicyKind::on_plus, multiplier}, rng);
}

MatchTrace run_greedy(const MatchInstance& inst, const MatchRealization& realization) {
  Lp3Result dummy;
  dummy.x.assign(inst.rewards.size(), 0.0);
  dummy.supply_duals.assign(
      static_cast<std::size_t>(inst.num_supply_types) * static_cast<std::size_t>(inst.horizon),
      0.0);
  PolicyContext ctx{&inst, &dummy, 1, nullptr};
  Rng rng(0);
  return run_policy(ctx, realization, {PolicyKind::greedy, 1.0}, rng);
}

MatchTrace run_bid_price(const MatchInstance& inst, const Lp3Result& lp3,
                         const MatchRealization& realization) {
  PolicyContext ctx{&inst, &lp3, 1, nullptr};
  Rng rng(0);
  return run_policy(ctx, realization, {PolicyKind::bid_price, 1.0}, rng);
}

std::string trace_to_csv(const MatchTrace& trace) {
  std::string out = "period,event,i,j,s,reward,threshold,decision\n";
  char buf[192];
  for (const MatchEvent& ev : trace.events) {
    const char* decision = ev.decision == Decision::matched      ? "matched"
                           : ev.decision == Decision::no_pick    ? "no-pick"
                           : ev.decision == Decision::threshold ? "threshold"
                                                                 : "unavailable";
    if (ev.threshold_set)
      std::snprintf(buf, sizeof buf, "%d,demand,%d,%d,%d,%.17g,%.17g,%s\n", ev.period,
                    ev.i, ev.j, ev.s, ev.reward, ev.threshold, decision);
    else
      std::snprintf(buf, sizeof buf, "%d,demand,%d,%d,%d,%.17g,,%s\n", ev.period, ev.i,
                    ev.j, ev.s, ev.reward, decision);
    out += buf;
  }
  return out;
}

// ---- diagnostics ----

SeparationBoundResult check_separation_bound(const MatchInstance& inst,
                                             const std::vector<double>& x, int i, int j,
                                             int t, int s, int n_draws, Rng& rng) {
  if (n_draws < 2) throw std::invalid_argument("check_separation_bound needs n_draws >= 2");
  const int J = inst.num_supply_types, T = inst.horizon;
  SeparationBoundResult res;
  res.x_star = x[static_cast<std::size_t>(((i * J + j) * T + t) * T + s)];

  double sum = 0.0, sumsq = 0.0;
  std::vector<SupplyUnit> units;
  for (int k = 0; k < n_draws; ++k) {
    units.clear();
    int self = -1;
    for (int ts = 0; ts <= t; ++ts) {
      const double v = rng.uniform01();
      double hi = 0.0;
      for (int jj = 0; jj < J; ++jj) {
        hi += inst.mu_at(jj, ts);
        if (v < hi) {
          if (jj == j && ts == s) self = static_cast<int>(units.size());
          units.push_back({jj, ts, true, 0.0});
          break;
        }
      }
    }
    double p = 0.0;
    if (self >= 0) {
      const std::vector<double> probs = separation_probs(inst, x, units, i, t);
      p = probs[static_cast<std::size_t>(self)];
    }
    sum += p;
    sumsq += p * p;
  }
  const double n = static_cast<double>(n_draws);
  res.mean = sum / n;
  const double var = std::max(0.0, (sumsq - n * res.mean * res.mean) / (n - 1.0));
  res.stderr_ = std::sqrt(var / n);
  res.ok = res.mean >= 0.5 * res.x_star - 3.0 * res.stderr_;
  return res;
}

Lemma4Result lemma4_check(double lambda, double x) {
  if (!(lambda > 0.0) || !(x > 0.0))
    throw std::invalid_argument("lemma4_check requires lambda > 0 and x > 0");
  Lemma4Result res;
  res.lhs = std::min(lambda, x) / x;
  res.rhs = 1.0 - x / (4.0 * lambda);
  res.holds = res.lhs >= res.rhs - 1e-12;
  return res;
}

}  // namespace pmatch::matching
