// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the process exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "trustbench/experiment.hpp"
#include "trustbench/ledger.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/stats.hpp"
#include "trustbench/validation.hpp"

using namespace trustbench;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

std::string fmt(double v, int precision = 6) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

template <typename Body>
void criterion(int id, const std::string& name, Body&& body) {
  bool ok = false;
  std::string detail;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("unexpected exception: ") + e.what();
  }
  if (!ok) ++g_failures;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << detail
            << std::endl;
}

fs::path scratch_dir(const std::string& leaf) {
  const auto dir = fs::temp_directory_path() / "trustbench-acceptance" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const KsRow& row_for(const std::vector<KsRow>& rows, const std::string& quantity) {
  for (const auto& r : rows) {
    if (r.quantity == quantity) return r;
  }
  throw std::runtime_error("missing KS row for " + quantity);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Shared desk-scale replay artifacts, produced by criterion 8 and audited
// again by criterion 9.
std::optional<RunOutput> g_desk_run;
fs::path g_desk_dir;

bool criterion_ks_separation(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();

  auto cfg = ExperimentConfig::full_profile();
  cfg.sigma = 1.0;
  cfg.m = 4;
  cfg.delta_val = tune_delta_val(0.9, cfg.sigma, cfg.m);
  cfg.master_seed = 1;
  cfg.deterministic = true;
  cfg.write_outputs = false;
  cfg.output_dir = scratch_dir("ks-c10").string();

  cfg.c = 10.0;
  const auto biased = run_experiment(cfg);
  cfg.c = 0.0;
  cfg.output_dir = scratch_dir("ks-c0").string();
  const auto unbiased = run_experiment(cfg);

  const auto elapsed =
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - t0);

  const auto& pv10 = row_for(biased.ks_rows, "P_V");
  const auto& pd10 = row_for(biased.ks_rows, "P_D");
  const auto& pv0 = row_for(unbiased.ks_rows, "P_V");
  const auto& pd0 = row_for(unbiased.ks_rows, "P_D");

  const bool significant = pv10.p_value < 1e-3 && pd10.p_value < 1e-3;
  const bool null_like = pv0.p_value > 0.01 && pd0.p_value > 0.01;
  const bool ordered = pv10.ks_stat > pv0.ks_stat && pd10.ks_stat > pd0.ks_stat;
  const bool fast = elapsed.count() <= 600;

  detail = "c=10 p(P_V)=" + fmt(pv10.p_value, 3) + " p(P_D)=" + fmt(pd10.p_value, 3) +
           ", c=0 p(P_V)=" + fmt(pv0.p_value, 3) + " p(P_D)=" + fmt(pd0.p_value, 3) +
           ", stats " + fmt(pv10.ks_stat, 3) + ">" + fmt(pv0.ks_stat, 3) + " and " +
           fmt(pd10.ks_stat, 3) + ">" + fmt(pd0.ks_stat, 3) + ", " +
           std::to_string(elapsed.count()) + "s";
  return significant && null_like && ordered && fast;
}

bool criterion_detection_trend(std::string& detail) {
  // Full-scale pool with coarse batching: per-source feature histograms stay
  // sparse enough that heavy bias contaminates honest profiles (false alarms
  // rise with c) while detection still improves from c=0 to c=5.
  auto cfg = ExperimentConfig::full_profile();
  cfg.n_batches = 3;
  cfg.sigma = 1.0;
  cfg.m = 4;
  cfg.k_nn = 5;
  cfg.delta_val = tune_delta_val(0.9, cfg.sigma, cfg.m);
  cfg.master_seed = 1;
  cfg.deterministic = true;
  cfg.write_outputs = false;
  cfg.output_dir = scratch_dir("bias-sweep").string();

  const std::vector<double> c_list{0.0, 2.0, 5.0, 10.0, 15.0};
  const auto points = sweep_bias(cfg, c_list, 5);
  if (points.size() != c_list.size()) {
    detail = "expected one point per c";
    return false;
  }
  std::map<double, const BiasPoint*> by_c;
  for (const auto& p : points) by_c[p.c] = &p;

  const double md0 = by_c.at(0.0)->median_miss_detection_pct;
  const double md5 = by_c.at(5.0)->median_miss_detection_pct;
  const double fa5 = by_c.at(5.0)->median_false_alarm_pct;
  const double fa15 = by_c.at(15.0)->median_false_alarm_pct;

  detail = "median MD: c=0 " + fmt(md0, 3) + "% vs c=5 " + fmt(md5, 3) +
           "%; median FA: c=5 " + fmt(fa5, 3) + "% vs c=15 " + fmt(fa15, 3) + "%";
  return md5 < md0 && fa15 > fa5;
}

std::vector<CostRow> cost_sweep_rows() {
  ExperimentConfig base;
  base.n_workers = 24;
  base.sims_per_worker = 8;
  base.n_policies = 96;
  base.n_batches = 2;
  base.anomalous_fraction = 0.0;
  base.sigma = 1.0;
  base.b0 = 4;
  base.k_nn = 5;
  base.master_seed = 1003;
  base.deterministic = true;
  base.write_outputs = false;
  base.output_dir = scratch_dir("cost-sweep").string();
  static const std::vector<double> deltas{0.5, 1.0, 2.0, 4.0, 8.0, 180.0};
  static const std::vector<std::uint32_t> ms{2, 4, 8};
  return sweep_cost(base, deltas, ms, 20);
}

bool criterion_recompute_cost(const std::vector<CostRow>& rows, std::string& detail) {
  bool monotone = true;
  bool floor_exact = true;
  std::string floor_report;
  for (std::uint32_t m : {2u, 4u, 8u}) {
    std::vector<const CostRow*> mine;
    for (const auto& r : rows) {
      if (r.m == m) mine.push_back(&r);
    }
    if (mine.size() != 6) {
      detail = "expected a 6-point grid per m";
      return false;
    }
    for (std::size_t i = 0; i + 1 < mine.size(); ++i) {
      if (mine[i]->delta_val >= mine[i + 1]->delta_val) {
        detail = "grid not ascending";
        return false;
      }
      if (mine[i + 1]->avg_recomputes_per_sim > mine[i]->avg_recomputes_per_sim + 1e-9) {
        monotone = false;
      }
    }
    const double at_loosest = mine.back()->avg_recomputes_per_sim;
    if (at_loosest != static_cast<double>(m)) floor_exact = false;
    floor_report += " m=" + std::to_string(m) + ":" + fmt(at_loosest, 8);
  }
  detail = std::string("recomputes non-increasing in tolerance: ") +
           (monotone ? "yes" : "no") + "; at loosest tolerance" + floor_report;
  return monotone && floor_exact;
}

bool criterion_bits_cost(const std::vector<CostRow>& rows, std::string& detail) {
  bool under_32 = true;
  bool monotone = true;
  bool floor_exact = true;
  double max_bits = 0.0;
  for (std::uint32_t m : {2u, 4u, 8u}) {
    std::vector<const CostRow*> mine;
    for (const auto& r : rows) {
      if (r.m == m) mine.push_back(&r);
    }
    for (std::size_t i = 0; i < mine.size(); ++i) {
      const double bits = mine[i]->avg_bits_per_sim_per_endorser_per_dim;
      max_bits = std::max(max_bits, bits);
      if (bits >= 32.0) under_32 = false;
      if (i + 1 < mine.size() &&
          mine[i + 1]->avg_bits_per_sim_per_endorser_per_dim > bits + 1e-9) {
        monotone = false;
      }
    }
    if (mine.back()->avg_bits_per_sim_per_endorser_per_dim != 4.0) floor_exact = false;
  }
  detail = "max avg bits/dim " + fmt(max_bits, 4) + " (< 32: " + (under_32 ? "yes" : "no") +
           "), non-increasing: " + (monotone ? "yes" : "no") +
           ", loosest-tolerance floor b0=4: " + (floor_exact ? "yes" : "no");
  return under_32 && monotone && floor_exact;
}

bool criterion_analytic_rate(std::string& detail) {
  RngStream rng(31337);
  const double sigma = 1.0;
  double worst = 0.0;
  for (std::uint32_t m : {2u, 4u, 8u}) {
    for (double delta : {1.0, 1.8394, 2.5}) {
      ToleranceConfig cfg;
      cfg.delta_val = delta;
      cfg.m = m;
      cfg.b0 = 32;
      cfg.b_max = 32;
      cfg.range_lo = -60.0;
      cfg.range_hi = 60.0;
      int valid = 0;
      const int rounds = 10000;
      for (int it = 0; it < rounds; ++it) {
        const double truth = 10.0 * rng.uniform01();
        ResultRecord rec;
        rec.task_id = 1;
        rec.reporter = 1;
        rec.reward = RewardVector{{truth + sigma * rng.normal()}};
        std::vector<RewardVector> endorsers;
        for (std::uint32_t j = 0; j < m; ++j) {
          endorsers.push_back(RewardVector{{truth + sigma * rng.normal()}});
        }
        if (validate_with_refinement(rec, endorsers, cfg).valid) ++valid;
      }
      const double got = valid / static_cast<double>(rounds);
      const double want = analytic_valid_rate(delta, sigma, m);
      worst = std::max(worst, std::abs(got - want));
    }
  }
  detail = "max |empirical - analytic| over the (m, tolerance) grid = " + fmt(worst, 4) +
           " (allowed 0.02)";
  return worst < 0.02;
}

bool criterion_tamper_evidence(std::string& detail) {
  Ledger led(EndorsementPolicy{2}, 8);
  for (int i = 0; i < 1600; ++i) {
    TaskSubmittedEvent ev;
    ev.task_id = static_cast<TaskId>(i + 1);
    ev.policy = {(i % 1000) / 1000.0, (i / 1000) / 10.0};
    ev.payload_hash = sha256(ev.policy.canonical());
    const auto res = led.submit(make_tx(ev, {}, i + 1));
    if (!res.accepted) {
      detail = "setup submission rejected";
      return false;
    }
  }
  led.flush();
  const std::size_t blocks = led.chain().size() - 1;
  if (blocks != 200) {
    detail = "expected a 200-block chain, built " + std::to_string(blocks);
    return false;
  }
  const auto bytes = serialize_chain(led.chain());
  if (!verify_chain_bytes(bytes).ok) {
    detail = "pristine chain failed to verify";
    return false;
  }

  RngStream rng(7777);
  int detected = 0;
  const int trials = 1000;
  for (int it = 0; it < trials; ++it) {
    auto copy = bytes;
    const std::size_t pos = static_cast<std::size_t>(rng.below(copy.size()));
    const std::uint8_t mask = static_cast<std::uint8_t>(1 + rng.below(255));
    copy[pos] ^= mask;
    if (!verify_chain_bytes(copy).ok) ++detected;
  }
  detail = std::to_string(detected) + "/" + std::to_string(trials) +
           " single-byte mutations detected on a " + std::to_string(blocks) + "-block chain";
  return detected == trials;
}

bool criterion_oracle_equivalence(std::string& detail) {
  RngStream rng(2718);

  // KS statistic against a quadratic-time recomputation.
  double worst_ks = 0.0;
  for (int it = 0; it < 50; ++it) {
    const std::size_t na = 5 + rng.below(150);
    const std::size_t nb = 5 + rng.below(150);
    std::vector<double> a(na), b(nb);
    for (auto& v : a) v = rng.normal(0.0, 1.0);
    for (auto& v : b) v = rng.normal(0.2, 1.3);
    if (it % 4 == 0) {
      for (auto& v : a) v = std::round(v * 8.0) / 8.0;
      for (auto& v : b) v = std::round(v * 8.0) / 8.0;
    }
    std::vector<double> pooled(a);
    pooled.insert(pooled.end(), b.begin(), b.end());
    double brute = 0.0;
    for (const double x : pooled) {
      const double fa =
          std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; }) /
          static_cast<double>(na);
      const double fb =
          std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; }) /
          static_cast<double>(nb);
      brute = std::max(brute, std::abs(fa - fb));
    }
    worst_ks = std::max(worst_ks, std::abs(ecdf_and_ks(a, b).statistic - brute));
  }

  // Total-variation metric axioms.
  const auto edges = uniform_edges(0.0, 1.0, 16);
  auto random_pmf = [&]() {
    std::vector<double> m(16);
    double total = 0.0;
    for (auto& v : m) {
      v = rng.uniform01() + 1e-9;
      total += v;
    }
    for (auto& v : m) v /= total;
    return Pmf{edges, m};
  };
  bool axioms = true;
  for (int it = 0; it < 10000 && axioms; ++it) {
    const auto p = random_pmf();
    const auto q = random_pmf();
    const auto r = random_pmf();
    const double pq = tv_distance(p, q);
    const double pr = tv_distance(p, r);
    const double qr = tv_distance(q, r);
    axioms = pq >= 0.0 && pq <= 1.0 + 1e-12 && pq == tv_distance(q, p) &&
             tv_distance(p, p) == 0.0 && pq <= pr + qr + 1e-12;
  }

  // Endorsement deviation against the textbook formula.
  double worst_dev = 0.0;
  for (int it = 0; it < 10000; ++it) {
    const std::size_t d = 1 + rng.below(8);
    const std::size_t m = 1 + rng.below(8);
    RewardVector reported;
    for (std::size_t i = 0; i < d; ++i) reported.values.push_back(rng.normal(0.0, 50.0));
    std::vector<RewardVector> endorsers(m);
    for (auto& e : endorsers) {
      for (std::size_t i = 0; i < d; ++i) e.values.push_back(rng.normal(0.0, 50.0));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double mean = 0.0;
      for (const auto& e : endorsers) mean += e.values[i];
      mean /= static_cast<double>(m);
      acc += (reported.values[i] - mean) * (reported.values[i] - mean);
    }
    const double want = std::sqrt(acc);
    const double got = endorsement_deviation(reported, endorsers);
    worst_dev = std::max(worst_dev, std::abs(got - want) / std::max(1.0, want));
  }

  detail = "KS max error " + fmt(worst_ks, 3) + " (<=1e-12: " +
           (worst_ks <= 1e-12 ? "yes" : "no") + "), TV axioms on 10^4 triples: " +
           (axioms ? "hold" : "violated") + ", deviation max rel error " + fmt(worst_dev, 3);
  return worst_ks <= 1e-12 && axioms && worst_dev <= 1e-12;
}

bool criterion_deterministic_replay(std::string& detail) {
  auto cfg = ExperimentConfig::desk_profile();
  cfg.master_seed = 4242;
  cfg.deterministic = true;
  cfg.write_outputs = true;

  const auto dir_a = scratch_dir("replay-a");
  const auto dir_b = scratch_dir("replay-b");
  const auto dir_c = scratch_dir("replay-c");

  cfg.output_dir = dir_a.string();
  const auto a = run_experiment(cfg);
  cfg.output_dir = dir_b.string();
  const auto b = run_experiment(cfg);
  cfg.master_seed = 4243;
  cfg.output_dir = dir_c.string();
  const auto c = run_experiment(cfg);

  const bool replay_equal = a.summary_digest == b.summary_digest;
  const bool seed_sensitive = a.summary_digest != c.summary_digest;

  g_desk_run = a;
  g_desk_dir = dir_a;

  detail = std::string("same-seed digests ") + (replay_equal ? "equal" : "differ") + " (" +
           to_hex(a.summary_digest).substr(0, 12) + "...), reseeded digest " +
           (seed_sensitive ? "differs" : "collides");
  return replay_equal && seed_sensitive;
}

bool criterion_conservation(std::string& detail) {
  if (!g_desk_run) {
    auto cfg = ExperimentConfig::desk_profile();
    cfg.master_seed = 4242;
    cfg.deterministic = true;
    cfg.write_outputs = true;
    g_desk_dir = scratch_dir("conservation");
    cfg.output_dir = g_desk_dir.string();
    g_desk_run = run_experiment(cfg);
  }
  const auto& out = *g_desk_run;

  const bool balanced = out.counts.submitted == out.counts.committed + out.counts.invalid_flagged;

  const Chain chain = load_chain(g_desk_dir / "chain.bin");
  if (!verify_chain(chain).ok) {
    detail = "stored chain does not verify";
    return false;
  }

  std::map<TaskId, int> valid_verdicts;
  for (const auto& block : chain) {
    for (const auto& tx : block.txs) {
      if (tx.kind != TxKind::verdict) continue;
      const auto ev = std::get<VerdictEvent>(tx.event());
      if (ev.valid) valid_verdicts[ev.task_id] += 1;
    }
  }

  std::ifstream tasks(g_desk_dir / "tasks.csv");
  std::string line;
  std::getline(tasks, line);  // header
  std::uint64_t committed_rows = 0, flagged_rows = 0;
  bool verdicts_match = true;
  while (std::getline(tasks, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    const TaskId id = std::stoull(field);
    std::getline(ss, field, ',');
    std::getline(ss, field, ',');
    std::string status;
    std::getline(ss, status, ',');
    const int n_valid = valid_verdicts.count(id) ? valid_verdicts.at(id) : 0;
    if (status == "committed") {
      ++committed_rows;
      if (n_valid != 1) verdicts_match = false;
    } else {
      if (status == "invalid_flagged") ++flagged_rows;
      if (n_valid != 0) verdicts_match = false;
    }
  }
  const bool csv_matches =
      committed_rows == out.counts.committed && flagged_rows == out.counts.invalid_flagged &&
      committed_rows + flagged_rows == out.counts.submitted;

  detail = "submitted " + std::to_string(out.counts.submitted) + " = committed " +
           std::to_string(out.counts.committed) + " + flagged " +
           std::to_string(out.counts.invalid_flagged) +
           "; exactly one valid verdict per committed task: " +
           (verdicts_match ? "yes" : "no");
  return balanced && csv_matches && verdicts_match;
}

}  // namespace

int main() {
  criterion(1, "ks-separation-at-full-scale", criterion_ks_separation);
  criterion(2, "detection-trend-over-bias-sweep", criterion_detection_trend);

  std::vector<CostRow> cost_rows;
  try {
    cost_rows = cost_sweep_rows();
  } catch (const std::exception& e) {
    std::cout << "FAIL criterion 3 (recompute-cost-monotonicity): sweep failed: " << e.what()
              << std::endl;
    std::cout << "FAIL criterion 4 (bits-cost-bound-and-trend): sweep failed: " << e.what()
              << std::endl;
    g_failures += 2;
  }
  if (!cost_rows.empty()) {
    criterion(3, "recompute-cost-monotonicity",
              [&](std::string& d) { return criterion_recompute_cost(cost_rows, d); });
    criterion(4, "bits-cost-bound-and-trend",
              [&](std::string& d) { return criterion_bits_cost(cost_rows, d); });
  }

  criterion(5, "analytic-validation-rate", criterion_analytic_rate);
  criterion(6, "ledger-tamper-evidence", criterion_tamper_evidence);
  criterion(7, "statistical-oracle-equivalence", criterion_oracle_equivalence);
  criterion(8, "deterministic-replay", criterion_deterministic_replay);
  criterion(9, "state-machine-conservation", criterion_conservation);

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all 9 criteria passed" << std::endl;
  return 0;
}
