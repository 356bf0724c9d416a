#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trustbench/errors.hpp"
#include "trustbench/experiment.hpp"
#include "trustbench/ledger.hpp"

namespace {

using namespace trustbench;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFailed = 2;
constexpr int kExitRuntime = 3;

ExperimentConfig resolve_config(const std::string& config_file, const std::string& profile,
                                const std::string& out_dir, std::uint64_t seed, bool seed_set,
                                bool threads) {
  ExperimentConfig cfg;
  if (!config_file.empty()) {
    cfg = ExperimentConfig::from_json_file(config_file);
  } else if (profile == "full") {
    cfg = ExperimentConfig::full_profile();
  } else {
    cfg = ExperimentConfig::desk_profile();
  }
  if (const char* env = std::getenv("TRUSTBENCH_OUT")) cfg.output_dir = env;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_set) cfg.master_seed = seed;
  if (threads) cfg.deterministic = false;
  return cfg;
}

void print_run_summary(const RunOutput& out) {
  std::cout << "run dir: " << out.run_dir.string() << "\n";
  std::cout << "tasks: " << out.counts.submitted << " submitted, " << out.counts.committed
            << " committed, " << out.counts.invalid_flagged << " flagged invalid\n";
  std::cout << "rounds: " << out.rounds << " (primary sims " << out.primary_sims
            << ", redispatch sims " << out.redispatch_sims << ")\n";
  std::cout << "avg recomputes/sim: " << out.avg_recomputes_per_sim
            << ", avg bits/sim/endorser/dim: " << out.avg_bits_per_sim_per_endorser_per_dim
            << "\n";
  for (const KsRow& row : out.ks_rows) {
    if (row.skipped) {
      std::cout << "ks " << row.quantity << ": skipped (no anomalous population)\n";
    } else {
      std::cout << "ks " << row.quantity << ": stat=" << row.ks_stat << " p=" << row.p_value
                << "\n";
    }
  }
  std::cout << "false alarm %: ";
  if (out.detection.false_alarm_pct) {
    std::cout << *out.detection.false_alarm_pct;
  } else {
    std::cout << "NA";
  }
  std::cout << ", miss detection %: ";
  if (out.detection.miss_detection_pct) {
    std::cout << *out.detection.miss_detection_pct;
  } else {
    std::cout << "NA";
  }
  std::cout << "\n";
  std::cout << "chain head: " << to_hex(out.chain_head) << "\n";
  std::cout << "summary digest: " << to_hex(out.summary_digest) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Endorsement-validated distributed simulation benchmark"};
  app.require_subcommand(1);

  std::string config_file;
  std::string profile = "desk";
  std::string out_dir;
  std::uint64_t seed = 0;
  bool threads = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON config file (overrides --profile)");
    sub->add_option("--profile", profile, "built-in profile: desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
    sub->add_option("--out", out_dir, "output directory (also via TRUSTBENCH_OUT)");
    sub->add_option("--seed", seed, "master seed override");
    sub->add_flag("--threads", threads, "threaded worker execution (non-deterministic)");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "run the full experiment");
  add_common(run_cmd);

  CLI::App* bias_cmd = app.add_subcommand("sweep-bias", "detection metrics across bias values c");
  add_common(bias_cmd);
  std::vector<double> c_list{0.0, 2.0, 5.0, 10.0, 15.0};
  std::uint32_t bias_seeds = 5;
  bias_cmd->add_option("--c-list", c_list, "bias constants to sweep");
  bias_cmd->add_option("--seeds", bias_seeds, "paired seeds per c");

  CLI::App* cost_cmd = app.add_subcommand("sweep-cost", "cost metrics across (delta_val, m)");
  add_common(cost_cmd);
  std::vector<double> delta_list{0.5, 1.0, 2.0, 4.0, 8.0, 180.0};
  std::vector<std::uint32_t> m_list{2, 4, 8};
  std::uint32_t cost_seeds = 20;
  cost_cmd->add_option("--delta-list", delta_list, "validation tolerances to sweep");
  cost_cmd->add_option("--m-list", m_list, "endorser set sizes to sweep");
  cost_cmd->add_option("--seeds", cost_seeds, "seeds per grid point");

  CLI::App* verify_cmd = app.add_subcommand("verify-ledger", "verify a chain file");
  std::string chain_file;
  verify_cmd->add_option("chain", chain_file, "chain binary")->required();

  CLI::App* detect_cmd = app.add_subcommand("detect", "re-run detection on a stored run");
  std::string detect_dir;
  detect_cmd->add_option("run_dir", detect_dir, "run directory")->required();

  CLI::App* replay_cmd = app.add_subcommand("replay-check", "compare two runs' summary digests");
  std::string dir_a, dir_b;
  replay_cmd->add_option("run_dir_a", dir_a, "first run directory")->required();
  replay_cmd->add_option("run_dir_b", dir_b, "second run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const bool seed_set = run_cmd->count("--seed") || bias_cmd->count("--seed") ||
                        cost_cmd->count("--seed");

  try {
    if (run_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(config_file, profile, out_dir, seed, seed_set, threads);
      print_run_summary(run_experiment(cfg));
      return kExitOk;
    }

    if (bias_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(config_file, profile, out_dir, seed, seed_set, threads);
      const auto points = sweep_bias(cfg, c_list, bias_seeds);
      std::filesystem::create_directories(cfg.output_dir);
      const auto csv = std::filesystem::path(cfg.output_dir) / "detection.csv";
      write_bias_csv(csv, points);
      std::cout << "c,false_alarm_pct,miss_detection_pct\n";
      for (const BiasPoint& p : points) {
        std::cout << p.c << ',' << p.median_false_alarm_pct << ','
                  << p.median_miss_detection_pct << '\n';
      }
      std::cout << "wrote " << csv.string() << "\n";
      return kExitOk;
    }

    if (cost_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(config_file, profile, out_dir, seed, seed_set, threads);
      const auto rows = sweep_cost(cfg, delta_list, m_list, cost_seeds);
      std::filesystem::create_directories(cfg.output_dir);
      const auto csv = std::filesystem::path(cfg.output_dir) / "cost.csv";
      write_cost_csv(csv, rows);
      std::cout << "delta_val,m,avg_recomputes_per_sim,avg_bits_per_sim_per_endorser_per_dim\n";
      for (const CostRow& r : rows) {
        std::cout << r.delta_val << ',' << r.m << ',' << r.avg_recomputes_per_sim << ','
                  << r.avg_bits_per_sim_per_endorser_per_dim << '\n';
      }
      std::cout << "wrote " << csv.string() << "\n";
      return kExitOk;
    }

    if (verify_cmd->parsed()) {
      const VerifyResult v = verify_chain_file(chain_file);
      if (v.ok) {
        const Chain chain = load_chain(chain_file);
        std::cout << "ok " << to_hex(chain.back().block_hash) << "\n";
        return kExitOk;
      }
      std::cout << "broken at height " << v.broken_height << ": " << v.reason << "\n";
      return kExitVerifyFailed;
    }

    if (detect_cmd->parsed()) {
      const DetectReport report = detect_from_run_dir(detect_dir);
      for (const KsRow& row : report.ks_rows) {
        if (row.skipped) {
          std::cout << "ks " << row.quantity << ": skipped (no anomalous population)\n";
        } else {
          std::cout << "ks " << row.quantity << ": stat=" << row.ks_stat << " p=" << row.p_value
                    << "\n";
        }
      }
      std::cout << "classified sources: " << report.classified_sources << "\n";
      std::cout << "false alarm %: ";
      if (report.detection.false_alarm_pct) {
        std::cout << *report.detection.false_alarm_pct;
      } else {
        std::cout << "NA";
      }
      std::cout << ", miss detection %: ";
      if (report.detection.miss_detection_pct) {
        std::cout << *report.detection.miss_detection_pct;
      } else {
        std::cout << "NA";
      }
      std::cout << "\n";
      return kExitOk;
    }

    if (replay_cmd->parsed()) {
      const Digest32 a = manifest_digest(dir_a);
      const Digest32 b = manifest_digest(dir_b);
      if (a == b) {
        std::cout << "equal " << to_hex(a) << "\n";
        return kExitOk;
      }
      std::cout << "digest mismatch:\n  " << dir_a << ": " << to_hex(a) << "\n  " << dir_b << ": "
                << to_hex(b) << "\n";
      return kExitVerifyFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
