#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trustbench/digest.hpp"
#include "trustbench/fabric.hpp"
#include "trustbench/profiles.hpp"
#include "trustbench/stats.hpp"
#include "trustbench/surrogate.hpp"
#include "trustbench/validation.hpp"

namespace trustbench {

struct ExperimentConfig {
  std::uint32_t n_workers = 144;
  std::uint32_t sims_per_worker = 8;
  std::uint32_t n_policies = 500;
  double anomalous_fraction = 0.10;
  double c = 0.0;
  double sigma = 1.0;
  double delta_val = 1.8394;  // honest valid rate ~0.9 at sigma=1, m=4
  std::uint32_t m = 4;
  std::uint32_t b0 = 4;
  std::uint32_t b_max = 32;
  std::uint32_t n_batches = 20;
  std::uint32_t k_nn = 5;
  std::uint32_t max_attempts = 5;
  std::uint32_t block_size = 32;
  std::uint64_t master_seed = 1;
  std::string surface_id = "bilinear-daly-v1";
  std::string output_dir = "runs/latest";
  bool deterministic = true;
  bool write_outputs = true;
  // Quantizer range; when unset it is sized to the surface extrema +/- 3 sigma.
  std::optional<double> range_lo;
  std::optional<double> range_hi;

  void check() const;  // throws ConfigError

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_json_file(const std::filesystem::path& file);

  // Full-scale profile: 144 workers, 8 sims each, 500 policies, 20 batches.
  static ExperimentConfig full_profile();
  // Desk-scale profile for quick runs: 48 workers, 5 sims each, 200 policies.
  static ExperimentConfig desk_profile();
};

struct KsRow {
  std::string quantity;  // "P_V" or "P_D"
  double c = 0.0;
  double ks_stat = 0.0;
  double p_value = 1.0;
  bool skipped = false;  // no anomalous population to compare against
};

struct CostRow {
  double delta_val = 0.0;
  std::uint32_t m = 0;
  double avg_recomputes_per_sim = 0.0;
  double avg_bits_per_sim_per_endorser_per_dim = 0.0;
};

struct RunOutput {
  std::filesystem::path run_dir;
  FabricCounts counts;
  std::uint64_t primary_sims = 0;      // attempt-0 executions
  std::uint64_t redispatch_sims = 0;   // executions beyond attempt 0
  std::uint64_t rounds = 0;            // endorsement rounds
  std::uint64_t endorser_recomputes = 0;
  double avg_recomputes_per_sim = 0.0;
  double avg_bits_per_sim_per_endorser_per_dim = 0.0;
  std::vector<KsRow> ks_rows;
  DetectionMetrics detection;
  std::vector<SourceProfile> profiles;
  std::vector<SourceBatchSeries> batch_series;
  std::vector<SourceSpec> specs;
  Digest32 summary_digest{};
  Digest32 chain_head{};
};

// Full pipeline: build the worker pool, run n_batches of submit/execute/
// validate, compute the stats tables, write the run directory (unless
// write_outputs is off), and verify the chain.
RunOutput run_experiment(const ExperimentConfig& cfg);

struct BiasPoint {
  double c = 0.0;
  double median_false_alarm_pct = 0.0;
  double median_miss_detection_pct = 0.0;
  std::vector<double> false_alarms;     // per seed
  std::vector<double> miss_detections;  // per seed
};

// Bias sweep: paired seeds across c values (the seed list is derived
// from cfg.master_seed only, so worker identities match across c).
std::vector<BiasPoint> sweep_bias(const ExperimentConfig& cfg, const std::vector<double>& c_list,
                                  std::uint32_t n_seeds);

// Cost sweep over the (delta_val, m) grid, metrics averaged over n_seeds.
std::vector<CostRow> sweep_cost(const ExperimentConfig& cfg,
                                const std::vector<double>& delta_val_list,
                                const std::vector<std::uint32_t>& m_list, std::uint32_t n_seeds);

// Honest-pool validity rate predicted by the Gaussian model:
// erf(delta_val / (sigma * sqrt(2 (1 + 1/m)))).
double analytic_valid_rate(double delta_val, double sigma, std::uint32_t m);
// Smallest delta_val achieving the target rate (inverse of the above).
double tune_delta_val(double target_rate, double sigma, std::uint32_t m);

// Stats recomputation from a stored run directory (profiles.json).
struct DetectReport {
  std::vector<KsRow> ks_rows;
  DetectionMetrics detection;
  std::size_t classified_sources = 0;
};
DetectReport detect_from_run_dir(const std::filesystem::path& run_dir);

// Summary digest recorded in a run manifest.
Digest32 manifest_digest(const std::filesystem::path& run_dir);

void write_bias_csv(const std::filesystem::path& file, const std::vector<BiasPoint>& points);
void write_cost_csv(const std::filesystem::path& file, const std::vector<CostRow>& rows);

}  // namespace trustbench
