#include "trustbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <thread>

#include "trustbench/errors.hpp"
#include "trustbench/ledger.hpp"
#include "trustbench/rng.hpp"

namespace trustbench {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + file.string() + " for writing");
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

std::string kind_name(SourceKind k) {
  return k == SourceKind::anomalous ? "anomalous" : "honest";
}

SourceKind kind_from_name(const std::string& s) {
  if (s == "honest") return SourceKind::honest;
  if (s == "anomalous") return SourceKind::anomalous;
  throw ParseError("unknown source kind: " + s);
}

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Digest32 digest_from_hex(const std::string& hex) {
  if (hex.size() != 64) throw ParseError("digest hex must be 64 chars");
  Digest32 d{};
  auto nibble = [](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw ParseError("bad hex digit");
  };
  for (std::size_t i = 0; i < 32; ++i) {
    d[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  }
  return d;
}

// Per-source per-call averages over the first batch, the window the
// population-level KS comparison runs on.
struct WindowPoint {
  SourceId source_id = 0;
  std::uint64_t n_calls = 0;
  double avg_v = 0.0;
  double avg_d = 0.0;
};

// Shared between a live run and the detect subcommand.
struct StatsBundle {
  std::vector<KsRow> ks_rows;
  DetectionMetrics detection;
  std::size_t classified = 0;
};

StatsBundle compute_stats(const std::vector<SourceBatchSeries>& series,
                          const std::vector<WindowPoint>& window,
                          const std::vector<SourceSpec>& specs, std::uint32_t k_nn, double c) {
  StatsBundle out;
  std::map<SourceId, SourceKind> kinds;
  for (const SourceSpec& s : specs) kinds[s.source_id] = s.kind;

  // The KS populations take one sample per source: its per-call averages over
  // the first batch. Pooling the per-batch points of the whole run instead
  // would feed the test heavily autocorrelated samples and overstate
  // significance.
  std::vector<double> honest_v, anom_v, honest_d, anom_d;
  for (const WindowPoint& p : window) {
    if (p.n_calls == 0) continue;
    const bool anom = kinds.at(p.source_id) == SourceKind::anomalous;
    auto& pool_v = anom ? anom_v : honest_v;
    auto& pool_d = anom ? anom_d : honest_d;
    pool_v.push_back(p.avg_v);
    pool_d.push_back(p.avg_d);
  }

  KsRow row_v{"P_V", c, 0.0, 1.0, false};
  KsRow row_d{"P_D", c, 0.0, 1.0, false};
  if (honest_v.empty() || anom_v.empty()) {
    row_v.skipped = true;
    row_d.skipped = true;
  } else {
    const KsResult rv = ecdf_and_ks(honest_v, anom_v);
    const KsResult rd = ecdf_and_ks(honest_d, anom_d);
    row_v.ks_stat = rv.statistic;
    row_v.p_value = rv.p_value;
    row_d.ks_stat = rd.statistic;
    row_d.p_value = rd.p_value;
  }
  out.ks_rows = {row_v, row_d};

  if (!series.empty()) {
    const FeatureGrids grids = default_grids(series);
    const auto features = build_features(series, specs, grids);
    if (features.size() > k_nn) {
      const auto predicted = knn_classify(features, k_nn);
      std::vector<SourceKind> truth;
      truth.reserve(features.size());
      for (const SourceFeatures& f : features) truth.push_back(f.truth);
      out.detection = detection_metrics(predicted, truth);
      out.classified = features.size();
    }
  }
  return out;
}

struct RoundAudit {
  TaskId task_id;
  std::uint32_t attempt;
  SourceId reporter;
  std::vector<SourceId> endorsers;
  double delta;
  bool valid;
  std::uint32_t bits_sent;
  std::uint32_t recomputes;
};

void write_ks_csv(const fs::path& file, const std::vector<KsRow>& rows) {
  auto out = open_out(file);
  out << "quantity,c,ks_stat,p_value,note\n";
  for (const KsRow& r : rows) {
    if (r.skipped) {
      out << r.quantity << ',' << fmt(r.c) << ",NA,NA,no anomalous population\n";
    } else {
      out << r.quantity << ',' << fmt(r.c) << ',' << fmt(r.ks_stat) << ',' << fmt(r.p_value)
          << ",\n";
    }
  }
}

void write_detection_csv(const fs::path& file, double c, const DetectionMetrics& d) {
  auto out = open_out(file);
  out << "c,false_alarm_pct,miss_detection_pct\n";
  out << fmt(c) << ',' << (d.false_alarm_pct ? fmt(*d.false_alarm_pct) : "NA") << ','
      << (d.miss_detection_pct ? fmt(*d.miss_detection_pct) : "NA") << '\n';
}

void write_ecdf_csv(const fs::path& file, const std::vector<SourceProfile>& profiles,
                    const std::map<SourceId, SourceKind>& kinds, bool deviations) {
  auto out = open_out(file);
  out << "population,x,cdf\n";
  for (const SourceKind kind : {SourceKind::honest, SourceKind::anomalous}) {
    std::vector<double> xs;
    for (const SourceProfile& p : profiles) {
      if (p.n_calls == 0 || kinds.at(p.source_id) != kind) continue;
      xs.push_back(deviations ? p.mean_deviation() : p.v_per_call());
    }
    if (xs.empty()) continue;
    for (const auto& [x, f] : ecdf_points(std::move(xs))) {
      out << kind_name(kind) << ',' << fmt(x) << ',' << fmt(f) << '\n';
    }
  }
}

constexpr const char* kManifestFiles[] = {
    "chain.bin",  "config.json",     "cost.csv",    "detection.csv", "ecdf_dev.csv",
    "ecdf_valid.csv", "events.log",  "ks_table.csv", "profiles.json", "results.ndjson",
    "rounds.ndjson",  "tasks.csv"};

Digest32 write_manifest(const fs::path& run_dir, const nlohmann::json& config_echo) {
  nlohmann::json files = nlohmann::json::object();
  std::string digest_input;
  for (const char* name : kManifestFiles) {
    const std::string hex = to_hex(sha256(read_bytes(run_dir / name)));
    files[name] = hex;
    digest_input += std::string(name) + "=" + hex + "\n";
  }
  const Digest32 digest = sha256(digest_input);
  nlohmann::json manifest{{"files", files},
                          {"summary_digest", to_hex(digest)},
                          {"rng_algorithm", std::string(kRngAlgorithm)},
                          {"config", config_echo}};
  auto out = open_out(run_dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  return digest;
}

RunOutput run_impl(const ExperimentConfig& cfg, const fs::path& run_dir) {
  GroundTruthModel model;
  model.surface_id = cfg.surface_id;
  model.d = 1;
  model.params = default_surface_params(cfg.surface_id);

  ToleranceConfig tol;
  tol.delta_val = cfg.delta_val;
  tol.m = cfg.m;
  tol.b0 = cfg.b0;
  tol.b_max = cfg.b_max;
  if (cfg.range_lo) {
    tol.range_lo = *cfg.range_lo;
    tol.range_hi = *cfg.range_hi;
  } else {
    const SurfaceExtrema ex = surface_extrema(model);
    double lo = ex.min - 3.0 * cfg.sigma;
    double hi = ex.max + 3.0 * cfg.sigma;
    if (!(lo < hi)) {
      lo -= 0.5;
      hi += 0.5;
    }
    tol.range_lo = lo;
    tol.range_hi = hi;
  }
  tol.check();

  // Every worker hosts sims_per_worker simulation slots; each slot is an
  // independent source identity for anomaly assignment, endorsement, and
  // profiling.
  const std::uint32_t n_sources = cfg.n_workers * cfg.sims_per_worker;
  RngStream assign_rng(derive_seed(cfg.master_seed, {tag(StreamTag::anomaly_assignment)}));
  std::vector<SourceSpec> specs =
      assign_anomalies(n_sources, cfg.anomalous_fraction, cfg.c, cfg.sigma, assign_rng);
  for (std::uint32_t i = 0; i < specs.size(); ++i) {
    specs[i].source_id = i + 1;
    specs[i].seed = derive_seed(cfg.master_seed, {tag(StreamTag::worker_identity), i + 1});
  }

  Ledger ledger(EndorsementPolicy{cfg.m}, cfg.block_size);
  std::mutex sink_mu;
  TxSink sink = [&](const TxEvent& ev, const std::vector<SourceId>& endorsements,
                    std::uint64_t t) {
    std::lock_guard lock(sink_mu);
    const SubmitResult r = ledger.submit(make_tx(ev, endorsements, t));
    if (!r.accepted) throw ProtocolError("ledger rejected transaction: " + r.reason);
    if (ledger.queued() >= cfg.block_size) ledger.cut_block();
  };

  LogicalClock clock;
  TaskFabric fabric(clock, sink, cfg.max_attempts);
  ProfileStore profiles;
  std::vector<SourceId> pool;
  for (const SourceSpec& s : specs) {
    fabric.register_worker(s.source_id);
    profiles.register_source(s.source_id);
    pool.push_back(s.source_id);
  }
  ValidationEngine engine(model, tol, specs, clock, sink);

  sink(ModelRegisteredEvent{model.surface_id, model.d, model.params, "model-creator"}, {},
       clock.tick());

  std::vector<RoundCall> calls;
  std::vector<RoundAudit> audits;
  std::mutex log_mu;
  std::vector<std::uint64_t> batch_ends;
  std::vector<SourceProfile> window_profiles;
  std::atomic<std::uint64_t> round_counter{0};
  std::atomic<std::uint64_t> primary_sims{0};
  std::atomic<std::uint64_t> redispatch_sims{0};
  std::atomic<std::uint64_t> endorser_recomputes{0};
  std::atomic<std::uint64_t> per_dim_bits{0};

  auto execute_one = [&](SourceId worker, const Task& t, std::uint32_t batch) {
    const SourceSpec& spec = specs[worker - 1];
    RngStream sim_rng(derive_seed(
        cfg.master_seed, {tag(StreamTag::reporter_sim), batch, t.task_id, t.attempt, worker}));
    RewardVector reward = simulate(spec, model, t.policy, sim_rng);
    const QuantizedReport first_report = quantize(reward, cfg.b0, tol);
    const ResultRecord rec =
        fabric.post_result(worker, t.task_id, std::move(reward), first_report.encode());
    if (rec.attempt == 0) {
      primary_sims.fetch_add(1);
    } else {
      redispatch_sims.fetch_add(1);
    }

    RngStream sel_rng(derive_seed(
        cfg.master_seed, {tag(StreamTag::endorser_selection), batch, t.task_id, t.attempt}));
    const EndorserStreamFactory factory = [&](SourceId endorser) {
      return RngStream(derive_seed(
          cfg.master_seed,
          {tag(StreamTag::endorser_sim), batch, t.task_id, t.attempt, endorser}));
    };
    const auto round = engine.run_validation(rec, pool, sel_rng, factory, profiles, fabric);
    if (!round) throw ProtocolError("validation could not seat an endorser set");

    endorser_recomputes.fetch_add(round->recomputes);
    per_dim_bits.fetch_add(round->bits_sent / rec.reward.dim());
    const std::uint64_t idx = round_counter.fetch_add(1);
    std::lock_guard lock(log_mu);
    calls.push_back({round->reporter, idx, round->valid, round->delta});
    for (SourceId j : round->endorsers) calls.push_back({j, idx, round->valid, round->delta});
    audits.push_back({round->task_id, round->attempt, round->reporter, round->endorsers,
                      round->delta, round->valid, round->bits_sent, round->recomputes});
  };

  auto run_batch_deterministic = [&](std::uint32_t batch) {
    while (fabric.queue_length() > 0) {
      bool progress = false;
      for (const SourceSpec& s : specs) {
        const auto t = fabric.claim_task(s.source_id);
        if (!t) continue;
        progress = true;
        execute_one(s.source_id, *t, batch);
      }
      if (!progress) throw ProtocolError("scheduler stalled with queued tasks");
    }
  };

  auto run_batch_threaded = [&](std::uint32_t batch) {
    const unsigned hw = std::thread::hardware_concurrency();
    const unsigned n_threads =
        std::max(1u, std::min({hw == 0 ? 4u : hw, 8u, cfg.n_workers}));
    std::atomic<std::uint32_t> in_flight{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::string err;
    auto loop = [&](unsigned tid) {
      try {
        for (;;) {
          bool any = false;
          for (std::uint32_t w = tid; w < specs.size(); w += n_threads) {
            const SourceId id = specs[w].source_id;
            in_flight.fetch_add(1);
            const auto t = fabric.claim_task(id);
            if (t) {
              execute_one(id, *t, batch);
              any = true;
            }
            in_flight.fetch_sub(1);
            if (failed.load()) return;
          }
          if (!any) {
            if (fabric.queue_length() == 0 && in_flight.load() == 0) return;
            std::this_thread::yield();
          }
        }
      } catch (...) {
        {
          std::lock_guard lock(err_mu);
          if (err.empty()) {
            try {
              throw;
            } catch (const std::exception& e) {
              err = e.what();
            } catch (...) {
              err = "unknown error";
            }
          }
        }
        failed.store(true);
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (unsigned tid = 0; tid < n_threads; ++tid) threads.emplace_back(loop, tid);
    for (std::thread& th : threads) th.join();
    if (failed.load()) throw ProtocolError("worker thread failed: " + err);
  };

  // Each batch issues a fresh sample of n_policies client queries against the
  // same worker pool; batch boundaries partition the validated round sequence
  // for the per-batch statistics.
  for (std::uint32_t batch = 0; batch < cfg.n_batches; ++batch) {
    RngStream policy_rng(derive_seed(cfg.master_seed, {tag(StreamTag::policy_sampling), batch}));
    for (std::uint32_t i = 0; i < cfg.n_policies; ++i) {
      Policy p;
      p.itn = policy_rng.uniform01();
      p.irs = policy_rng.uniform01();
      fabric.submit_task(p);
    }
    if (cfg.deterministic) {
      run_batch_deterministic(batch);
    } else {
      run_batch_threaded(batch);
    }
    batch_ends.push_back(round_counter.load());
    if (batch == 0) window_profiles = profiles.snapshot();
  }
  ledger.flush();

  const VerifyResult verdict = ledger.verify();
  if (!verdict.ok) {
    throw ProtocolError("end-of-run chain verification failed at height " +
                        std::to_string(verdict.broken_height) + ": " + verdict.reason);
  }
  const FabricCounts counts = fabric.counts();
  if (counts.queued + counts.running + counts.awaiting_validation != 0) {
    throw ProtocolError("tasks left in flight at end of run");
  }
  if (counts.submitted != counts.committed + counts.invalid_flagged) {
    throw ProtocolError("task conservation violated");
  }

  RunOutput out;
  out.run_dir = run_dir;
  out.counts = counts;
  out.primary_sims = primary_sims.load();
  out.redispatch_sims = redispatch_sims.load();
  out.rounds = round_counter.load();
  out.endorser_recomputes = endorser_recomputes.load();
  out.avg_recomputes_per_sim =
      out.primary_sims
          ? static_cast<double>(out.endorser_recomputes + out.redispatch_sims) / out.primary_sims
          : 0.0;
  out.avg_bits_per_sim_per_endorser_per_dim =
      out.rounds ? static_cast<double>(per_dim_bits.load()) / out.rounds : 0.0;
  out.batch_series = batch_averages(calls, batch_ends);
  out.profiles = profiles.snapshot();
  out.specs = specs;
  out.chain_head = ledger.head_hash();

  std::vector<WindowPoint> window;
  window.reserve(window_profiles.size());
  for (const SourceProfile& p : window_profiles) {
    window.push_back({p.source_id, p.n_calls, p.v_per_call(), p.mean_deviation()});
  }
  const StatsBundle stats = compute_stats(out.batch_series, window, specs, cfg.k_nn, cfg.c);
  out.ks_rows = stats.ks_rows;
  out.detection = stats.detection;

  if (cfg.write_outputs) {
    std::map<SourceId, SourceKind> kinds;
    for (const SourceSpec& s : specs) kinds[s.source_id] = s.kind;

    ExperimentConfig echo = cfg;
    echo.range_lo = tol.range_lo;
    echo.range_hi = tol.range_hi;
    echo.output_dir.clear();  // digest must not depend on where the run lives
    const nlohmann::json config_echo = echo.to_json();
    {
      auto f = open_out(run_dir / "config.json");
      f << config_echo.dump(2) << '\n';
    }

    fabric.write_results_ndjson(run_dir / "results.ndjson");
    fabric.write_task_csv(run_dir / "tasks.csv");

    {
      std::map<SourceId, const SourceBatchSeries*> by_id;
      for (const SourceBatchSeries& s : out.batch_series) by_id[s.source_id] = &s;
      std::map<SourceId, const WindowPoint*> window_by_id;
      for (const WindowPoint& w : window) window_by_id[w.source_id] = &w;
      nlohmann::json sources = nlohmann::json::array();
      for (const SourceProfile& p : out.profiles) {
        nlohmann::json row{{"source_id", p.source_id},
                           {"kind", kind_name(kinds.at(p.source_id))},
                           {"v", p.v},
                           {"n_calls", p.n_calls},
                           {"deviations", p.deviations}};
        const auto it = by_id.find(p.source_id);
        row["per_batch_avg_v"] =
            it == by_id.end() ? std::vector<double>{} : it->second->avg_v;
        row["per_batch_avg_d"] =
            it == by_id.end() ? std::vector<double>{} : it->second->avg_d;
        const WindowPoint& w = *window_by_id.at(p.source_id);
        row["window_n_calls"] = w.n_calls;
        row["window_avg_v"] = w.avg_v;
        row["window_avg_d"] = w.avg_d;
        sources.push_back(std::move(row));
      }
      nlohmann::json doc{{"k_nn", cfg.k_nn},
                         {"c", cfg.c},
                         {"n_batches", cfg.n_batches},
                         {"sources", sources}};
      auto f = open_out(run_dir / "profiles.json");
      f << doc.dump(2) << '\n';
    }

    write_ks_csv(run_dir / "ks_table.csv", out.ks_rows);
    write_detection_csv(run_dir / "detection.csv", cfg.c, out.detection);
    {
      auto f = open_out(run_dir / "cost.csv");
      f << "delta_val,m,avg_recomputes_per_sim,avg_bits_per_sim_per_endorser_per_dim\n";
      f << fmt(cfg.delta_val) << ',' << cfg.m << ',' << fmt(out.avg_recomputes_per_sim) << ','
        << fmt(out.avg_bits_per_sim_per_endorser_per_dim) << '\n';
    }
    write_ecdf_csv(run_dir / "ecdf_valid.csv", window_profiles, kinds, false);
    write_ecdf_csv(run_dir / "ecdf_dev.csv", window_profiles, kinds, true);

    {
      auto f = open_out(run_dir / "rounds.ndjson");
      for (const RoundAudit& a : audits) {
        nlohmann::json j{{"task_id", a.task_id},       {"attempt", a.attempt},
                         {"reporter", a.reporter},     {"endorsers", a.endorsers},
                         {"delta", a.delta},           {"verdict", a.valid ? "valid" : "invalid"},
                         {"bits_sent", a.bits_sent},   {"recomputes", a.recomputes}};
        f << j.dump() << '\n';
      }
    }
    {
      auto f = open_out(run_dir / "events.log");
      for (const std::string& e : fabric.snapshot_events()) f << e << '\n';
    }
    ledger.save(run_dir / "chain.bin");
    out.summary_digest = write_manifest(run_dir, config_echo);
  }
  return out;
}

}  // namespace

void ExperimentConfig::check() const {
  if (n_workers < 2) throw ConfigError("n_workers must be >= 2");
  if (sims_per_worker < 1) throw ConfigError("sims_per_worker must be >= 1");
  if (n_policies < 1) throw ConfigError("n_policies must be >= 1");
  if (n_batches < 1) throw ConfigError("n_batches must be >= 1");
  if (anomalous_fraction < 0.0 || anomalous_fraction > 1.0) {
    throw ConfigError("anomalous_fraction must be in [0,1]");
  }
  if (sigma < 0.0 || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  if (!(delta_val > 0.0)) throw ConfigError("delta_val must be positive");
  if (m < 1) throw ConfigError("m must be >= 1");
  if (m >= static_cast<std::uint64_t>(n_workers) * sims_per_worker) {
    throw ConfigError("m endorsers plus a reporter will not fit the pool");
  }
  if (b0 < 1 || b0 > b_max || b_max > 32) throw ConfigError("need 1 <= b0 <= b_max <= 32");
  if (static_cast<std::uint64_t>(n_policies) >
      static_cast<std::uint64_t>(n_workers) * sims_per_worker) {
    throw ConfigError("n_policies exceeds the source capacity n_workers*sims_per_worker");
  }
  if (k_nn == 0 || k_nn % 2 == 0) throw ConfigError("k_nn must be odd and positive");
  if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  if (block_size < 1) throw ConfigError("block_size must be >= 1");
  if (range_lo.has_value() != range_hi.has_value()) {
    throw ConfigError("range_lo and range_hi must be set together");
  }
  if (range_lo && !(*range_lo < *range_hi)) throw ConfigError("range_lo must be < range_hi");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j{{"n_workers", n_workers},
                   {"sims_per_worker", sims_per_worker},
                   {"n_policies", n_policies},
                   {"anomalous_fraction", anomalous_fraction},
                   {"c", c},
                   {"sigma", sigma},
                   {"delta_val", delta_val},
                   {"m", m},
                   {"b0", b0},
                   {"b_max", b_max},
                   {"n_batches", n_batches},
                   {"k_nn", k_nn},
                   {"max_attempts", max_attempts},
                   {"block_size", block_size},
                   {"master_seed", master_seed},
                   {"surface_id", surface_id},
                   {"output_dir", output_dir},
                   {"deterministic", deterministic}};
  if (range_lo) {
    j["range_lo"] = *range_lo;
    j["range_hi"] = *range_hi;
  }
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "n_workers",  "sims_per_worker", "n_policies", "anomalous_fraction",
      "c",          "sigma",           "delta_val",  "m",
      "b0",         "b_max",           "n_batches",  "k_nn",
      "max_attempts", "block_size",    "master_seed", "surface_id",
      "output_dir", "deterministic",   "range_lo",   "range_hi"};
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ConfigError("unknown config key: " + key);
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("n_workers")) cfg.n_workers = j.at("n_workers").get<std::uint32_t>();
    if (j.contains("sims_per_worker")) {
      cfg.sims_per_worker = j.at("sims_per_worker").get<std::uint32_t>();
    }
    if (j.contains("n_policies")) cfg.n_policies = j.at("n_policies").get<std::uint32_t>();
    if (j.contains("anomalous_fraction")) {
      cfg.anomalous_fraction = j.at("anomalous_fraction").get<double>();
    }
    if (j.contains("c")) cfg.c = j.at("c").get<double>();
    if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
    if (j.contains("delta_val")) cfg.delta_val = j.at("delta_val").get<double>();
    if (j.contains("m")) cfg.m = j.at("m").get<std::uint32_t>();
    if (j.contains("b0")) cfg.b0 = j.at("b0").get<std::uint32_t>();
    if (j.contains("b_max")) cfg.b_max = j.at("b_max").get<std::uint32_t>();
    if (j.contains("n_batches")) cfg.n_batches = j.at("n_batches").get<std::uint32_t>();
    if (j.contains("k_nn")) cfg.k_nn = j.at("k_nn").get<std::uint32_t>();
    if (j.contains("max_attempts")) cfg.max_attempts = j.at("max_attempts").get<std::uint32_t>();
    if (j.contains("block_size")) cfg.block_size = j.at("block_size").get<std::uint32_t>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("surface_id")) cfg.surface_id = j.at("surface_id").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("deterministic")) cfg.deterministic = j.at("deterministic").get<bool>();
    if (j.contains("range_lo")) cfg.range_lo = j.at("range_lo").get<double>();
    if (j.contains("range_hi")) cfg.range_hi = j.at("range_hi").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file: " + file.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

ExperimentConfig ExperimentConfig::full_profile() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::desk_profile() {
  ExperimentConfig cfg;
  cfg.n_workers = 48;
  cfg.sims_per_worker = 5;
  cfg.n_policies = 200;
  cfg.n_batches = 20;
  return cfg;
}

RunOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.check();
  const fs::path run_dir = cfg.output_dir.empty() ? fs::path(".") : fs::path(cfg.output_dir);
  if (cfg.write_outputs) fs::create_directories(run_dir);
  try {
    return run_impl(cfg, run_dir);
  } catch (const std::exception& e) {
    if (cfg.write_outputs) {
      std::ofstream marker(run_dir / "FAILED");
      marker << e.what() << '\n';
    }
    throw;
  }
}

std::vector<BiasPoint> sweep_bias(const ExperimentConfig& cfg, const std::vector<double>& c_list,
                                  std::uint32_t n_seeds) {
  if (c_list.empty() || n_seeds == 0) throw ConfigError("empty bias sweep");
  std::vector<BiasPoint> points;
  points.reserve(c_list.size());
  for (double c : c_list) {
    BiasPoint pt;
    pt.c = c;
    for (std::uint32_t s = 0; s < n_seeds; ++s) {
      ExperimentConfig rc = cfg;
      rc.c = c;
      rc.master_seed = derive_seed(cfg.master_seed, {tag(StreamTag::sweep_run), s});
      rc.write_outputs = false;
      const RunOutput out = run_experiment(rc);
      if (out.detection.false_alarm_pct) pt.false_alarms.push_back(*out.detection.false_alarm_pct);
      if (out.detection.miss_detection_pct) {
        pt.miss_detections.push_back(*out.detection.miss_detection_pct);
      }
    }
    pt.median_false_alarm_pct = median(pt.false_alarms);
    pt.median_miss_detection_pct = median(pt.miss_detections);
    points.push_back(std::move(pt));
  }
  return points;
}

std::vector<CostRow> sweep_cost(const ExperimentConfig& cfg,
                                const std::vector<double>& delta_val_list,
                                const std::vector<std::uint32_t>& m_list, std::uint32_t n_seeds) {
  if (delta_val_list.empty() || m_list.empty() || n_seeds == 0) {
    throw ConfigError("empty cost sweep");
  }
  std::vector<CostRow> rows;
  rows.reserve(delta_val_list.size() * m_list.size());
  for (std::uint32_t m : m_list) {
    for (double dv : delta_val_list) {
      double recompute_sum = 0.0;
      double bits_sum = 0.0;
      for (std::uint32_t s = 0; s < n_seeds; ++s) {
        ExperimentConfig rc = cfg;
        rc.m = m;
        rc.delta_val = dv;
        rc.master_seed = derive_seed(cfg.master_seed, {tag(StreamTag::sweep_run), s});
        rc.write_outputs = false;
        const RunOutput out = run_experiment(rc);
        recompute_sum += out.avg_recomputes_per_sim;
        bits_sum += out.avg_bits_per_sim_per_endorser_per_dim;
      }
      rows.push_back({dv, m, recompute_sum / n_seeds, bits_sum / n_seeds});
    }
  }
  return rows;
}

double analytic_valid_rate(double delta_val, double sigma, std::uint32_t m) {
  if (m < 1) throw ConfigError("m must be >= 1");
  if (sigma == 0.0) return delta_val > 0.0 ? 1.0 : 0.0;
  const double scale = sigma * std::sqrt(2.0 * (1.0 + 1.0 / static_cast<double>(m)));
  return std::erf(delta_val / scale);
}

double tune_delta_val(double target_rate, double sigma, std::uint32_t m) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw ConfigError("target valid rate must be in (0,1)");
  }
  if (m < 1) throw ConfigError("m must be >= 1");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive to tune delta_val");
  double lo = 0.0, hi = 6.0, x = 0.0;
  for (int i = 0; i < 120; ++i) {
    x = 0.5 * (lo + hi);
    (std::erf(x) < target_rate ? lo : hi) = x;
  }
  for (int i = 0; i < 4; ++i) {
    const double err = std::erf(x) - target_rate;
    const double deriv = 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
    if (deriv <= 0.0) break;
    x -= err / deriv;
  }
  return x * sigma * std::sqrt(2.0 * (1.0 + 1.0 / static_cast<double>(m)));
}

DetectReport detect_from_run_dir(const fs::path& run_dir) {
  std::ifstream in(run_dir / "profiles.json");
  if (!in) throw ConfigError("cannot open " + (run_dir / "profiles.json").string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("profiles.json is not valid JSON: " + std::string(e.what()));
  }
  std::vector<SourceBatchSeries> series;
  std::vector<WindowPoint> window;
  std::vector<SourceSpec> specs;
  try {
    const std::uint32_t k_nn = doc.at("k_nn").get<std::uint32_t>();
    const double c = doc.at("c").get<double>();
    for (const auto& row : doc.at("sources")) {
      SourceBatchSeries s;
      s.source_id = row.at("source_id").get<SourceId>();
      s.avg_v = row.at("per_batch_avg_v").get<std::vector<double>>();
      s.avg_d = row.at("per_batch_avg_d").get<std::vector<double>>();
      WindowPoint w;
      w.source_id = s.source_id;
      w.n_calls = row.at("window_n_calls").get<std::uint64_t>();
      w.avg_v = row.at("window_avg_v").get<double>();
      w.avg_d = row.at("window_avg_d").get<double>();
      SourceSpec spec;
      spec.source_id = s.source_id;
      spec.kind = kind_from_name(row.at("kind").get<std::string>());
      series.push_back(std::move(s));
      window.push_back(w);
      specs.push_back(spec);
    }
    const StatsBundle stats = compute_stats(series, window, specs, k_nn, c);
    return {stats.ks_rows, stats.detection, stats.classified};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("profiles.json has an unexpected shape: " + std::string(e.what()));
  }
}

Digest32 manifest_digest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw ConfigError("cannot open " + (run_dir / "manifest.json").string());
  nlohmann::json doc;
  try {
    in >> doc;
    return digest_from_hex(doc.at("summary_digest").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest.json has an unexpected shape: " + std::string(e.what()));
  }
}

void write_bias_csv(const fs::path& file, const std::vector<BiasPoint>& points) {
  auto out = open_out(file);
  out << "c,false_alarm_pct,miss_detection_pct\n";
  for (const BiasPoint& p : points) {
    out << fmt(p.c) << ',' << fmt(p.median_false_alarm_pct) << ','
        << fmt(p.median_miss_detection_pct) << '\n';
  }
}

void write_cost_csv(const fs::path& file, const std::vector<CostRow>& rows) {
  auto out = open_out(file);
  out << "delta_val,m,avg_recomputes_per_sim,avg_bits_per_sim_per_endorser_per_dim\n";
  for (const CostRow& r : rows) {
    out << fmt(r.delta_val) << ',' << r.m << ',' << fmt(r.avg_recomputes_per_sim) << ','
        << fmt(r.avg_bits_per_sim_per_endorser_per_dim) << '\n';
  }
}

}  // namespace trustbench
