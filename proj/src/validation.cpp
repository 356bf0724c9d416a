#include "trustbench/validation.hpp"

#include <algorithm>
#include <cmath>

#include "trustbench/bytes.hpp"
#include "trustbench/errors.hpp"

namespace trustbench {

void ToleranceConfig::check() const {
  if (!(delta_val > 0.0) || !std::isfinite(delta_val)) {
    throw ConfigError("delta_val must be positive and finite");
  }
  if (m < 1) throw ConfigError("endorser set size m must be >= 1");
  if (b0 < 1 || b0 > b_max) throw ConfigError("need 1 <= b0 <= b_max");
  if (b_max > 32) throw ConfigError("b_max cannot exceed 32");
  if (!(range_lo < range_hi)) throw ConfigError("quantizer range must satisfy lo < hi");
  if (!std::isfinite(range_lo) || !std::isfinite(range_hi)) {
    throw ConfigError("quantizer range must be finite");
  }
}

namespace {

double bin_width(const ToleranceConfig& cfg, std::uint32_t bits) {
  return (cfg.range_hi - cfg.range_lo) / std::ldexp(1.0, static_cast<int>(bits));
}

std::uint32_t max_index(std::uint32_t bits) {
  return bits >= 32 ? 0xFFFFFFFFu : (1u << bits) - 1u;
}

}  // namespace

std::vector<std::uint8_t> QuantizedReport::encode() const {
  ByteWriter w;
  w.u32(bits_per_dim);
  w.u8(clamped ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(indices.size()));
  for (std::uint32_t idx : indices) w.u32(idx);
  w.u32(static_cast<std::uint32_t>(trail.size()));
  for (std::uint8_t b : trail) w.u8(b);
  return w.take();
}

QuantizedReport quantize(const RewardVector& value, std::uint32_t bits_per_dim,
                         const ToleranceConfig& cfg) {
  cfg.check();
  if (bits_per_dim < 1 || bits_per_dim > cfg.b_max) {
    throw ConfigError("bits_per_dim outside [1, b_max]");
  }
  QuantizedReport q;
  q.bits_per_dim = bits_per_dim;
  const double w = bin_width(cfg, bits_per_dim);
  const std::uint32_t top = max_index(bits_per_dim);
  q.indices.reserve(value.dim());
  for (double x : value.values) {
    double clamped_x = x;
    if (x < cfg.range_lo) {
      clamped_x = cfg.range_lo;
      q.clamped = true;
    } else if (x > cfg.range_hi) {
      clamped_x = cfg.range_hi;
      q.clamped = true;
    }
    const double pos = (clamped_x - cfg.range_lo) / w;
    std::uint32_t idx = pos >= static_cast<double>(top) + 1.0
                            ? top
                            : static_cast<std::uint32_t>(std::floor(pos));
    idx = std::min(idx, top);
    q.indices.push_back(idx);
  }
  return q;
}

RewardVector reconstruct(const QuantizedReport& report, const ToleranceConfig& cfg) {
  const double w = bin_width(cfg, report.bits_per_dim);
  RewardVector out;
  out.values.reserve(report.indices.size());
  for (std::uint32_t idx : report.indices) {
    out.values.push_back(cfg.range_lo + (idx + 0.5) * w);
  }
  return out;
}

QuantizedReport refine(const QuantizedReport& report, const RewardVector& value,
                       const ToleranceConfig& cfg) {
  if (report.bits_per_dim >= cfg.b_max) {
    throw ProtocolError("refinement past b_max");
  }
  if (value.dim() != report.indices.size()) {
    throw ProtocolError("refinement value dimension mismatch");
  }
  QuantizedReport next = quantize(value, report.bits_per_dim + 1, cfg);
  next.trail = report.trail;
  for (std::size_t i = 0; i < next.indices.size(); ++i) {
    next.trail.push_back(static_cast<std::uint8_t>(next.indices[i] & 1u));
  }
  return next;
}

double endorsement_deviation(const RewardVector& reported,
                             const std::vector<RewardVector>& endorser_values) {
  if (endorser_values.empty()) throw ProtocolError("no endorser values");
  const std::size_t d = reported.dim();
  if (d == 0) throw ProtocolError("empty reported vector");
  for (const RewardVector& v : endorser_values) {
    if (v.dim() != d) throw ProtocolError("endorser value dimension mismatch");
  }
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    double mean = 0.0;
    for (const RewardVector& v : endorser_values) mean += v.values[k];
    mean /= static_cast<double>(endorser_values.size());
    const double diff = reported.values[k] - mean;
    sum_sq += diff * diff;
  }
  return std::sqrt(sum_sq);
}

std::vector<SourceId> select_endorsers(SourceId reporter, const std::vector<SourceId>& pool,
                                       std::uint32_t m, RngStream& rng) {
  std::vector<SourceId> eligible;
  eligible.reserve(pool.size());
  for (SourceId id : pool) {
    if (id != reporter) eligible.push_back(id);
  }
  if (eligible.size() < m) {
    throw ProtocolError("endorser pool too small: " + std::to_string(eligible.size()) +
                        " eligible, need " + std::to_string(m));
  }
  auto chosen = sample_without_replacement(eligible, m, rng);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

EndorsementRound validate_with_refinement(const ResultRecord& record,
                                          const std::vector<RewardVector>& endorser_values,
                                          const ToleranceConfig& cfg) {
  cfg.check();
  EndorsementRound round;
  round.task_id = record.task_id;
  round.attempt = record.attempt;
  round.reporter = record.reporter;
  round.endorser_values = endorser_values;
  round.recomputes = static_cast<std::uint32_t>(endorser_values.size());

  const double sqrt_d = std::sqrt(static_cast<double>(record.reward.dim()));
  QuantizedReport report = quantize(record.reward, cfg.b0, cfg);
  for (;;) {
    const RewardVector recon = reconstruct(report, cfg);
    const double dev = endorsement_deviation(recon, endorser_values);
    const double e = 0.5 * bin_width(cfg, report.bits_per_dim) * sqrt_d;
    round.reported = recon;
    round.delta = dev;
    if (report.bits_per_dim >= cfg.b_max) {
      round.valid = dev <= cfg.delta_val;
      break;
    }
    if (dev + e <= cfg.delta_val) {
      round.valid = true;
      break;
    }
    if (dev - e > cfg.delta_val) {
      round.valid = false;
      break;
    }
    report = refine(report, record.reward, cfg);
    round.refinements += 1;
  }
  round.bits_sent = report.bits_per_dim * static_cast<std::uint32_t>(record.reward.dim());
  return round;
}

void update_profiles(const EndorsementRound& round, ProfileStore& profiles) {
  profiles.apply(round.reporter, round.valid, round.delta);
  for (SourceId j : round.endorsers) profiles.apply(j, round.valid, round.delta);
}

ValidationEngine::ValidationEngine(GroundTruthModel model, ToleranceConfig cfg,
                                   std::vector<SourceSpec> sources, LogicalClock& clock,
                                   TxSink sink)
    : model_(std::move(model)), cfg_(cfg), clock_(clock), sink_(std::move(sink)) {
  cfg_.check();
  if (!sink_) throw ConfigError("validation engine needs a transaction sink");
  for (SourceSpec& s : sources) sources_.emplace(s.source_id, std::move(s));
}

std::optional<EndorsementRound> ValidationEngine::run_validation(
    const ResultRecord& record, const std::vector<SourceId>& pool, RngStream& selection_rng,
    const EndorserStreamFactory& endorser_stream, ProfileStore& profiles, TaskFabric& fabric) {
  std::vector<SourceId> endorsers;
  try {
    endorsers = select_endorsers(record.reporter, pool, cfg_.m, selection_rng);
  } catch (const ProtocolError& e) {
    fabric.log_event("validation deferred for task " + std::to_string(record.task_id) + ": " +
                     e.what());
    return std::nullopt;
  }

  const Policy policy = fabric.task(record.task_id).policy;
  std::vector<RewardVector> endorser_values;
  endorser_values.reserve(endorsers.size());
  for (SourceId j : endorsers) {
    const auto it = sources_.find(j);
    if (it == sources_.end()) throw ProtocolError("endorser has no source spec: " + std::to_string(j));
    RngStream rng = endorser_stream(j);
    endorser_values.push_back(simulate(it->second, model_, policy, rng));
  }

  EndorsementRound round = validate_with_refinement(record, endorser_values, cfg_);
  round.endorsers = endorsers;
  update_profiles(round, profiles);

  sink_(EndorsementRecordedEvent{round.task_id, round.attempt, round.reporter, round.delta,
                                 round.bits_sent, round.recomputes},
        endorsers, clock_.tick());
  sink_(VerdictEvent{round.task_id, round.attempt, round.reporter, round.valid, round.delta},
        endorsers, clock_.tick());

  if (round.valid) {
    fabric.commit(round.task_id);
  } else {
    fabric.redispatch(round.task_id);
  }
  return round;
}

}  // namespace trustbench
