#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "trustbench/fabric.hpp"
#include "trustbench/profiles.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/surrogate.hpp"

namespace trustbench {

struct ToleranceConfig {
  double delta_val = 1.0;   // validation tolerance on the endorsement deviation
  std::uint32_t m = 4;      // endorser set size
  std::uint32_t b0 = 4;     // initial quantizer bits per dimension
  std::uint32_t b_max = 32; // refinement cap per dimension
  double range_lo = 0.0;    // quantizer range, shared by all dimensions
  double range_hi = 1.0;

  void check() const;  // throws ConfigError on violations
};

// Per-dimension uniform bin indices at a given bit depth. Refinement appends
// one bit per dimension; deeper bins always nest inside shallower ones.
struct QuantizedReport {
  std::vector<std::uint32_t> indices;
  std::uint32_t bits_per_dim = 0;
  bool clamped = false;
  std::vector<std::uint8_t> trail;  // refinement bits, d per step, oldest first

  std::vector<std::uint8_t> encode() const;  // canonical bytes for the result store
};

QuantizedReport quantize(const RewardVector& value, std::uint32_t bits_per_dim,
                         const ToleranceConfig& cfg);

// Bin midpoints at the report's current depth.
RewardVector reconstruct(const QuantizedReport& report, const ToleranceConfig& cfg);

// One more bit per dimension, computed from the full-precision value the
// reporter holds. Throws ProtocolError at the b_max cap.
QuantizedReport refine(const QuantizedReport& report, const RewardVector& value,
                       const ToleranceConfig& cfg);

// Euclidean distance between the reported vector and the componentwise mean
// of the endorser recomputations. Throws ProtocolError on empty input or
// dimension mismatch.
double endorsement_deviation(const RewardVector& reported,
                             const std::vector<RewardVector>& endorser_values);

// Uniform m-subset of pool minus the reporter, ascending id order.
// Throws ProtocolError when fewer than m eligible sources remain.
std::vector<SourceId> select_endorsers(SourceId reporter, const std::vector<SourceId>& pool,
                                       std::uint32_t m, RngStream& rng);

struct EndorsementRound {
  TaskId task_id = 0;
  std::uint32_t attempt = 0;
  SourceId reporter = 0;
  RewardVector reported;  // reconstruction at the depth the verdict was reached
  std::vector<SourceId> endorsers;
  std::vector<RewardVector> endorser_values;
  double delta = 0.0;  // deviation of the final reconstruction
  bool valid = false;
  std::uint32_t bits_sent = 0;   // total bits the reporter transmitted
  std::uint32_t recomputes = 0;  // endorser simulate calls, = m
  std::uint32_t refinements = 0;
};

// Successive-refinement tolerance test. Starting from the b0-bit report,
// each step compares the deviation of the current reconstruction against
// delta_val with a reconstruction-error margin e = (w/2)*sqrt(d); verdicts
// are only issued once conclusive, one extra bit per dimension otherwise,
// and at b_max the tie breaks by deviation <= delta_val.
EndorsementRound validate_with_refinement(const ResultRecord& record,
                                          const std::vector<RewardVector>& endorser_values,
                                          const ToleranceConfig& cfg);

// Applies one round to every participant (endorsers plus reporter): V moves
// by -1 on valid, +1 on invalid, the deviation is recorded, calls increment.
void update_profiles(const EndorsementRound& round, ProfileStore& profiles);

// Per-endorser simulation stream factory; the orchestrator derives one
// stream per (task, attempt, endorser) so replays are schedule-independent.
using EndorserStreamFactory = std::function<RngStream(SourceId)>;

class ValidationEngine {
 public:
  ValidationEngine(GroundTruthModel model, ToleranceConfig cfg, std::vector<SourceSpec> sources,
                   LogicalClock& clock, TxSink sink);

  const ToleranceConfig& config() const { return cfg_; }

  // Full round for one posted result: selects endorsers, has each endorser
  // recompute the task's policy once, runs the refinement protocol, updates
  // profiles, emits EndorsementRecorded and Verdict events, then commits or
  // redispatches the task. Returns nullopt (and logs an operator event) when
  // the pool cannot seat m endorsers.
  std::optional<EndorsementRound> run_validation(const ResultRecord& record,
                                                 const std::vector<SourceId>& pool,
                                                 RngStream& selection_rng,
                                                 const EndorserStreamFactory& endorser_stream,
                                                 ProfileStore& profiles, TaskFabric& fabric);

 private:
  GroundTruthModel model_;
  ToleranceConfig cfg_;
  std::unordered_map<SourceId, SourceSpec> sources_;
  LogicalClock& clock_;
  TxSink sink_;
};

}  // namespace trustbench
