#pragma once

#include <cstdint>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "trustbench/surrogate.hpp"

namespace trustbench {

// Validation bookkeeping for one source: V moves -1 on every valid round the
// source touches (as reporter or endorser) and +1 on every invalid one;
// deviations collects the delta of each such round; n_calls counts them.
struct SourceProfile {
  SourceId source_id = 0;
  std::int64_t v = 0;
  std::uint64_t n_calls = 0;
  std::vector<double> deviations;

  double v_per_call() const { return n_calls ? static_cast<double>(v) / n_calls : 0.0; }
  double mean_deviation() const;
};

class ProfileStore {
 public:
  void register_source(SourceId id);
  bool has(SourceId id) const;

  // One validation round outcome for one participant.
  void apply(SourceId id, bool valid, double delta);

  SourceProfile get(SourceId id) const;
  std::vector<SourceProfile> snapshot() const;  // ascending source_id

 private:
  std::unordered_map<SourceId, SourceProfile> map_;
  mutable std::mutex mu_;
};

}  // namespace trustbench
