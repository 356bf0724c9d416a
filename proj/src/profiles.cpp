#include "trustbench/profiles.hpp"

#include <algorithm>
#include <numeric>

#include "trustbench/errors.hpp"

namespace trustbench {

double SourceProfile::mean_deviation() const {
  if (deviations.empty()) return 0.0;
  return std::accumulate(deviations.begin(), deviations.end(), 0.0) / deviations.size();
}

void ProfileStore::register_source(SourceId id) {
  std::lock_guard lock(mu_);
  auto [it, fresh] = map_.try_emplace(id);
  if (fresh) it->second.source_id = id;
}

bool ProfileStore::has(SourceId id) const {
  std::lock_guard lock(mu_);
  return map_.count(id) > 0;
}

void ProfileStore::apply(SourceId id, bool valid, double delta) {
  std::lock_guard lock(mu_);
  const auto it = map_.find(id);
  if (it == map_.end()) throw ProtocolError("profile update for unknown source " + std::to_string(id));
  SourceProfile& p = it->second;
  p.v += valid ? -1 : 1;
  p.n_calls += 1;
  p.deviations.push_back(delta);
}

SourceProfile ProfileStore::get(SourceId id) const {
  std::lock_guard lock(mu_);
  const auto it = map_.find(id);
  if (it == map_.end()) throw ProtocolError("unknown source " + std::to_string(id));
  return it->second;
}

std::vector<SourceProfile> ProfileStore::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<SourceProfile> out;
  out.reserve(map_.size());
  for (const auto& [id, p] : map_) out.push_back(p);
  std::sort(out.begin(), out.end(),
            [](const SourceProfile& a, const SourceProfile& b) { return a.source_id < b.source_id; });
  return out;
}

}  // namespace trustbench
