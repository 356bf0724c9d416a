#include "trustbench/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <unordered_map>

#include "trustbench/errors.hpp"

namespace trustbench {

std::vector<SourceBatchSeries> batch_averages(const std::vector<RoundCall>& calls,
                                              const std::vector<std::uint64_t>& batch_ends) {
  if (batch_ends.empty()) throw ConfigError("batch partition is empty");
  if (!std::is_sorted(batch_ends.begin(), batch_ends.end())) {
    throw ConfigError("batch boundaries must be nondecreasing");
  }
  struct Acc {
    std::uint64_t count = 0;
    double v_sum = 0.0;
    double d_sum = 0.0;
  };
  std::map<SourceId, std::vector<Acc>> acc;
  const std::size_t n_batches = batch_ends.size();
  for (const RoundCall& call : calls) {
    const auto it = std::upper_bound(batch_ends.begin(), batch_ends.end(), call.round_index);
    if (it == batch_ends.end()) {
      throw ConfigError("round index " + std::to_string(call.round_index) +
                        " beyond the batch partition");
    }
    const std::size_t batch = static_cast<std::size_t>(it - batch_ends.begin());
    auto& rows = acc.try_emplace(call.source_id, n_batches).first->second;
    rows[batch].count += 1;
    rows[batch].v_sum += call.valid ? -1.0 : 1.0;
    rows[batch].d_sum += call.delta;
  }
  std::vector<SourceBatchSeries> out;
  out.reserve(acc.size());
  for (const auto& [id, rows] : acc) {
    SourceBatchSeries s;
    s.source_id = id;
    for (const Acc& a : rows) {
      if (a.count == 0) continue;
      s.avg_v.push_back(a.v_sum / static_cast<double>(a.count));
      s.avg_d.push_back(a.d_sum / static_cast<double>(a.count));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (!(lo < hi) || bins == 0) throw ConfigError("bad histogram grid");
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  }
  return edges;
}

Pmf estimate_pmf(const std::vector<double>& samples, const std::vector<double>& bin_edges) {
  if (samples.empty()) throw ConfigError("cannot estimate a PMF from zero samples");
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end())) {
    throw ConfigError("bad histogram grid");
  }
  Pmf pmf;
  pmf.bin_edges = bin_edges;
  pmf.masses.assign(bin_edges.size() - 1, 0.0);
  const std::size_t last = pmf.masses.size() - 1;
  for (double x : samples) {
    const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), x);
    std::size_t idx = it == bin_edges.begin() ? 0 : static_cast<std::size_t>(it - bin_edges.begin()) - 1;
    idx = std::min(idx, last);
    pmf.masses[idx] += 1.0;
  }
  for (double& m : pmf.masses) m /= static_cast<double>(samples.size());
  return pmf;
}

double percentile(std::vector<double> samples, double pct) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample set");
  pct = std::clamp(pct, 0.0, 100.0);
  std::sort(samples.begin(), samples.end());
  const double h = (static_cast<double>(samples.size()) - 1.0) * pct / 100.0;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= samples.size()) return samples.back();
  const double frac = h - static_cast<double>(lo);
  return samples[lo] + frac * (samples[lo + 1] - samples[lo]);
}

double kolmogorov_q(double z) {
  if (z <= 0.0) return 1.0;
  if (z < 1.18) {
    // Theta-function form, rapidly convergent for small z.
    const double v = std::numbers::pi * std::numbers::pi / (8.0 * z * z);
    double sum = 0.0;
    for (int j = 1; j < 40; j += 2) {
      const double term = std::exp(-static_cast<double>(j) * j * v);
      sum += term;
      if (term < 1e-18 * sum) break;
    }
    const double p = std::sqrt(2.0 * std::numbers::pi) / z * sum;
    return std::clamp(1.0 - p, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j < 200; ++j) {
    const double term = std::exp(-2.0 * static_cast<double>(j) * j * z * z);
    sum += sign * term;
    if (term < 1e-18) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ecdf_and_ks(std::vector<double> samples_a, std::vector<double> samples_b) {
  if (samples_a.empty() || samples_b.empty()) {
    throw ConfigError("KS test needs two nonempty samples");
  }
  std::sort(samples_a.begin(), samples_a.end());
  std::sort(samples_b.begin(), samples_b.end());
  const double na = static_cast<double>(samples_a.size());
  const double nb = static_cast<double>(samples_b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < samples_a.size() || j < samples_b.size()) {
    const double x = (i < samples_a.size() &&
                      (j >= samples_b.size() || samples_a[i] <= samples_b[j]))
                         ? samples_a[i]
                         : samples_b[j];
    while (i < samples_a.size() && samples_a[i] == x) ++i;
    while (j < samples_b.size() && samples_b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double effective = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q(d * effective)};
}

std::vector<std::pair<double, double>> ecdf_points(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<std::pair<double, double>> pts;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    pts.emplace_back(samples[i], static_cast<double>(i + 1) / n);
  }
  return pts;
}

double tv_distance(const Pmf& p, const Pmf& q) {
  if (p.bin_edges != q.bin_edges) throw ConfigError("TV distance needs a shared grid");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.masses.size(); ++i) {
    sum += std::abs(p.masses[i] - q.masses[i]);
  }
  return 0.5 * sum;
}

FeatureGrids default_grids(const std::vector<SourceBatchSeries>& series) {
  std::vector<double> pool;
  for (const SourceBatchSeries& s : series) {
    pool.insert(pool.end(), s.avg_d.begin(), s.avg_d.end());
  }
  if (pool.empty()) throw ConfigError("no batch averages to grid");
  const double cap = std::max(percentile(pool, 99.5), 1e-9);
  FeatureGrids g;
  g.v_edges = uniform_edges(-1.0, 1.0, 41);
  g.d_edges = uniform_edges(0.0, cap, 64);
  return g;
}

std::vector<SourceFeatures> build_features(const std::vector<SourceBatchSeries>& series,
                                           const std::vector<SourceSpec>& specs,
                                           const FeatureGrids& grids) {
  std::unordered_map<SourceId, SourceKind> truth;
  for (const SourceSpec& s : specs) truth.emplace(s.source_id, s.kind);
  std::vector<SourceFeatures> out;
  for (const SourceBatchSeries& s : series) {
    if (s.avg_v.empty()) continue;
    const auto it = truth.find(s.source_id);
    if (it == truth.end()) {
      throw ProtocolError("no source spec for source " + std::to_string(s.source_id));
    }
    SourceFeatures f;
    f.source_id = s.source_id;
    f.truth = it->second;
    f.p_v = estimate_pmf(s.avg_v, grids.v_edges);
    f.p_d = estimate_pmf(s.avg_d, grids.d_edges);
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<SourceKind> knn_classify(const std::vector<SourceFeatures>& features,
                                     std::uint32_t k) {
  const std::size_t n = features.size();
  if (k == 0 || k % 2 == 0) throw ConfigError("k must be odd and positive");
  if (k >= n) throw ConfigError("k must be smaller than the population");
  struct Neighbor {
    double dist;
    SourceId source_id;
    SourceKind kind;
  };
  std::vector<SourceKind> out(n);
  std::vector<Neighbor> nbrs;
  for (std::size_t i = 0; i < n; ++i) {
    nbrs.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = tv_distance(features[i].p_v, features[j].p_v) +
                       tv_distance(features[i].p_d, features[j].p_d);
      nbrs.push_back({d, features[j].source_id, features[j].truth});
    }
    std::sort(nbrs.begin(), nbrs.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      return a.source_id < b.source_id;
    });
    std::uint32_t anomalous_votes = 0;
    for (std::uint32_t v = 0; v < k; ++v) {
      if (nbrs[v].kind == SourceKind::anomalous) ++anomalous_votes;
    }
    out[i] = anomalous_votes * 2 > k ? SourceKind::anomalous : SourceKind::honest;
  }
  return out;
}

DetectionMetrics detection_metrics(const std::vector<SourceKind>& predicted,
                                   const std::vector<SourceKind>& truth) {
  if (predicted.size() != truth.size()) {
    throw ProtocolError("prediction/truth size mismatch");
  }
  std::size_t honest = 0, honest_fa = 0, anomalous = 0, anomalous_md = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == SourceKind::honest) {
      ++honest;
      if (predicted[i] == SourceKind::anomalous) ++honest_fa;
    } else {
      ++anomalous;
      if (predicted[i] == SourceKind::honest) ++anomalous_md;
    }
  }
  DetectionMetrics m;
  if (honest > 0) m.false_alarm_pct = 100.0 * static_cast<double>(honest_fa) / honest;
  if (anomalous > 0) m.miss_detection_pct = 100.0 * static_cast<double>(anomalous_md) / anomalous;
  return m;
}

}  // namespace trustbench
