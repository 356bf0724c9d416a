#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "trustbench/surrogate.hpp"

namespace trustbench {

// Normalized histogram on an explicit monotone edge grid.
struct Pmf {
  std::vector<double> bin_edges;  // size = bins + 1
  std::vector<double> masses;     // size = bins, sums to 1
};

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

struct DetectionMetrics {
  // Absent when the respective truth population is empty.
  std::optional<double> false_alarm_pct;
  std::optional<double> miss_detection_pct;
};

// One validation round as seen by one participant (reporter or endorser).
struct RoundCall {
  SourceId source_id = 0;
  std::uint64_t round_index = 0;  // global round sequence number, 0-based
  bool valid = false;
  double delta = 0.0;
};

// Per-source, per-batch averages; batches the source never participated in
// contribute no entry.
struct SourceBatchSeries {
  SourceId source_id = 0;
  std::vector<double> avg_v;  // mean of (-1 valid / +1 invalid) per batch
  std::vector<double> avg_d;  // mean deviation per batch
};

// batch_ends[b] is the exclusive round-index end of batch b; the list must be
// nondecreasing and cover every call. Output is sorted by source_id.
std::vector<SourceBatchSeries> batch_averages(const std::vector<RoundCall>& calls,
                                              const std::vector<std::uint64_t>& batch_ends);

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins);

// Histogram of samples on the grid; values outside the grid clamp into the
// first/last bin. Throws ConfigError on empty samples or a bad grid.
Pmf estimate_pmf(const std::vector<double>& samples, const std::vector<double>& bin_edges);

// Linear-interpolation percentile (pct in [0,100]) of an unsorted sample set.
double percentile(std::vector<double> samples, double pct);

// Survival function of the Kolmogorov distribution, Q(z) = P(K > z).
double kolmogorov_q(double z);

// Two-sample KS: statistic is the max ECDF gap over the pooled points;
// p-value from the asymptotic Kolmogorov distribution at
// statistic * sqrt(n_a*n_b/(n_a+n_b)).
KsResult ecdf_and_ks(std::vector<double> samples_a, std::vector<double> samples_b);

// Sorted (x, ECDF(x)) pairs, one per distinct sample value.
std::vector<std::pair<double, double>> ecdf_points(std::vector<double> samples);

// Half L1 distance between two PMFs on the same grid (ConfigError otherwise).
double tv_distance(const Pmf& p, const Pmf& q);

struct SourceFeatures {
  SourceId source_id = 0;
  SourceKind truth = SourceKind::honest;
  Pmf p_v;  // PMF of per-batch average validation statistic
  Pmf p_d;  // PMF of per-batch average deviation
};

struct FeatureGrids {
  std::vector<double> v_edges;  // [-1, 1], 41 bins
  std::vector<double> d_edges;  // [0, 99.5th percentile of batch avg deviations], 64 bins
};

FeatureGrids default_grids(const std::vector<SourceBatchSeries>& series);

// One feature row per series entry with at least one batch, truth labels
// looked up from specs by source_id.
std::vector<SourceFeatures> build_features(const std::vector<SourceBatchSeries>& series,
                                           const std::vector<SourceSpec>& specs,
                                           const FeatureGrids& grids);

// Leave-one-out k-NN under distance tv(P_V) + tv(P_D); ties in distance break
// toward the smaller source_id, and odd k prevents vote ties. Returns one
// predicted label per feature row, in input order.
std::vector<SourceKind> knn_classify(const std::vector<SourceFeatures>& features,
                                     std::uint32_t k);

DetectionMetrics detection_metrics(const std::vector<SourceKind>& predicted,
                                   const std::vector<SourceKind>& truth);

}  // namespace trustbench
