#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trustbench/errors.hpp"
#include "trustbench/rng.hpp"
#include "trustbench/stats.hpp"
#include "trustbench/surrogate.hpp"

using namespace trustbench;

namespace {

// Straight double loop over the pooled points, no two-pointer walk.
double brute_force_ks_stat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  double best = 0.0;
  for (const double x : pooled) {
    const double fa =
        std::count_if(a.begin(), a.end(), [&](double v) { return v <= x; }) /
        static_cast<double>(a.size());
    const double fb =
        std::count_if(b.begin(), b.end(), [&](double v) { return v <= x; }) /
        static_cast<double>(b.size());
    best = std::max(best, std::abs(fa - fb));
  }
  return best;
}

// Plain alternating Kolmogorov series, independent of the library's
// branch-switched evaluation.
double direct_kolmogorov_q(double z) {
  if (z <= 0.0) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 400; ++j) {
    const double term = std::exp(-2.0 * j * j * z * z);
    sum += (j % 2 == 1) ? term : -term;
  }
  return std::min(1.0, std::max(0.0, 2.0 * sum));
}

Pmf pmf_on(const std::vector<double>& edges, std::vector<double> masses) {
  return Pmf{edges, std::move(masses)};
}

std::vector<double> random_masses(std::size_t bins, RngStream& rng) {
  std::vector<double> m(bins);
  double total = 0.0;
  for (auto& v : m) {
    v = rng.uniform01() + 1e-9;
    total += v;
  }
  for (auto& v : m) v /= total;
  return m;
}

}  // namespace

TEST_CASE("batch averages replay a hand-worked log") {
  std::vector<RoundCall> calls{
      {1, 0, true, 0.2}, {1, 1, false, 1.0}, {2, 1, false, 1.0},
      {2, 2, true, 0.3}, {1, 5, true, 0.4},
  };
  const std::vector<std::uint64_t> batch_ends{2, 4, 6};
  const auto series = batch_averages(calls, batch_ends);
  REQUIRE(series.size() == 2);

  CHECK(series[0].source_id == 1);
  REQUIRE(series[0].avg_v.size() == 2);  // absent from batch 1
  CHECK(series[0].avg_v[0] == doctest::Approx(0.0));          // (-1 + 1) / 2
  CHECK(series[0].avg_d[0] == doctest::Approx(0.6));          // (0.2 + 1.0) / 2
  CHECK(series[0].avg_v[1] == doctest::Approx(-1.0));
  CHECK(series[0].avg_d[1] == doctest::Approx(0.4));

  CHECK(series[1].source_id == 2);
  REQUIRE(series[1].avg_v.size() == 2);  // absent from batch 2
  CHECK(series[1].avg_v[0] == doctest::Approx(1.0));
  CHECK(series[1].avg_d[0] == doctest::Approx(1.0));
  CHECK(series[1].avg_v[1] == doctest::Approx(-1.0));
  CHECK(series[1].avg_d[1] == doctest::Approx(0.3));
}

TEST_CASE("batch averages validate the partition") {
  CHECK_THROWS_AS(batch_averages({{1, 0, true, 0.1}}, {}), ConfigError);
  CHECK_THROWS_AS(batch_averages({{1, 0, true, 0.1}}, {4, 2}), ConfigError);
  CHECK_THROWS_AS(batch_averages({{1, 9, true, 0.1}}, {4}), ConfigError);
  CHECK(batch_averages({}, {4}).empty());
}

TEST_CASE("average validation statistic stays inside [-1, 1]") {
  RngStream rng(500);
  std::vector<RoundCall> calls;
  for (std::uint64_t r = 0; r < 600; ++r) {
    calls.push_back({static_cast<SourceId>(1 + rng.below(7)), r, rng.below(2) == 0,
                     std::abs(rng.normal())});
  }
  const auto series = batch_averages(calls, {200, 400, 600});
  for (const auto& s : series) {
    for (double v : s.avg_v) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    for (double d : s.avg_d) CHECK(d >= 0.0);
    CHECK(s.avg_v.size() == s.avg_d.size());
  }
}

TEST_CASE("uniform_edges spans the range evenly") {
  const auto edges = uniform_edges(-1.0, 1.0, 4);
  REQUIRE(edges.size() == 5);
  CHECK(edges.front() == doctest::Approx(-1.0));
  CHECK(edges[2] == doctest::Approx(0.0));
  CHECK(edges.back() == doctest::Approx(1.0));
  CHECK_THROWS_AS(uniform_edges(1.0, 1.0, 4), ConfigError);
  CHECK_THROWS_AS(uniform_edges(0.0, 1.0, 0), ConfigError);
}

TEST_CASE("pmf estimation puts mass where the samples are") {
  const auto edges = uniform_edges(0.0, 1.0, 4);
  const auto single = estimate_pmf({0.6}, edges);
  REQUIRE(single.masses.size() == 4);
  CHECK(single.masses[2] == doctest::Approx(1.0));

  const auto quarters = estimate_pmf({0.1, 0.35, 0.6, 0.85}, edges);
  for (double m : quarters.masses) CHECK(m == doctest::Approx(0.25));

  // Outliers clamp to the end bins rather than vanishing.
  const auto clamped = estimate_pmf({-5.0, 9.0}, edges);
  CHECK(clamped.masses.front() == doctest::Approx(0.5));
  CHECK(clamped.masses.back() == doctest::Approx(0.5));

  CHECK_THROWS_AS(estimate_pmf({}, edges), ConfigError);

  double total = 0.0;
  for (double m : quarters.masses) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pmf of gaussian samples approximates the bin integrals") {
  RngStream rng(501);
  const int n = 20000;
  std::vector<double> samples(n);
  for (auto& s : samples) s = rng.normal();
  const auto edges = uniform_edges(-4.0, 4.0, 64);
  const auto pmf = estimate_pmf(samples, edges);
  for (std::size_t i = 0; i < 64; ++i) {
    const double a = edges[i], b = edges[i + 1];
    const double want =
        0.5 * (std::erf(b / std::sqrt(2.0)) - std::erf(a / std::sqrt(2.0)));
    const double se = std::sqrt(std::max(want * (1 - want), 1e-12) / n);
    CHECK(std::abs(pmf.masses[i] - want) < 5 * se + 1e-4);
  }
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3.0, 1.0, 2.0, 5.0, 4.0}, 50.0) == doctest::Approx(3.0));
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 50.0) == doctest::Approx(2.5));
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 0.0) == doctest::Approx(1.0));
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 100.0) == doctest::Approx(4.0));
  CHECK(percentile({10.0}, 99.5) == doctest::Approx(10.0));
  CHECK(percentile({0.0, 1.0}, 75.0) == doctest::Approx(0.75));
  CHECK_THROWS_AS(percentile({}, 50.0), ConfigError);
}

TEST_CASE("kolmogorov survival function matches published values") {
  CHECK(kolmogorov_q(0.0) == doctest::Approx(1.0));
  CHECK(kolmogorov_q(-1.0) == doctest::Approx(1.0));
  CHECK(kolmogorov_q(0.5) == doctest::Approx(0.9639452436).epsilon(1e-8));
  CHECK(kolmogorov_q(1.0) == doctest::Approx(0.2699996717).epsilon(1e-8));
  CHECK(kolmogorov_q(2.0) == doctest::Approx(0.0006709252).epsilon(1e-6));
}

TEST_CASE("kolmogorov survival agrees with the direct series everywhere") {
  for (double z = 0.25; z <= 3.0; z += 0.05) {
    CHECK(kolmogorov_q(z) == doctest::Approx(direct_kolmogorov_q(z)).epsilon(1e-9));
  }
  // Continuity across the internal branch switch.
  CHECK(std::abs(kolmogorov_q(1.18 - 1e-9) - kolmogorov_q(1.18 + 1e-9)) < 1e-8);
  double prev = 1.0;
  for (double z = 0.05; z <= 3.0; z += 0.01) {
    const double q = kolmogorov_q(z);
    CHECK(q <= prev + 1e-12);
    CHECK(q >= 0.0);
    CHECK(q <= 1.0);
    prev = q;
  }
}

TEST_CASE("ks statistic edge cases") {
  const auto same = ecdf_and_ks({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0});
  CHECK(same.statistic == doctest::Approx(0.0));
  CHECK(same.p_value == doctest::Approx(1.0));

  const auto apart = ecdf_and_ks({1.0, 2.0, 3.0}, {4.0, 5.0, 6.0});
  CHECK(apart.statistic == doctest::Approx(1.0));
  CHECK(apart.p_value < 0.2);

  CHECK_THROWS_AS(ecdf_and_ks({}, {1.0}), ConfigError);
  CHECK_THROWS_AS(ecdf_and_ks({1.0}, {}), ConfigError);
}

TEST_CASE("ks statistic matches brute force on random pairs") {
  RngStream rng(502);
  for (int it = 0; it < 60; ++it) {
    const std::size_t na = 5 + rng.below(120);
    const std::size_t nb = 5 + rng.below(120);
    std::vector<double> a(na), b(nb);
    for (auto& v : a) v = rng.normal(0.0, 1.0);
    for (auto& v : b) v = rng.normal(0.3, 1.2);
    if (it % 3 == 0) {
      // Force ties across the two samples.
      for (auto& v : a) v = std::round(v * 4.0) / 4.0;
      for (auto& v : b) v = std::round(v * 4.0) / 4.0;
    }
    const auto got = ecdf_and_ks(a, b);
    const double want = brute_force_ks_stat(a, b);
    CHECK(got.statistic == doctest::Approx(want).epsilon(1e-12));
    CHECK(got.p_value >= 0.0);
    CHECK(got.p_value <= 1.0);
  }
}

TEST_CASE("ks statistic is invariant under strictly increasing transforms") {
  RngStream rng(503);
  std::vector<double> a(80), b(60);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal(0.4, 0.8);
  const auto base = ecdf_and_ks(a, b);
  auto fa = a;
  auto fb = b;
  for (auto& v : fa) v = std::atan(2.0 * v + 1.0);
  for (auto& v : fb) v = std::atan(2.0 * v + 1.0);
  const auto mapped = ecdf_and_ks(fa, fb);
  CHECK(mapped.statistic == base.statistic);
  CHECK(mapped.p_value == base.p_value);
}

TEST_CASE("ecdf_points merges duplicates into step heights") {
  const auto pts = ecdf_points({1.0, 1.0, 2.0});
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].first == doctest::Approx(1.0));
  CHECK(pts[0].second == doctest::Approx(2.0 / 3));
  CHECK(pts[1].first == doctest::Approx(2.0));
  CHECK(pts[1].second == doctest::Approx(1.0));
}

TEST_CASE("tv distance on shared grids") {
  const auto edges = uniform_edges(0.0, 1.0, 2);
  CHECK(tv_distance(pmf_on(edges, {0.5, 0.5}), pmf_on(edges, {0.8, 0.2})) ==
        doctest::Approx(0.3).epsilon(1e-12));
  CHECK(tv_distance(pmf_on(edges, {1.0, 0.0}), pmf_on(edges, {0.0, 1.0})) ==
        doctest::Approx(1.0));
  CHECK(tv_distance(pmf_on(edges, {0.25, 0.75}), pmf_on(edges, {0.25, 0.75})) ==
        doctest::Approx(0.0));

  const auto other = uniform_edges(0.0, 2.0, 2);
  CHECK_THROWS_AS(tv_distance(pmf_on(edges, {0.5, 0.5}), pmf_on(other, {0.5, 0.5})),
                  ConfigError);
}

TEST_CASE("tv distance satisfies the metric axioms on random triples") {
  RngStream rng(504);
  const auto edges = uniform_edges(0.0, 1.0, 8);
  for (int it = 0; it < 10000; ++it) {
    const auto p = pmf_on(edges, random_masses(8, rng));
    const auto q = pmf_on(edges, random_masses(8, rng));
    const auto r = pmf_on(edges, random_masses(8, rng));
    const double pq = tv_distance(p, q);
    const double qp = tv_distance(q, p);
    const double pr = tv_distance(p, r);
    const double qr = tv_distance(q, r);
    CHECK(pq == doctest::Approx(qp).epsilon(1e-14));
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0 + 1e-12);
    CHECK(tv_distance(p, p) == doctest::Approx(0.0));
    CHECK(pq <= pr + qr + 1e-12);
  }
}

TEST_CASE("knn classifier on a hand-built feature set") {
  // Two bins; honest mass concentrates left, anomalous right.
  const auto edges = uniform_edges(0.0, 1.0, 2);
  auto feat = [&](SourceId id, SourceKind truth, double left_v, double left_d) {
    SourceFeatures f;
    f.source_id = id;
    f.truth = truth;
    f.p_v = pmf_on(edges, {left_v, 1.0 - left_v});
    f.p_d = pmf_on(edges, {left_d, 1.0 - left_d});
    return f;
  };
  std::vector<SourceFeatures> features{
      feat(1, SourceKind::honest, 0.9, 0.9),  feat(2, SourceKind::honest, 0.85, 0.95),
      feat(3, SourceKind::honest, 0.95, 0.85), feat(4, SourceKind::honest, 0.9, 0.92),
      feat(5, SourceKind::anomalous, 0.1, 0.15), feat(6, SourceKind::anomalous, 0.12, 0.1),
  };
  const auto predicted = knn_classify(features, 3);
  REQUIRE(predicted.size() == 6);
  for (int i = 0; i < 4; ++i) CHECK(predicted[i] == SourceKind::honest);
  // Each anomalous source sees one anomalous neighbor and two honest ones.
  CHECK(predicted[4] == SourceKind::honest);
  CHECK(predicted[5] == SourceKind::honest);

  const auto tight = knn_classify(features, 1);
  CHECK(tight[4] == SourceKind::anomalous);
  CHECK(tight[5] == SourceKind::anomalous);
}

TEST_CASE("knn prediction is honest under unanimity and validates k") {
  const auto edges = uniform_edges(0.0, 1.0, 2);
  std::vector<SourceFeatures> features;
  RngStream rng(505);
  for (SourceId i = 1; i <= 9; ++i) {
    SourceFeatures f;
    f.source_id = i;
    f.truth = SourceKind::honest;
    f.p_v = pmf_on(edges, random_masses(2, rng));
    f.p_d = pmf_on(edges, random_masses(2, rng));
    features.push_back(f);
  }
  for (auto kind : knn_classify(features, 5)) CHECK(kind == SourceKind::honest);

  CHECK_THROWS_AS(knn_classify(features, 4), ConfigError);
  CHECK_THROWS_AS(knn_classify(features, 0), ConfigError);
  CHECK_THROWS_AS(knn_classify(features, 9), ConfigError);
}

TEST_CASE("knn with k=1 recovers an identical twin's label") {
  const auto edges = uniform_edges(0.0, 1.0, 2);
  std::vector<SourceFeatures> features;
  for (SourceId i = 1; i <= 3; ++i) {
    SourceFeatures f;
    f.source_id = i;
    f.truth = i == 3 ? SourceKind::anomalous : SourceKind::honest;
    f.p_v = pmf_on(edges, {0.7, 0.3});
    f.p_d = pmf_on(edges, {0.6, 0.4});
    if (i == 3) {
      f.p_v = pmf_on(edges, {0.1, 0.9});
      f.p_d = pmf_on(edges, {0.1, 0.9});
    }
    features.push_back(f);
  }
  const auto predicted = knn_classify(features, 1);
  // Sources 1 and 2 are identical twins; 3 is the odd one out and, with
  // leave-one-out, lands on its nearest (honest) neighbors.
  CHECK(predicted[0] == SourceKind::honest);
  CHECK(predicted[1] == SourceKind::honest);
  CHECK(predicted[2] == SourceKind::honest);
}

TEST_CASE("detection metrics count plain percentages") {
  using K = SourceKind;
  const auto perfect = detection_metrics({K::honest, K::anomalous},
                                         {K::honest, K::anomalous});
  CHECK(perfect.false_alarm_pct.value() == doctest::Approx(0.0));
  CHECK(perfect.miss_detection_pct.value() == doctest::Approx(0.0));

  std::vector<K> truth(10, K::honest);
  truth.push_back(K::anomalous);
  const auto blind = detection_metrics(std::vector<K>(11, K::honest), truth);
  CHECK(blind.false_alarm_pct.value() == doctest::Approx(0.0));
  CHECK(blind.miss_detection_pct.value() == doctest::Approx(100.0));

  // 10 honest / 2 anomalous with one false alarm and one miss.
  std::vector<K> t12(10, K::honest);
  t12.insert(t12.end(), {K::anomalous, K::anomalous});
  std::vector<K> p12 = t12;
  p12[0] = K::anomalous;   // false alarm
  p12[10] = K::honest;     // miss
  const auto mixed = detection_metrics(p12, t12);
  CHECK(mixed.false_alarm_pct.value() == doctest::Approx(10.0));
  CHECK(mixed.miss_detection_pct.value() == doctest::Approx(50.0));

  const auto no_anomalous =
      detection_metrics({K::honest, K::anomalous}, {K::honest, K::honest});
  CHECK(no_anomalous.false_alarm_pct.has_value());
  CHECK_FALSE(no_anomalous.miss_detection_pct.has_value());

  CHECK_THROWS_AS(detection_metrics({K::honest}, {}), ProtocolError);
}

TEST_CASE("default grids pin the validation axis and scale the deviation axis") {
  std::vector<SourceBatchSeries> series;
  SourceBatchSeries s1{1, {-0.5, 0.1}, {0.4, 1.2}};
  SourceBatchSeries s2{2, {-1.0}, {0.8}};
  series.push_back(s1);
  series.push_back(s2);
  const auto grids = default_grids(series);
  REQUIRE(grids.v_edges.size() == 42);
  CHECK(grids.v_edges.front() == doctest::Approx(-1.0));
  CHECK(grids.v_edges.back() == doctest::Approx(1.0));
  REQUIRE(grids.d_edges.size() == 65);
  CHECK(grids.d_edges.front() == doctest::Approx(0.0));
  // 99.5th percentile of {0.4, 1.2, 0.8}.
  CHECK(grids.d_edges.back() == doctest::Approx(percentile({0.4, 1.2, 0.8}, 99.5)));
}

TEST_CASE("build_features labels sources and skips empty series") {
  std::vector<SourceBatchSeries> series;
  series.push_back(SourceBatchSeries{1, {-0.8, -0.6}, {0.2, 0.4}});
  series.push_back(SourceBatchSeries{2, {}, {}});
  series.push_back(SourceBatchSeries{3, {0.4}, {1.0}});
  std::vector<SourceSpec> specs{
      {1, SourceKind::honest, 0.0, 1.0, 0},
      {2, SourceKind::honest, 0.0, 1.0, 0},
      {3, SourceKind::anomalous, 10.0, 1.0, 0},
  };
  const auto grids = default_grids(series);
  const auto features = build_features(series, specs, grids);
  REQUIRE(features.size() == 2);
  CHECK(features[0].source_id == 1);
  CHECK(features[0].truth == SourceKind::honest);
  CHECK(features[1].source_id == 3);
  CHECK(features[1].truth == SourceKind::anomalous);

  double mass = 0.0;
  for (double m : features[0].p_v.masses) mass += m;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<SourceSpec> missing{{1, SourceKind::honest, 0.0, 1.0, 0}};
  CHECK_THROWS_AS(build_features(series, missing, grids), ProtocolError);
}
