#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trustbench/rng.hpp"

namespace trustbench {

using SourceId = std::uint32_t;
using TaskId = std::uint64_t;

// An intervention mix: coverage fractions for treated nets and indoor
// spraying, a point in [0,1]^2.
struct Policy {
  double itn = 0.0;
  double irs = 0.0;

  bool valid() const;

  // Fixed 6-decimal rendering ("0.250000;0.500000"), the canonical form used
  // for dedup digests and CSV export.
  std::string canonical() const;
};

// d-dimensional simulation output in cost-adjusted reward units.
struct RewardVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool finite() const;
};

enum class SourceKind : std::uint8_t { honest = 0, anomalous = 1 };

// A compute worker. Anomalous workers add a second Gaussian draw whose mean
// is biased by c*sigma*(itn - irs): they favor net distribution over
// spraying, and c scales how hard they push.
struct SourceSpec {
  SourceId source_id = 0;
  SourceKind kind = SourceKind::honest;
  double c = 0.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

// Deterministic reward surface standing in for the real disease simulator.
// evaluate_true is pure: same (surface_id, params, policy) in, same bytes out.
struct GroundTruthModel {
  std::string surface_id = "bilinear-daly-v1";
  std::uint32_t d = 1;
  std::vector<double> params;  // empty -> surface defaults
};

// Registered surfaces:
//   bilinear-daly-v1   params {base, a_itn, a_irs, a_cross}
//                      base*(1 - a_itn*itn - a_irs*irs + a_cross*itn*irs)
//   exp-decay-v1       params {base, k_itn, k_irs}
//                      base*exp(-k_itn*itn - k_irs*irs)
// For d > 1 the scalar surface value is replicated across components.
std::vector<std::string> registered_surfaces();
std::vector<double> default_surface_params(const std::string& surface_id);

RewardVector evaluate_true(const GroundTruthModel& model, const Policy& p);

// evaluate_true(p) plus zero-mean simulation noise with per-dimension
// standard deviation sigma, plus (anomalous only) a draw from
// N(c*sigma*(itn - irs), sigma) per dimension.
RewardVector simulate(const SourceSpec& spec, const GroundTruthModel& model, const Policy& p,
                      RngStream& rng);

// Builds n_workers specs with exactly round(fraction*n_workers) anomalous
// ones, chosen uniformly without replacement. Anomalous specs get bias
// constant c; everyone gets the same sigma. Seeds are left 0 for the caller.
std::vector<SourceSpec> assign_anomalies(std::uint32_t n_workers, double fraction, double c,
                                         double sigma, RngStream& rng);

// Min/max of the surface (first component) over a uniform grid on [0,1]^2.
// Used to size the quantizer range at experiment setup.
struct SurfaceExtrema {
  double min = 0.0;
  double max = 0.0;
};
SurfaceExtrema surface_extrema(const GroundTruthModel& model, int grid_points = 201);

}  // namespace trustbench
