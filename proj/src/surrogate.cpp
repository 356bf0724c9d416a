#include "trustbench/surrogate.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>

#include "trustbench/errors.hpp"

namespace trustbench {
namespace {

struct Surface {
  std::size_t n_params;
  std::vector<double> defaults;
  std::function<double(const std::vector<double>&, const Policy&)> eval;
};

const std::map<std::string, Surface>& surface_table() {
  static const std::map<std::string, Surface> table = {
      {"bilinear-daly-v1",
       {4,
        {100.0, 0.6, 0.5, 0.3},
        [](const std::vector<double>& q, const Policy& p) {
          return q[0] * (1.0 - q[1] * p.itn - q[2] * p.irs + q[3] * p.itn * p.irs);
        }}},
      {"exp-decay-v1",
       {3,
        {100.0, 1.2, 0.9},
        [](const std::vector<double>& q, const Policy& p) {
          return q[0] * std::exp(-q[1] * p.itn - q[2] * p.irs);
        }}},
  };
  return table;
}

const Surface& lookup(const GroundTruthModel& model, std::vector<double>& params_out) {
  auto it = surface_table().find(model.surface_id);
  if (it == surface_table().end()) {
    throw ConfigError("unknown surface_id: " + model.surface_id);
  }
  const Surface& s = it->second;
  params_out = model.params.empty() ? s.defaults : model.params;
  if (params_out.size() != s.n_params) {
    throw ConfigError("surface " + model.surface_id + " expects " +
                      std::to_string(s.n_params) + " params, got " +
                      std::to_string(params_out.size()));
  }
  for (double q : params_out) {
    if (!std::isfinite(q)) throw ConfigError("non-finite surface param");
  }
  if (model.d < 1) throw ConfigError("model dimension must be >= 1");
  return s;
}

}  // namespace

bool Policy::valid() const {
  return std::isfinite(itn) && std::isfinite(irs) && itn >= 0.0 && itn <= 1.0 && irs >= 0.0 &&
         irs <= 1.0;
}

std::string Policy::canonical() const {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f;%.6f", itn, irs);
  return buf;
}

bool RewardVector::finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return !values.empty();
}

std::vector<std::string> registered_surfaces() {
  std::vector<std::string> out;
  for (const auto& [name, _] : surface_table()) out.push_back(name);
  return out;
}

std::vector<double> default_surface_params(const std::string& surface_id) {
  auto it = surface_table().find(surface_id);
  if (it == surface_table().end()) throw ConfigError("unknown surface_id: " + surface_id);
  return it->second.defaults;
}

RewardVector evaluate_true(const GroundTruthModel& model, const Policy& p) {
  std::vector<double> params;
  const Surface& s = lookup(model, params);
  const double base = s.eval(params, p);
  return RewardVector{std::vector<double>(model.d, base)};
}

RewardVector simulate(const SourceSpec& spec, const GroundTruthModel& model, const Policy& p,
                      RngStream& rng) {
  if (spec.sigma < 0.0) throw ConfigError("sigma must be nonnegative");
  RewardVector out = evaluate_true(model, p);
  for (double& v : out.values) v += rng.normal(0.0, spec.sigma);
  if (spec.kind == SourceKind::anomalous) {
    const double bias = spec.c * spec.sigma * (p.itn - p.irs);
    for (double& v : out.values) v += rng.normal(bias, spec.sigma);
  }
  return out;
}

std::vector<SourceSpec> assign_anomalies(std::uint32_t n_workers, double fraction, double c,
                                         double sigma, RngStream& rng) {
  if (n_workers < 1) throw ConfigError("n_workers must be >= 1");
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("fraction must be in [0,1]");

  std::vector<SourceSpec> specs(n_workers);
  for (std::uint32_t i = 0; i < n_workers; ++i) {
    specs[i].source_id = i;
    specs[i].sigma = sigma;
  }

  const auto n_anomalous =
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n_workers)));
  std::vector<SourceId> ids(n_workers);
  for (std::uint32_t i = 0; i < n_workers; ++i) ids[i] = i;
  for (SourceId id : sample_without_replacement(ids, n_anomalous, rng)) {
    specs[id].kind = SourceKind::anomalous;
    specs[id].c = c;
  }
  return specs;
}

SurfaceExtrema surface_extrema(const GroundTruthModel& model, int grid_points) {
  std::vector<double> params;
  const Surface& s = lookup(model, params);
  SurfaceExtrema ext{std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()};
  for (int i = 0; i < grid_points; ++i) {
    for (int j = 0; j < grid_points; ++j) {
      const Policy p{static_cast<double>(i) / (grid_points - 1),
                     static_cast<double>(j) / (grid_points - 1)};
      const double v = s.eval(params, p);
      ext.min = std::min(ext.min, v);
      ext.max = std::max(ext.max, v);
    }
  }
  return ext;
}

}  // namespace trustbench
