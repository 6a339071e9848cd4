#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "forkpath/outcomes.hpp"

namespace forkpath::series {

enum class Metric { L2, L1, KL };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

// Univariate semantic-drift series y_t = d(o_0, o_t).
struct DriftSeries {
  std::vector<double> values;
  Metric metric = Metric::L2;
  double noise_variance = 0.03;
  uint64_t seed = 0;

  std::size_t size() const { return values.size(); }

  bool operator==(const DriftSeries&) const = default;
};

void to_json(json& j, const DriftSeries& series);
void from_json(const json& j, DriftSeries& series);

// Distance between two distributions over the same outcome space.
// KL smooths both arguments with a uniform mixture at epsilon = 1e-6.
double distance(const outcomes::OutcomeDistribution& a, const outcomes::OutcomeDistribution& b,
                Metric metric);

DriftSeries drift_series(std::span<const outcomes::OutcomeDistribution> distributions,
                         Metric metric);

// Adds i.i.d. zero-mean Gaussian noise; variance 0 returns the input
// untouched. Applied once, right before change-point fitting.
DriftSeries perturb(const DriftSeries& series, double variance, uint64_t seed);

// Two-column CSV: t,y
std::string to_csv(const DriftSeries& series);
DriftSeries series_from_csv(const std::string& csv, Metric metric);

}  // namespace forkpath::series
