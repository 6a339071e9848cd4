#pragma once

#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "forkpath/series.hpp"

namespace forkpath::survival {

// An alternate token whose conditional outcome distribution sits more than
// epsilon away from the base token's.
struct ForkingSiteRecord {
  std::size_t token_index = 0;
  std::string token;
  double distance = 0.0;
};

struct SurvivalCurve {
  double epsilon = 0.6;
  series::Metric metric = series::Metric::L2;
  std::vector<double> hazards;   // h(t)
  std::vector<double> survival;  // S(t) = prod_{t'<=t} (1 - h(t'))
  std::vector<ForkingSiteRecord> forking_sites;
};

// Everything the hazard needs at one token index: the base token and the
// retained alternates with their raw (unrenormalized) probabilities and
// conditional outcome distributions.
struct SiteDistributions {
  std::string base_token;
  std::vector<std::tuple<std::string, double, outcomes::OutcomeDistribution>> sites;
};

// h(t): total raw probability of alternates w != w* with
// d(o_{t,w}, o_{t,w*}) > epsilon. Low-probability alternates dropped by the
// retention floor can only lower this, a conservative bias.
double hazard(const SiteDistributions& at_index, double epsilon, series::Metric metric,
              std::vector<ForkingSiteRecord>* forking = nullptr, std::size_t token_index = 0);

std::vector<double> survival_curve(std::span<const double> hazards);

SurvivalCurve analyze(const std::vector<SiteDistributions>& per_index, double epsilon,
                      series::Metric metric);

// One parallel-sets row: mass flowing through (token, outcome) at an index.
struct Flow {
  std::size_t token_index = 0;
  std::string token;
  std::string label;
  double mass = 0.0;
};

// Flows for two adjacent indices; masses sum to 1 within each index.
std::vector<Flow> parallel_sets_flows(const SiteDistributions& at_t,
                                      const SiteDistributions& at_next, std::size_t t);

json flows_to_json(const std::vector<Flow>& flows);

// CSV columns: t,h,S
std::string to_csv(const SurvivalCurve& curve);

}  // namespace forkpath::survival
