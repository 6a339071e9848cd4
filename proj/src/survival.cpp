#include "forkpath/survival.hpp"

#include <algorithm>
#include <cmath>

#include "forkpath/util.hpp"

namespace forkpath::survival {

double hazard(const SiteDistributions& at_index, double epsilon, series::Metric metric,
              std::vector<ForkingSiteRecord>* forking, std::size_t token_index) {
  const outcomes::OutcomeDistribution* base = nullptr;
  for (const auto& [token, prob, dist] : at_index.sites) {
    if (token == at_index.base_token) {
      base = &dist;
      break;
    }
  }
  if (base == nullptr) {
    throw MissingSiteError("hazard: base token distribution missing at index " +
                           std::to_string(token_index));
  }
  double h = 0.0;
  for (const auto& [token, prob, dist] : at_index.sites) {
    if (token == at_index.base_token) continue;
    double d = series::distance(dist, *base, metric);
    if (d > epsilon) {
      h += prob;
      if (forking != nullptr) forking->push_back({token_index, token, d});
    }
  }
  return std::min(h, 1.0);
}

std::vector<double> survival_curve(std::span<const double> hazards) {
  std::vector<double> out;
  out.reserve(hazards.size());
  double running = 1.0;
  for (double h : hazards) {
    if (h < 0.0 || h > 1.0 || !std::isfinite(h)) {
      throw InvalidHazardError("survival_curve: hazard outside [0, 1]: " + std::to_string(h));
    }
    running *= 1.0 - h;
    out.push_back(running);
  }
  return out;
}

SurvivalCurve analyze(const std::vector<SiteDistributions>& per_index, double epsilon,
                      series::Metric metric) {
  SurvivalCurve curve;
  curve.epsilon = epsilon;
  curve.metric = metric;
  curve.hazards.reserve(per_index.size());
  for (std::size_t t = 0; t < per_index.size(); ++t) {
    curve.hazards.push_back(hazard(per_index[t], epsilon, metric, &curve.forking_sites, t));
  }
  curve.survival = survival_curve(curve.hazards);
  return curve;
}

std::vector<Flow> parallel_sets_flows(const SiteDistributions& at_t,
                                      const SiteDistributions& at_next, std::size_t t) {
  if (at_t.sites.empty() || at_next.sites.empty()) {
    throw MissingSiteError("parallel_sets_flows: adjacent index missing");
  }
  std::vector<Flow> flows;
  for (const auto* index_sites : {&at_t, &at_next}) {
    std::size_t token_index = index_sites == &at_t ? t : t + 1;
    double total = 0.0;
    for (const auto& [token, prob, dist] : index_sites->sites) total += prob;
    if (total <= 0.0) throw MissingSiteError("parallel_sets_flows: zero retained mass");
    for (const auto& [token, prob, dist] : index_sites->sites) {
      for (std::size_t k = 0; k < dist.space.labels.size(); ++k) {
        double mass = (prob / total) * dist.probs[k];
        if (mass > 0.0) flows.push_back({token_index, token, dist.space.labels[k], mass});
      }
    }
  }
  return flows;
}

json flows_to_json(const std::vector<Flow>& flows) {
  json arr = json::array();
  for (const auto& f : flows) {
    arr.push_back(json{{"t", f.token_index}, {"w", f.token}, {"label", f.label}, {"mass", f.mass}});
  }
  return arr;
}

std::string to_csv(const SurvivalCurve& curve) {
  std::string out = "t,h,S\n";
  for (std::size_t t = 0; t < curve.hazards.size(); ++t) {
    out += std::to_string(t);
    out += ',';
    out += format_double(curve.hazards[t]);
    out += ',';
    out += format_double(curve.survival[t]);
    out += '\n';
  }
  return out;
}

}  // namespace forkpath::survival
