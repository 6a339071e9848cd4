#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forkpath/series.hpp"

namespace forkpath::cpd {

// Piecewise-linear segment model with conjugate priors:
//   y_t = slope_i * t + intercept_i + noise,  noise ~ N(0, sigma^2)
//   (slope_i, intercept_i) ~ N(0, g * sigma^2 * I)
//   sigma^2 ~ InverseGamma(noise_prior_shape, noise_prior_scale)
//   m ~ pi_m, change times uniform over feasible configurations.
struct CpdPriors {
  int m_max = 3;
  std::vector<double> pi_m;      // prior over m = 0..m_max; empty = uniform
  int min_segment_length = 3;
  double coef_prior_scale = 100.0;  // g
  double noise_prior_shape = 2.0;
  double noise_prior_scale = 0.02;

  std::vector<double> resolved_pi_m() const;
};

void validate(const CpdPriors& priors, std::size_t series_length);
void to_json(json& j, const CpdPriors& priors);
void from_json(const json& j, CpdPriors& priors);

struct McmcConfig {
  int iterations = 10000;
  int burn_in = 2000;
  int thin = 5;
  uint64_t seed = 0;
};

void to_json(json& j, const McmcConfig& config);
void from_json(const json& j, McmcConfig& config);

// One retained draw of the sampler state. Slopes are per unit of t;
// intercepts are the fitted value at the segment's time midpoint (the slope
// regressor is centered within each segment).
struct SegmentDraw {
  int num_changes = 0;
  std::vector<int> change_times;    // sorted, size num_changes
  std::vector<double> slopes;       // size num_changes + 1
  std::vector<double> intercepts;   // size num_changes + 1
  double sigma = 0.0;
};

struct CpdDiagnostics {
  bool converged = true;
  double split_half_tv = 0.0;
  long birth_accepts = 0;
  long birth_proposals = 0;
  long death_accepts = 0;
  long death_proposals = 0;
  long shift_accepts = 0;
  long shift_proposals = 0;
};

struct CpdPosterior {
  std::vector<double> p_m;    // over m = 0..m_max
  std::vector<double> p_tau;  // length T; structurally 0 at t = 0 and t = T-1
  std::vector<SegmentDraw> segment_draws;
  McmcConfig mcmc_config;
  CpdDiagnostics diagnostics;

  std::size_t series_length() const { return p_tau.size(); }
};

json posterior_to_json(const CpdPosterior& posterior, const CpdPriors& priors);
CpdPosterior posterior_from_json(const json& j);

// Gibbs sampler with collapsed segment regressions: the number of changes
// and the change times move against marginal likelihoods with the segment
// coefficients integrated out, then coefficients and noise are redrawn.
CpdPosterior fit(const series::DriftSeries& series, const CpdPriors& priors,
                 const McmcConfig& config);

// Exact posterior by enumerating every feasible segmentation and
// marginalizing coefficients and noise analytically. Guarded to small
// instances; this is the reference the sampler is tested against.
CpdPosterior exact_posterior(const series::DriftSeries& series, const CpdPriors& priors);

struct BayesFactorDecision {
  double bf = 0.0;
  bool has_change = false;
};

// Posterior odds of (m >= 1) against (m = 0), corrected by prior odds.
// Fires at bf > 9.
BayesFactorDecision bayes_factor_test(const CpdPosterior& posterior, const CpdPriors& priors);

// Smallest m whose cumulative posterior mass reaches q (lower credible
// bound; q = .1 matches a 9:1 Bayes factor on m >= estimate).
int estimate_num_changepoints(const CpdPosterior& posterior, double quantile = 0.1);

std::vector<bool> changepoint_mask(const CpdPosterior& posterior, double threshold);

// Number of feasible placements of m ordered change times in a series of
// length T with all segment lengths >= min_len.
double count_configurations(std::size_t length, int num_changes, int min_len);

}  // namespace forkpath::cpd
