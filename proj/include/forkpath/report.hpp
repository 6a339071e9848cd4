#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forkpath/cpd.hpp"
#include "forkpath/pipeline.hpp"
#include "forkpath/survival.hpp"

namespace forkpath::report {

using outcomes::TaskKind;

struct AnalysisConfig {
  series::Metric metric = series::Metric::L2;
  double noise_variance = 0.03;
  cpd::CpdPriors priors;
  cpd::McmcConfig mcmc;
  double epsilon = 0.6;
  double tau_threshold = 0.7;
  double m_quantile = 0.1;
  int histogram_buckets = 10;
  std::vector<double> tau_threshold_grid = {0.5, 0.7, 0.9};
  std::vector<double> m_quantile_grid = {0.05, 0.1, 0.25};
  std::vector<double> epsilon_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> subsample_sizes = {5, 10, 15, 20, 25};
};

void to_json(json& j, const AnalysisConfig& config);
void from_json(const json& j, AnalysisConfig& config);

// One retained (t, w) with its conditional outcome distribution.
struct SiteOutcome {
  std::string token;
  double token_prob = 0.0;       // raw p(x_t = w | prefix)
  outcomes::OutcomeDistribution distribution;
  double distance_to_base = 0.0;  // d(o_{t,w}, o_{t,w*})
};

// Everything the aggregate analyses need about one example.
struct ExampleAnalysis {
  std::string example_id;
  TaskKind task_kind = TaskKind::gsm8k;
  std::size_t length = 0;  // T
  outcomes::OutcomeSpace space;
  std::vector<std::string> base_tokens;
  std::vector<double> base_token_probs;
  std::vector<std::vector<SiteOutcome>> sites;  // per index, includes the base token
  std::vector<outcomes::OutcomeDistribution> o_t;
  std::vector<double> mass_dropped;  // retained-probability shortfall per index
  series::DriftSeries drift;         // y_t before perturbation
  cpd::CpdPosterior posterior;       // fit on the perturbed series
  survival::SurvivalCurve curve;     // at AnalysisConfig::epsilon
  std::optional<pipeline::BaselineTriple> baselines;
};

void to_json(json& j, const ExampleAnalysis& analysis);
void from_json(const json& j, ExampleAnalysis& analysis);

// Builds the full per-example analysis from a sealed store.
ExampleAnalysis analyze_store(const pipeline::SampleStore& store, const AnalysisConfig& config);

// Survival curve recomputed at a different threshold from stored distances.
std::vector<double> hazards_at_epsilon(const ExampleAnalysis& analysis, double epsilon);

struct TaskSummary {
  std::string task;
  std::size_t n_examples = 0;
  double frac_with_change = 0.0;    // estimate_num_changepoints(., q) >= 1
  double mean_final_survival = 0.0;  // mean S(T-1)
};

TaskSummary task_summary(const std::vector<ExampleAnalysis>& analyses, double m_quantile = 0.1);

struct TauHistogram {
  int buckets = 10;
  double threshold = 0.7;
  std::vector<double> fractions;  // per bucket over normalized t
};

TauHistogram tau_histogram(const std::vector<ExampleAnalysis>& analyses, int buckets,
                           double threshold);

struct SweepResult {
  std::vector<std::pair<double, TauHistogram>> tau_histograms;
  // quantile -> distribution of estimated m over examples
  std::vector<std::pair<double, std::map<int, double>>> m_estimates;
  std::vector<std::pair<double, double>> mean_final_survival;  // epsilon -> mean S(T-1)
};

SweepResult threshold_sweep(const std::vector<ExampleAnalysis>& analyses,
                            const std::vector<double>& tau_thresholds,
                            const std::vector<double>& m_quantiles,
                            const std::vector<double>& epsilons, int buckets);

struct Correlation {
  double value = 0.0;
  bool defined = false;
};

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);
// Identical vectors correlate at 1; otherwise zero rank variance on either
// side reports undefined rather than zero.
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);

struct CorrelationReport {
  Correlation log_ptau_vs_logprob;  // Pearson, pooled over tokens
  Correlation log_ptau_vs_logprob_rank;  // Spearman on the same pairs
  std::size_t pooled_points = 0;
  Correlation changes_vs_survival;  // Spearman over examples
  std::vector<std::pair<int, Correlation>> subsample;  // N -> rho vs full-S estimates
};

// Stores are required for the subsample study and must align with analyses.
CorrelationReport correlation_studies(const std::vector<ExampleAnalysis>& analyses,
                                      const std::vector<pipeline::SampleStore>& stores,
                                      const AnalysisConfig& config);

// Writes the per-example bundle: analysis.json plus the machine-readable
// CSV/JSON mirrors of everything the page renders.
void save_analysis_bundle(const std::filesystem::path& example_dir,
                          const ExampleAnalysis& analysis, const AnalysisConfig& config);

ExampleAnalysis load_analysis(const std::filesystem::path& example_dir);

// Renders index.html, summary.csv, sweep tables and one page per example
// into out_dir. Byte-identical across runs for identical inputs.
void render_report(const std::filesystem::path& out_dir,
                   const std::vector<ExampleAnalysis>& analyses,
                   const std::vector<pipeline::SampleStore>& stores, const AnalysisConfig& config);

}  // namespace forkpath::report
