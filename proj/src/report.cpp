#include "forkpath/report.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forkpath/rng.hpp"
#include "forkpath/util.hpp"

namespace forkpath::report {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void to_json(json& j, const AnalysisConfig& config) {
  j = json{{"metric", series::to_string(config.metric)},
           {"noise_variance", config.noise_variance},
           {"priors", config.priors},
           {"mcmc", config.mcmc},
           {"epsilon", config.epsilon},
           {"tau_threshold", config.tau_threshold},
           {"m_quantile", config.m_quantile},
           {"histogram_buckets", config.histogram_buckets},
           {"tau_threshold_grid", config.tau_threshold_grid},
           {"m_quantile_grid", config.m_quantile_grid},
           {"epsilon_grid", config.epsilon_grid},
           {"subsample_sizes", config.subsample_sizes}};
}

void from_json(const json& j, AnalysisConfig& config) {
  if (j.contains("metric")) config.metric = series::metric_from_string(j.at("metric"));
  config.noise_variance = j.value("noise_variance", 0.03);
  if (j.contains("priors")) config.priors = j.at("priors").get<cpd::CpdPriors>();
  if (j.contains("mcmc")) config.mcmc = j.at("mcmc").get<cpd::McmcConfig>();
  config.epsilon = j.value("epsilon", 0.6);
  config.tau_threshold = j.value("tau_threshold", 0.7);
  config.m_quantile = j.value("m_quantile", 0.1);
  config.histogram_buckets = j.value("histogram_buckets", 10);
  config.tau_threshold_grid = j.value("tau_threshold_grid", std::vector<double>{0.5, 0.7, 0.9});
  config.m_quantile_grid = j.value("m_quantile_grid", std::vector<double>{0.05, 0.1, 0.25});
  config.epsilon_grid = j.value(
      "epsilon_grid", std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  config.subsample_sizes = j.value("subsample_sizes", std::vector<int>{5, 10, 15, 20, 25});
}

void to_json(json& j, const ExampleAnalysis& analysis) {
  json sites = json::array();
  for (const auto& per_index : analysis.sites) {
    json row = json::array();
    for (const auto& s : per_index) {
      row.push_back(json{{"w", s.token},
                         {"p_w", s.token_prob},
                         {"probs", s.distribution.probs},
                         {"distance_to_base", s.distance_to_base}});
    }
    sites.push_back(std::move(row));
  }
  json o_t = json::array();
  for (const auto& dist : analysis.o_t) o_t.push_back(dist.probs);

  json curve{{"epsilon", analysis.curve.epsilon},
             {"metric", series::to_string(analysis.curve.metric)},
             {"hazards", analysis.curve.hazards},
             {"survival", analysis.curve.survival}};
  json forks = json::array();
  for (const auto& f : analysis.curve.forking_sites) {
    forks.push_back(json{{"t", f.token_index}, {"w", f.token}, {"distance", f.distance}});
  }
  curve["forking_sites"] = std::move(forks);

  json posterior{{"p_m", analysis.posterior.p_m},
                 {"p_tau", analysis.posterior.p_tau},
                 {"mcmc_config", analysis.posterior.mcmc_config},
                 {"converged", analysis.posterior.diagnostics.converged},
                 {"split_half_tv", analysis.posterior.diagnostics.split_half_tv}};

  json baselines = nullptr;
  if (analysis.baselines) {
    baselines = json{{"resample_histogram", analysis.baselines->resample_histogram},
                     {"answer_logits", analysis.baselines->answer_logits},
                     {"verbalized", analysis.baselines->verbalized},
                     {"verbalized_valid", analysis.baselines->verbalized_valid}};
  }

  j = json{{"example_id", analysis.example_id},
           {"task_kind", outcomes::to_string(analysis.task_kind)},
           {"length", analysis.length},
           {"space", analysis.space},
           {"base_tokens", analysis.base_tokens},
           {"base_token_probs", analysis.base_token_probs},
           {"sites", std::move(sites)},
           {"o_t", std::move(o_t)},
           {"mass_dropped", analysis.mass_dropped},
           {"drift", analysis.drift},
           {"posterior", std::move(posterior)},
           {"curve", std::move(curve)},
           {"baselines", std::move(baselines)}};
}

void from_json(const json& j, ExampleAnalysis& analysis) {
  analysis.example_id = j.at("example_id").get<std::string>();
  analysis.task_kind = outcomes::task_kind_from_string(j.at("task_kind").get<std::string>());
  analysis.length = j.at("length").get<std::size_t>();
  analysis.space = j.at("space").get<outcomes::OutcomeSpace>();
  analysis.base_tokens = j.at("base_tokens").get<std::vector<std::string>>();
  analysis.base_token_probs = j.at("base_token_probs").get<std::vector<double>>();

  analysis.sites.clear();
  for (const auto& row : j.at("sites")) {
    std::vector<SiteOutcome> per_index;
    for (const auto& s : row) {
      SiteOutcome out;
      out.token = s.at("w").get<std::string>();
      out.token_prob = s.at("p_w").get<double>();
      out.distribution.space = analysis.space;
      out.distribution.probs = s.at("probs").get<std::vector<double>>();
      out.distance_to_base = s.at("distance_to_base").get<double>();
      per_index.push_back(std::move(out));
    }
    analysis.sites.push_back(std::move(per_index));
  }
  analysis.o_t.clear();
  for (const auto& probs : j.at("o_t")) {
    outcomes::OutcomeDistribution dist;
    dist.space = analysis.space;
    dist.probs = probs.get<std::vector<double>>();
    analysis.o_t.push_back(std::move(dist));
  }
  analysis.mass_dropped = j.at("mass_dropped").get<std::vector<double>>();
  analysis.drift = j.at("drift").get<series::DriftSeries>();

  const auto& posterior = j.at("posterior");
  analysis.posterior.p_m = posterior.at("p_m").get<std::vector<double>>();
  analysis.posterior.p_tau = posterior.at("p_tau").get<std::vector<double>>();
  analysis.posterior.mcmc_config = posterior.at("mcmc_config").get<cpd::McmcConfig>();
  analysis.posterior.diagnostics.converged = posterior.value("converged", true);
  analysis.posterior.diagnostics.split_half_tv = posterior.value("split_half_tv", 0.0);

  const auto& curve = j.at("curve");
  analysis.curve.epsilon = curve.at("epsilon").get<double>();
  analysis.curve.metric = series::metric_from_string(curve.at("metric").get<std::string>());
  analysis.curve.hazards = curve.at("hazards").get<std::vector<double>>();
  analysis.curve.survival = curve.at("survival").get<std::vector<double>>();
  analysis.curve.forking_sites.clear();
  for (const auto& f : curve.at("forking_sites")) {
    analysis.curve.forking_sites.push_back(
        {f.at("t").get<std::size_t>(), f.at("w").get<std::string>(),
         f.at("distance").get<double>()});
  }

  analysis.baselines.reset();
  if (j.contains("baselines") && !j.at("baselines").is_null()) {
    const auto& b = j.at("baselines");
    pipeline::BaselineTriple triple;
    triple.resample_histogram = b.at("resample_histogram").get<std::map<std::string, double>>();
    triple.answer_logits = b.at("answer_logits").get<std::map<std::string, double>>();
    triple.verbalized = b.at("verbalized").get<std::map<std::string, double>>();
    triple.verbalized_valid = b.at("verbalized_valid").get<bool>();
    analysis.baselines = std::move(triple);
  }
}

// ---------------------------------------------------------------------------
// Per-example analysis

ExampleAnalysis analyze_store(const pipeline::SampleStore& store, const AnalysisConfig& config) {
  if (!store.base_path) throw PreconditionError("analyze_store: store has no base path");
  if (!store.sealed()) throw PreconditionError("analyze_store: store is not sealed");
  if (store.records.empty()) throw EmptyStoreError("analyze_store: store has no records");

  const BasePath& base = *store.base_path;
  const std::size_t length = base.length();
  const auto mode = store.run_config.weighting;

  ExampleAnalysis analysis;
  analysis.example_id = base.prompt_id;
  analysis.task_kind = store.run_config.task_kind;
  analysis.length = length;
  analysis.space = outcomes::build_outcome_space(store.records, mode);

  std::map<std::size_t, std::map<std::string, std::vector<SampleRecord>>> grouped;
  for (const auto& r : store.records) {
    grouped[r.site.token_index][r.site.token].push_back(r);
  }

  for (std::size_t t = 0; t < length; ++t) {
    auto it = grouped.find(t);
    if (it == grouped.end()) {
      throw MissingSiteError("analyze_store: no records at index " + std::to_string(t));
    }
    const std::string& base_token = base.events[t].token;

    std::vector<SiteOutcome> per_index;
    std::vector<std::pair<double, outcomes::OutcomeDistribution>> weighted;
    double retained = 0.0;
    for (const auto& [token, records] : it->second) {
      SiteOutcome site;
      site.token = token;
      site.token_prob = records.front().site.token_prob;
      site.distribution = outcomes::outcome_distribution_tw(records, analysis.space, mode);
      retained += site.token_prob;
      weighted.emplace_back(site.token_prob, site.distribution);
      per_index.push_back(std::move(site));
    }
    analysis.o_t.push_back(outcomes::outcome_distribution_t(weighted));
    analysis.mass_dropped.push_back(std::max(0.0, 1.0 - retained));

    const outcomes::OutcomeDistribution* base_dist = nullptr;
    for (const auto& s : per_index) {
      if (s.token == base_token) {
        base_dist = &s.distribution;
        break;
      }
    }
    if (base_dist == nullptr) {
      throw MissingSiteError("analyze_store: base token has no batch at index " +
                             std::to_string(t));
    }
    for (auto& s : per_index) {
      s.distance_to_base = series::distance(s.distribution, *base_dist, config.metric);
    }
    analysis.sites.push_back(std::move(per_index));
    analysis.base_tokens.push_back(base_token);
    analysis.base_token_probs.push_back(std::min(1.0, std::exp(base.events[t].logprob)));
  }

  if (length >= 2) {
    analysis.drift = series::drift_series(analysis.o_t, config.metric);
  } else {
    analysis.drift.metric = config.metric;
    analysis.drift.values = {0.0};
  }

  uint64_t example_seed = mix_seed(store.run_config.seed, fnv1a(analysis.example_id));
  auto perturbed =
      series::perturb(analysis.drift, config.noise_variance, mix_seed(example_seed, 0x9015e));

  int min_len = config.priors.min_segment_length;
  if (length >= 2 * static_cast<std::size_t>(min_len)) {
    cpd::CpdPriors priors = config.priors;
    int feasible = static_cast<int>((length - 1) / static_cast<std::size_t>(min_len));
    if (priors.m_max > feasible) {
      priors.m_max = feasible;
      if (!priors.pi_m.empty()) {
        priors.pi_m.resize(static_cast<std::size_t>(feasible) + 1);
        double total = std::accumulate(priors.pi_m.begin(), priors.pi_m.end(), 0.0);
        if (total <= 0.0) {
          priors.pi_m.clear();
        } else {
          for (double& p : priors.pi_m) p /= total;
        }
      }
    }
    cpd::McmcConfig mcmc = config.mcmc;
    mcmc.seed = mix_seed(example_seed, config.mcmc.seed);
    analysis.posterior = cpd::fit(perturbed, priors, mcmc);
  } else {
    // Too short for any change point under the minimum segment length.
    analysis.posterior.p_m = {1.0};
    analysis.posterior.p_tau.assign(length, 0.0);
    analysis.posterior.mcmc_config = config.mcmc;
    analysis.posterior.diagnostics.converged = true;
  }

  std::vector<survival::SiteDistributions> per_index(length);
  for (std::size_t t = 0; t < length; ++t) {
    per_index[t].base_token = analysis.base_tokens[t];
    for (const auto& s : analysis.sites[t]) {
      per_index[t].sites.emplace_back(s.token, s.token_prob, s.distribution);
    }
  }
  analysis.curve = survival::analyze(per_index, config.epsilon, config.metric);

  try {
    analysis.baselines = pipeline::static_baselines(store);
  } catch (const Error&) {
    analysis.baselines.reset();
  }
  return analysis;
}

std::vector<double> hazards_at_epsilon(const ExampleAnalysis& analysis, double epsilon) {
  std::vector<double> hazards;
  hazards.reserve(analysis.length);
  for (std::size_t t = 0; t < analysis.sites.size(); ++t) {
    double h = 0.0;
    for (const auto& s : analysis.sites[t]) {
      if (s.token == analysis.base_tokens[t]) continue;
      if (s.distance_to_base > epsilon) h += s.token_prob;
    }
    hazards.push_back(std::min(h, 1.0));
  }
  return hazards;
}

// ---------------------------------------------------------------------------
// Aggregates

TaskSummary task_summary(const std::vector<ExampleAnalysis>& analyses, double m_quantile) {
  if (analyses.empty()) throw EmptyInputError("task_summary: no examples");
  TaskSummary summary;
  summary.task = outcomes::to_string(analyses.front().task_kind);
  summary.n_examples = analyses.size();
  double with_change = 0.0;
  double survival_sum = 0.0;
  for (const auto& a : analyses) {
    if (cpd::estimate_num_changepoints(a.posterior, m_quantile) >= 1) with_change += 1.0;
    survival_sum += a.curve.survival.empty() ? 1.0 : a.curve.survival.back();
  }
  summary.frac_with_change = with_change / static_cast<double>(analyses.size());
  summary.mean_final_survival = survival_sum / static_cast<double>(analyses.size());
  return summary;
}

TauHistogram tau_histogram(const std::vector<ExampleAnalysis>& analyses, int buckets,
                           double threshold) {
  if (buckets < 2) throw PreconditionError("tau_histogram: need at least 2 buckets");
  TauHistogram hist;
  hist.buckets = buckets;
  hist.threshold = threshold;
  hist.fractions.assign(buckets, 0.0);
  for (const auto& a : analyses) {
    auto mask = cpd::changepoint_mask(a.posterior, threshold);
    std::vector<bool> hit(buckets, false);
    for (std::size_t t = 0; t < mask.size(); ++t) {
      if (!mask[t]) continue;
      double pos = a.length > 1 ? static_cast<double>(t) / static_cast<double>(a.length - 1) : 0.0;
      int b = std::min(buckets - 1, static_cast<int>(pos * buckets));
      hit[b] = true;
    }
    for (int b = 0; b < buckets; ++b) {
      if (hit[b]) hist.fractions[b] += 1.0;
    }
  }
  double n = std::max<std::size_t>(analyses.size(), 1);
  for (double& f : hist.fractions) f /= n;
  return hist;
}

SweepResult threshold_sweep(const std::vector<ExampleAnalysis>& analyses,
                            const std::vector<double>& tau_thresholds,
                            const std::vector<double>& m_quantiles,
                            const std::vector<double>& epsilons, int buckets) {
  if (tau_thresholds.empty() || m_quantiles.empty() || epsilons.empty()) {
    throw EmptyInputError("threshold_sweep: empty grid");
  }
  SweepResult result;
  for (double threshold : tau_thresholds) {
    result.tau_histograms.emplace_back(threshold, tau_histogram(analyses, buckets, threshold));
  }
  for (double q : m_quantiles) {
    std::map<int, double> dist;
    for (const auto& a : analyses) dist[cpd::estimate_num_changepoints(a.posterior, q)] += 1.0;
    for (auto& [m, count] : dist) count /= std::max<std::size_t>(analyses.size(), 1);
    result.m_estimates.emplace_back(q, std::move(dist));
  }
  for (double epsilon : epsilons) {
    double total = 0.0;
    for (const auto& a : analyses) {
      double s = 1.0;
      for (double h : hazards_at_epsilon(a, epsilon)) s *= 1.0 - h;
      total += s;
    }
    result.mean_final_survival.emplace_back(
        epsilon, analyses.empty() ? 1.0 : total / static_cast<double>(analyses.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Correlations

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return {0.0, false};
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, false};
  return {sxy / std::sqrt(sxx * syy), true};
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return {0.0, false};
  if (x == y) return {1.0, true};
  return pearson(average_ranks(x), average_ranks(y));
}

CorrelationReport correlation_studies(const std::vector<ExampleAnalysis>& analyses,
                                      const std::vector<pipeline::SampleStore>& stores,
                                      const AnalysisConfig& config) {
  if (analyses.size() < 3) throw EmptyInputError("correlation_studies: need at least 3 examples");

  CorrelationReport report;

  // change-point probability vs token logprob, pooled over tokens
  std::vector<double> log_ptau, log_p;
  for (const auto& a : analyses) {
    for (std::size_t t = 0; t < a.posterior.p_tau.size() && t < a.base_token_probs.size(); ++t) {
      if (a.posterior.p_tau[t] > 0.0 && a.base_token_probs[t] > 0.0) {
        log_ptau.push_back(std::log(a.posterior.p_tau[t]));
        log_p.push_back(std::log(a.base_token_probs[t]));
      }
    }
  }
  report.pooled_points = log_ptau.size();
  report.log_ptau_vs_logprob = pearson(log_ptau, log_p);
  report.log_ptau_vs_logprob_rank = spearman(log_ptau, log_p);

  // estimated number of changes vs final survival, over examples
  std::vector<double> m_est, final_s;
  for (const auto& a : analyses) {
    m_est.push_back(static_cast<double>(cpd::estimate_num_changepoints(a.posterior, config.m_quantile)));
    final_s.push_back(a.curve.survival.empty() ? 1.0 : a.curve.survival.back());
  }
  report.changes_vs_survival = spearman(m_est, final_s);

  // robustness of the m estimate to using only the first N samples per site
  if (stores.size() == analyses.size()) {
    for (int n : config.subsample_sizes) {
      std::vector<double> sub_est;
      sub_est.reserve(stores.size());
      for (const auto& store : stores) {
        pipeline::SampleStore reduced = store;
        reduced.records.clear();
        for (const auto& r : store.records) {
          if (r.sample_index <= n) reduced.records.push_back(r);
        }
        reduced.store_digest = pipeline::compute_digest(reduced);
        auto analysis = analyze_store(reduced, config);
        sub_est.push_back(
            static_cast<double>(cpd::estimate_num_changepoints(analysis.posterior, config.m_quantile)));
      }
      report.subsample.emplace_back(n, spearman(m_est, sub_est));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Bundle I/O

void save_analysis_bundle(const std::filesystem::path& example_dir,
                          const ExampleAnalysis& analysis, const AnalysisConfig& config) {
  std::filesystem::create_directories(example_dir);
  write_file(example_dir / "analysis.json", json(analysis).dump(1));

  // o_t.csv: rows = t, columns = labels
  std::string o_csv = "t";
  for (const auto& label : analysis.space.labels) o_csv += "," + csv_escape(label);
  o_csv += "\n";
  for (std::size_t t = 0; t < analysis.o_t.size(); ++t) {
    o_csv += std::to_string(t);
    for (double p : analysis.o_t[t].probs) o_csv += "," + format_double(p);
    o_csv += "\n";
  }
  write_file(example_dir / "o_t.csv", o_csv);

  write_file(example_dir / "y.csv", series::to_csv(analysis.drift));
  write_file(example_dir / "posterior.json",
             cpd::posterior_to_json(analysis.posterior, config.priors).dump(1));
  write_file(example_dir / "survival.csv", survival::to_csv(analysis.curve));

  std::string hz = "t,w,p_w,distance\n";
  for (std::size_t t = 0; t < analysis.sites.size(); ++t) {
    for (const auto& s : analysis.sites[t]) {
      hz += std::to_string(t) + "," + csv_escape(s.token) + "," + format_double(s.token_prob) +
            "," + format_double(s.distance_to_base) + "\n";
    }
  }
  write_file(example_dir / "hazard_inputs.csv", hz);

  // parallel-sets flows at the most likely change index
  if (analysis.length >= 2) {
    std::size_t best = 0;
    for (std::size_t t = 1; t + 1 < analysis.posterior.p_tau.size(); ++t) {
      if (analysis.posterior.p_tau[t] > analysis.posterior.p_tau[best]) best = t;
    }
    std::size_t t0 = std::min(best, analysis.length - 2);
    survival::SiteDistributions at_t, at_next;
    at_t.base_token = analysis.base_tokens[t0];
    for (const auto& s : analysis.sites[t0]) {
      at_t.sites.emplace_back(s.token, s.token_prob, s.distribution);
    }
    at_next.base_token = analysis.base_tokens[t0 + 1];
    for (const auto& s : analysis.sites[t0 + 1]) {
      at_next.sites.emplace_back(s.token, s.token_prob, s.distribution);
    }
    auto flows = survival::parallel_sets_flows(at_t, at_next, t0);
    write_file(example_dir / "flows.json", survival::flows_to_json(flows).dump(1));
  }

  json meta{{"example_id", analysis.example_id},
            {"task_kind", outcomes::to_string(analysis.task_kind)},
            {"length", analysis.length},
            {"labels", analysis.space.labels},
            {"m_estimate", cpd::estimate_num_changepoints(analysis.posterior, config.m_quantile)},
            {"bayes_factor", [&] {
               auto d = cpd::bayes_factor_test(analysis.posterior, config.priors);
               return std::isinf(d.bf) ? json("inf") : json(d.bf);
             }()},
            {"has_change", cpd::bayes_factor_test(analysis.posterior, config.priors).has_change},
            {"final_survival",
             analysis.curve.survival.empty() ? 1.0 : analysis.curve.survival.back()},
            {"epsilon", analysis.curve.epsilon},
            {"converged", analysis.posterior.diagnostics.converged}};
  if (analysis.baselines) {
    meta["baselines"] = json{{"resample_histogram", analysis.baselines->resample_histogram},
                             {"answer_logits", analysis.baselines->answer_logits},
                             {"verbalized", analysis.baselines->verbalized},
                             {"verbalized_valid", analysis.baselines->verbalized_valid}};
  }
  write_file(example_dir / "meta.json", meta.dump(1));
}

ExampleAnalysis load_analysis(const std::filesystem::path& example_dir) {
  return json::parse(read_file(example_dir / "analysis.json")).get<ExampleAnalysis>();
}

}  // namespace forkpath::report
