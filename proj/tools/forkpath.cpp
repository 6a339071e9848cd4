// forkpath: forking-paths analysis toolkit.
//
// Subcommands mirror the pipeline stages: decode the base path, fork and
// re-sample alternates, extract outcome labels, analyze per example, and
// render the aggregate report. cpd-fit runs the change-point model on any
// two-column CSV series.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>

#include "forkpath/pipeline.hpp"
#include "forkpath/report.hpp"
#include "forkpath/util.hpp"

namespace fs = std::filesystem;
using namespace forkpath;

namespace {

struct ToolConfig {
  pipeline::RunConfig run;
  report::AnalysisConfig analysis;
  json backend;    // {"kind": "scripted"|"http", ...}
  json extractor;  // {"kind": "scripted"|"http", ...}
  std::string cache_dir;
  std::string dataset;
};

ToolConfig load_tool_config(const std::string& path) {
  ToolConfig config;
  if (path.empty()) return config;
  json j = json::parse(read_file(path));
  if (j.contains("run")) config.run = j.at("run").get<pipeline::RunConfig>();
  if (j.contains("analysis")) config.analysis = j.at("analysis").get<report::AnalysisConfig>();
  config.backend = j.value("backend", json::object());
  config.extractor = j.value("extractor", json::object());
  config.cache_dir = j.value("cache_dir", std::string());
  config.dataset = j.value("dataset", std::string());
  return config;
}

std::shared_ptr<provider::CompletionBackend> make_backend(const ToolConfig& config) {
  if (config.backend.empty() || !config.backend.contains("kind")) {
    throw PreconditionError("config has no completion backend");
  }
  std::string kind = config.backend.at("kind").get<std::string>();
  std::shared_ptr<provider::CompletionBackend> backend;
  if (kind == "scripted") {
    auto model = provider::ScriptedModel::from_file(
        config.backend.at("model_file").get<std::string>());
    backend = std::make_shared<provider::ScriptedBackend>(std::move(model));
  } else if (kind == "http") {
    backend = std::make_shared<provider::HttpCompletionBackend>(
        config.backend.get<provider::HttpBackendConfig>());
  } else {
    throw PreconditionError("unknown backend kind: " + kind);
  }
  if (!config.cache_dir.empty()) {
    backend = std::make_shared<provider::CachedCompletionBackend>(
        backend, provider::ResponseCache(config.cache_dir));
  }
  return backend;
}

std::shared_ptr<provider::ExtractionBackend> make_extractor(const ToolConfig& config) {
  if (config.extractor.empty() || !config.extractor.contains("kind")) {
    throw PreconditionError("config has no extraction backend");
  }
  std::string kind = config.extractor.at("kind").get<std::string>();
  std::shared_ptr<provider::ExtractionBackend> extractor;
  if (kind == "scripted") {
    extractor = std::make_shared<provider::ScriptedExtractor>(provider::ScriptedExtractor::from_file(
        config.extractor.at("rules_file").get<std::string>()));
  } else if (kind == "http") {
    extractor = std::make_shared<provider::HttpChatExtractor>(
        config.extractor.get<provider::HttpBackendConfig>());
  } else {
    throw PreconditionError("unknown extractor kind: " + kind);
  }
  if (!config.cache_dir.empty()) {
    extractor = std::make_shared<provider::CachedExtractionBackend>(
        extractor, provider::ResponseCache(config.cache_dir));
  }
  return extractor;
}

std::vector<tasks::Example> load_examples(const ToolConfig& config, const std::string& dataset) {
  std::string path = dataset.empty() ? config.dataset : dataset;
  if (path.empty()) throw PreconditionError("no dataset given (--dataset or config)");
  return tasks::load_dataset(path);
}

fs::path store_file(const std::string& store_dir, const std::string& example_id) {
  return fs::path(store_dir) / (example_id + ".jsonl");
}

enum class Stage { decode, fork, extract };

int run_stage(Stage stage, const ToolConfig& config, const std::string& dataset,
              const std::string& store_dir, int jobs) {
  auto examples = load_examples(config, dataset);
  auto backend = make_backend(config);
  std::shared_ptr<provider::ExtractionBackend> extractor;
  if (stage == Stage::extract) extractor = make_extractor(config);

  bool partial = false;
  for (const auto& example : examples) {
    auto prompt = tasks::prepare_prompt(config.run.task_kind, example);
    auto path = store_file(store_dir, example.id);
    try {
      switch (stage) {
        case Stage::decode:
          pipeline::stage_decode(prompt, config.run, *backend, path);
          break;
        case Stage::fork:
          pipeline::stage_fork(prompt, config.run, *backend, path, jobs);
          break;
        case Stage::extract:
          pipeline::stage_extract(prompt, config.run, *extractor, path, jobs);
          break;
      }
      std::cout << example.id << ": ok\n";
    } catch (const AbortedRunError& e) {
      std::cerr << example.id << ": " << e.what() << "\n";
      partial = true;
    }
  }
  return partial ? 2 : 0;
}

std::vector<pipeline::SampleStore> load_stores(const std::string& store_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(store_dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<pipeline::SampleStore> stores;
  for (const auto& f : files) stores.push_back(pipeline::load_store(f));
  return stores;
}

int run_analyze(const ToolConfig& config, const std::string& store_dir, const std::string& out_dir,
                int jobs) {
  auto stores = load_stores(store_dir);
  if (stores.empty()) throw EmptyInputError("no stores found in " + store_dir);
  std::vector<report::ExampleAnalysis> analyses(stores.size());
  parallel_for(stores.size(), jobs, [&](std::size_t i) {
    analyses[i] = report::analyze_store(stores[i], config.analysis);
  });
  for (const auto& a : analyses) {
    report::save_analysis_bundle(fs::path(out_dir) / a.example_id, a, config.analysis);
    std::cout << a.example_id << ": analyzed\n";
  }
  return 0;
}

int run_report(const ToolConfig& config, const std::string& store_dir, const std::string& out_dir,
               int jobs) {
  auto stores = load_stores(store_dir);
  if (stores.empty()) throw EmptyInputError("no stores found in " + store_dir);
  std::vector<report::ExampleAnalysis> analyses(stores.size());
  parallel_for(stores.size(), jobs, [&](std::size_t i) {
    auto bundle = fs::path(out_dir) / stores[i].base_path->prompt_id / "analysis.json";
    if (fs::exists(bundle)) {
      analyses[i] = report::load_analysis(bundle.parent_path());
    } else {
      analyses[i] = report::analyze_store(stores[i], config.analysis);
    }
  });
  report::render_report(out_dir, analyses, stores, config.analysis);
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int run_cpd_fit(const std::string& series_path, const std::string& out_path, int m_max,
                int min_segment, int iterations, int burn_in, int thin, uint64_t seed) {
  auto drift = series::series_from_csv(read_file(series_path), series::Metric::L2);
  cpd::CpdPriors priors;
  priors.m_max = m_max;
  priors.min_segment_length = min_segment;
  cpd::McmcConfig mcmc;
  mcmc.iterations = iterations;
  mcmc.burn_in = burn_in;
  mcmc.thin = thin;
  mcmc.seed = seed;
  auto posterior = cpd::fit(drift, priors, mcmc);
  json out = cpd::posterior_to_json(posterior, priors);
  if (out_path.empty()) {
    std::cout << out.dump(1) << "\n";
  } else {
    write_file(out_path, out.dump(1));
    std::cout << "posterior written to " << out_path << "\n";
  }
  auto decision = cpd::bayes_factor_test(posterior, priors);
  std::cout << "bf=" << decision.bf << " has_change=" << (decision.has_change ? "yes" : "no")
            << " m_estimate=" << cpd::estimate_num_changepoints(posterior) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forking paths analysis toolkit"};
  app.require_subcommand(1);

  std::string config_path, dataset, store_dir = "stores", out_dir = "out", series_path, out_path;
  int jobs = 1;
  uint64_t seed = 0;
  bool seed_set = false;
  int k_max = 0, samples_per_site = 0;
  double p_min = 0.0;

  auto add_common = [&](CLI::App* cmd, bool wants_dataset) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--store", store_dir, "store directory");
    cmd->add_option("--jobs", jobs, "worker pool width");
    cmd->add_option("--seed", seed, "run seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    if (wants_dataset) {
      cmd->add_option("--dataset", dataset, "dataset JSONL");
      cmd->add_option("--k-max", k_max, "max alternates per index");
      cmd->add_option("--p-min", p_min, "minimum alternate probability");
      cmd->add_option("--samples-per-site", samples_per_site, "samples per fork site");
    }
  };

  auto* decode = app.add_subcommand("decode", "decode base paths");
  add_common(decode, true);
  auto* fork = app.add_subcommand("fork", "re-sample alternate continuations");
  add_common(fork, true);
  auto* extract = app.add_subcommand("extract", "extract outcome labels and seal stores");
  add_common(extract, true);
  auto* analyze = app.add_subcommand("analyze", "per-example analysis bundles");
  add_common(analyze, false);
  analyze->add_option("--out", out_dir, "output directory");
  auto* report_cmd = app.add_subcommand("report", "aggregate report");
  add_common(report_cmd, false);
  report_cmd->add_option("--out", out_dir, "output directory");

  auto* cpd_fit = app.add_subcommand("cpd-fit", "fit the change point model to a CSV series");
  int m_max_fit = 3, min_segment = 3, iterations = 10000, burn_in = 2000, thin = 5;
  uint64_t fit_seed = 0;
  cpd_fit->add_option("--series", series_path, "two-column CSV (t,y)")->required();
  cpd_fit->add_option("--out", out_path, "posterior JSON output");
  cpd_fit->add_option("--m-max", m_max_fit, "maximum change points");
  cpd_fit->add_option("--min-segment", min_segment, "minimum segment length");
  cpd_fit->add_option("--iterations", iterations, "MCMC sweeps");
  cpd_fit->add_option("--burn-in", burn_in, "burn-in sweeps");
  cpd_fit->add_option("--thin", thin, "thinning interval");
  cpd_fit->add_option("--seed", fit_seed, "sampler seed");

  CLI11_PARSE(app, argc, argv);

  try {
    ToolConfig config = load_tool_config(config_path);
    if (seed_set) config.run.seed = seed;
    if (k_max > 0) config.run.k_max = k_max;
    if (p_min > 0.0) config.run.p_min = p_min;
    if (samples_per_site > 0) config.run.samples_per_site = samples_per_site;

    if (decode->parsed()) return run_stage(Stage::decode, config, dataset, store_dir, jobs);
    if (fork->parsed()) return run_stage(Stage::fork, config, dataset, store_dir, jobs);
    if (extract->parsed()) return run_stage(Stage::extract, config, dataset, store_dir, jobs);
    if (analyze->parsed()) return run_analyze(config, store_dir, out_dir, jobs);
    if (report_cmd->parsed()) return run_report(config, store_dir, out_dir, jobs);
    if (cpd_fit->parsed()) {
      return run_cpd_fit(series_path, out_path, m_max_fit, min_segment, iterations, burn_in, thin,
                         fit_seed);
    }
  } catch (const AbortedRunError& e) {
    std::cerr << "partial run (resumable): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
