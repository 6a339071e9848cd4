#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "forkpath/provider.hpp"
#include "forkpath/tasks.hpp"

namespace forkpath::pipeline {

using outcomes::TaskKind;
using outcomes::WeightingMode;

struct RunConfig {
  TaskKind task_kind = TaskKind::gsm8k;
  int k_max = 10;                 // alternates retained per index
  double p_min = 0.05;            // minimum alternate probability
  int samples_per_site = 30;      // S
  int full_resamples = 300;       // N, baseline re-samples from t = 0
  double base_temperature = 0.0;  // greedy base path
  double resample_temperature = 1.0;
  int max_tokens = 512;
  int probe_max_tokens = 12;
  std::vector<std::string> stop;
  uint64_t seed = 0;
  WeightingMode weighting = WeightingMode::self_normalized;
  // Enumerate every continuation instead of sampling, when the backend can.
  bool exhaustive = false;
  std::map<TaskKind, outcomes::ExtractionTemplate> extraction_templates;

  const outcomes::ExtractionTemplate& template_for(TaskKind kind) const;
};

void validate(const RunConfig& config);
void to_json(json& j, const RunConfig& config);
void from_json(const json& j, RunConfig& config);

// Results of the two App-C answer probes appended to the base path.
struct BaselineProbeResults {
  std::map<std::string, double> answer_logits;  // first-token distribution
  std::string greedy_answer_text;
  std::string greedy_answer_label;
  std::string verbalized_raw;
  std::optional<int> verbalized_percent;  // 0..100 when parseable
};

void to_json(json& j, const BaselineProbeResults& probe);
void from_json(const json& j, BaselineProbeResults& probe);

struct SampleStore {
  RunConfig run_config;
  std::optional<BasePath> base_path;
  std::vector<SampleRecord> records;           // fork-site samples
  std::vector<SampleRecord> baseline_records;  // N full re-samples (site.w == "")
  std::optional<BaselineProbeResults> baseline_probe_results;
  std::string store_digest;  // set once sealed

  bool sealed() const { return !store_digest.empty(); }
  std::vector<SampleRecord> records_at(const ForkSite& site) const;
};

// Order-invariant content hash over the effective records.
std::string compute_digest(const SampleStore& store);

// Append-only JSONL journal. Sample lines may be superseded by later lines
// with the same (site, sample index) key, which is how extraction fills
// labels without rewriting history.
class StoreWriter {
 public:
  explicit StoreWriter(std::filesystem::path path);
  void append_base(const RunConfig& config, const BasePath& base);
  void append_sample(const SampleRecord& record, bool baseline);
  void append_probe(const BaselineProbeResults& probe);
  void append_manifest(const std::string& digest, std::size_t record_count);

 private:
  void append_line(const json& j);
  std::filesystem::path path_;
  std::mutex mutex_;
};

SampleStore load_store(const std::filesystem::path& path);

// Digest + manifest line. The store is complete after this.
void seal_store(SampleStore& store, StoreWriter& writer);

// ---------------------------------------------------------------------------
// Pipeline stages

BasePath decode_base_path(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                          provider::CompletionBackend& backend);

// Per index: retained alternates with probability >= p_min, capped at k_max,
// sorted by descending probability. The base token is always retained.
std::vector<ForkSite> select_fork_sites(const BasePath& base, const RunConfig& config);

std::vector<SampleRecord> resample_site(const BasePath& base, const ForkSite& site,
                                        const RunConfig& config,
                                        provider::CompletionBackend& backend);

BaselineProbeResults run_baseline_probes(const tasks::PreparedPrompt& prompt, const BasePath& base,
                                         const RunConfig& config,
                                         provider::CompletionBackend& backend);

// The prompt text a sample's extraction sees: question, base prefix, forced
// token, sampled continuation.
std::string full_qa_text(const tasks::PreparedPrompt& prompt, const BasePath& base,
                         const SampleRecord& record);

// Resumable stages; each loads the journal at store_path, fills in whatever
// is missing, and returns the updated store.
SampleStore stage_decode(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                         provider::CompletionBackend& backend,
                         const std::filesystem::path& store_path);
SampleStore stage_fork(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                       provider::CompletionBackend& backend,
                       const std::filesystem::path& store_path, int jobs = 1);
// Labels every unlabeled record and seals the store.
SampleStore stage_extract(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                          provider::ExtractionBackend& extractor,
                          const std::filesystem::path& store_path, int jobs = 1);

// decode + fork + extract + seal.
SampleStore run_forking_analysis(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                                 provider::CompletionBackend& backend,
                                 provider::ExtractionBackend& extractor,
                                 const std::filesystem::path& store_path, int jobs = 1);

// The three static uncertainty baselines, assembled from a completed store:
// (1) label histogram of the N baseline re-samples, (2) answer-probe logit
// distribution, (3) verbalized confidence mapped onto the greedy answer.
struct BaselineTriple {
  std::map<std::string, double> resample_histogram;
  std::map<std::string, double> answer_logits;
  std::map<std::string, double> verbalized;
  bool verbalized_valid = false;
};

BaselineTriple static_baselines(const SampleStore& store);

// "NN" or "NN%" with NN an integer 0..100; anything else is invalid.
std::optional<int> parse_percent(const std::string& text);

}  // namespace forkpath::pipeline
