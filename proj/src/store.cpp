#include <algorithm>
#include <fstream>

#include "forkpath/hash.hpp"
#include "forkpath/pipeline.hpp"
#include "forkpath/util.hpp"

namespace forkpath::pipeline {

const outcomes::ExtractionTemplate& RunConfig::template_for(TaskKind kind) const {
  auto it = extraction_templates.find(kind);
  if (it != extraction_templates.end()) return it->second;
  static std::map<TaskKind, outcomes::ExtractionTemplate> defaults;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto [slot, inserted] = defaults.try_emplace(kind);
  if (inserted) slot->second = outcomes::default_extraction_template(kind);
  return slot->second;
}

void validate(const RunConfig& config) {
  if (config.p_min <= 0.0 || config.p_min >= 1.0) throw Error("RunConfig: p_min outside (0, 1)");
  if (config.k_max < 1) throw Error("RunConfig: k_max < 1");
  if (config.samples_per_site < 1) throw Error("RunConfig: samples_per_site < 1");
  if (config.full_resamples < 0) throw Error("RunConfig: full_resamples < 0");
  if (config.max_tokens < 1) throw Error("RunConfig: max_tokens < 1");
  if (config.base_temperature < 0.0 || config.resample_temperature < 0.0) {
    throw Error("RunConfig: negative temperature");
  }
}

void to_json(json& j, const RunConfig& config) {
  json templates = json::object();
  for (const auto& [kind, tmpl] : config.extraction_templates) {
    templates[outcomes::to_string(kind)] = tmpl.messages;
  }
  j = json{{"task_kind", outcomes::to_string(config.task_kind)},
           {"k_max", config.k_max},
           {"p_min", config.p_min},
           {"samples_per_site", config.samples_per_site},
           {"full_resamples", config.full_resamples},
           {"base_temperature", config.base_temperature},
           {"resample_temperature", config.resample_temperature},
           {"max_tokens", config.max_tokens},
           {"probe_max_tokens", config.probe_max_tokens},
           {"stop", config.stop},
           {"seed", config.seed},
           {"weighting", outcomes::to_string(config.weighting)},
           {"exhaustive", config.exhaustive},
           {"extraction_templates", std::move(templates)}};
}

void from_json(const json& j, RunConfig& config) {
  config.task_kind = outcomes::task_kind_from_string(j.value("task_kind", std::string("gsm8k")));
  config.k_max = j.value("k_max", 10);
  config.p_min = j.value("p_min", 0.05);
  config.samples_per_site = j.value("samples_per_site", 30);
  config.full_resamples = j.value("full_resamples", 300);
  config.base_temperature = j.value("base_temperature", 0.0);
  config.resample_temperature = j.value("resample_temperature", 1.0);
  config.max_tokens = j.value("max_tokens", 512);
  config.probe_max_tokens = j.value("probe_max_tokens", 12);
  config.stop = j.value("stop", std::vector<std::string>{});
  config.seed = j.value("seed", static_cast<uint64_t>(0));
  config.weighting =
      outcomes::weighting_mode_from_string(j.value("weighting", std::string("self_normalized")));
  config.exhaustive = j.value("exhaustive", false);
  config.extraction_templates.clear();
  if (j.contains("extraction_templates")) {
    config.extraction_templates = outcomes::load_extraction_templates(j.at("extraction_templates"));
  }
  validate(config);
}

void to_json(json& j, const BaselineProbeResults& probe) {
  j = json{{"answer_logits", probe.answer_logits},
           {"greedy_answer_text", probe.greedy_answer_text},
           {"greedy_answer_label", probe.greedy_answer_label},
           {"verbalized_raw", probe.verbalized_raw},
           {"verbalized_percent",
            probe.verbalized_percent ? json(*probe.verbalized_percent) : json(nullptr)}};
}

void from_json(const json& j, BaselineProbeResults& probe) {
  probe.answer_logits = j.at("answer_logits").get<std::map<std::string, double>>();
  probe.greedy_answer_text = j.at("greedy_answer_text").get<std::string>();
  probe.greedy_answer_label = j.at("greedy_answer_label").get<std::string>();
  probe.verbalized_raw = j.at("verbalized_raw").get<std::string>();
  const auto& pct = j.at("verbalized_percent");
  probe.verbalized_percent = pct.is_null() ? std::nullopt : std::make_optional(pct.get<int>());
}

std::vector<SampleRecord> SampleStore::records_at(const ForkSite& site) const {
  std::vector<SampleRecord> out;
  for (const auto& r : records) {
    if (r.site.token_index == site.token_index && r.site.token == site.token) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Journal

namespace {

json base_line(const RunConfig& config, const BasePath& base) {
  return json{{"kind", "base_path"}, {"run_config", config}, {"base_path", base}};
}

json sample_line(const SampleRecord& record, bool baseline) {
  return json{{"kind", "sample"}, {"baseline", baseline}, {"record", record}};
}

json probe_line(const BaselineProbeResults& probe) {
  return json{{"kind", "baseline_probe"}, {"probe", probe}};
}

std::string sample_key(const SampleRecord& record, bool baseline) {
  return (baseline ? "b|" : "s|") + std::to_string(record.site.token_index) + "|" +
         record.site.token + "|" + std::to_string(record.sample_index);
}

}  // namespace

StoreWriter::StoreWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void StoreWriter::append_line(const json& j) {
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot append to store: " + path_.string());
  out << j.dump() << '\n';
}

void StoreWriter::append_base(const RunConfig& config, const BasePath& base) {
  append_line(base_line(config, base));
}

void StoreWriter::append_sample(const SampleRecord& record, bool baseline) {
  append_line(sample_line(record, baseline));
}

void StoreWriter::append_probe(const BaselineProbeResults& probe) {
  append_line(probe_line(probe));
}

void StoreWriter::append_manifest(const std::string& digest, std::size_t record_count) {
  append_line(json{{"kind", "manifest"}, {"digest", digest}, {"record_count", record_count}});
}

SampleStore load_store(const std::filesystem::path& path) {
  SampleStore store;
  if (!std::filesystem::exists(path)) return store;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open store: " + path.string());

  // Later lines supersede earlier ones with the same key; a manifest is only
  // honored when it is the final line.
  std::map<std::string, std::pair<SampleRecord, bool>> samples;
  std::vector<std::string> order;
  bool last_was_manifest = false;
  std::string manifest_digest;

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw StoreFormatError("bad store line: " + std::string(e.what()));
    }
    std::string kind = j.value("kind", std::string());
    last_was_manifest = false;
    if (kind == "base_path") {
      store.run_config = j.at("run_config").get<RunConfig>();
      store.base_path = j.at("base_path").get<BasePath>();
    } else if (kind == "sample") {
      bool baseline = j.at("baseline").get<bool>();
      SampleRecord record = j.at("record").get<SampleRecord>();
      std::string key = sample_key(record, baseline);
      if (samples.find(key) == samples.end()) order.push_back(key);
      samples[key] = {std::move(record), baseline};
    } else if (kind == "baseline_probe") {
      store.baseline_probe_results = j.at("probe").get<BaselineProbeResults>();
    } else if (kind == "manifest") {
      manifest_digest = j.value("digest", std::string());
      last_was_manifest = true;
    } else {
      throw StoreFormatError("unknown store line kind: " + kind);
    }
  }

  for (const auto& key : order) {
    const auto& [record, baseline] = samples.at(key);
    (baseline ? store.baseline_records : store.records).push_back(record);
  }
  if (last_was_manifest) store.store_digest = manifest_digest;
  return store;
}

std::string compute_digest(const SampleStore& store) {
  std::vector<std::string> lines;
  if (store.base_path) lines.push_back(base_line(store.run_config, *store.base_path).dump());
  for (const auto& r : store.records) lines.push_back(sample_line(r, false).dump());
  for (const auto& r : store.baseline_records) lines.push_back(sample_line(r, true).dump());
  if (store.baseline_probe_results) {
    lines.push_back(probe_line(*store.baseline_probe_results).dump());
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) {
    joined += l;
    joined += '\n';
  }
  return sha256_hex(joined);
}

void seal_store(SampleStore& store, StoreWriter& writer) {
  store.store_digest = compute_digest(store);
  std::size_t count = (store.base_path ? 1 : 0) + store.records.size() +
                      store.baseline_records.size() + (store.baseline_probe_results ? 1 : 0);
  writer.append_manifest(store.store_digest, count);
}

}  // namespace forkpath::pipeline
