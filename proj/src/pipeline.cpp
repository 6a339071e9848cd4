#include "forkpath/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "forkpath/rng.hpp"
#include "forkpath/util.hpp"

namespace forkpath::pipeline {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t sample_seed(uint64_t run_seed, bool baseline, std::size_t t, const std::string& token,
                     int sample_index) {
  uint64_t h = mix_seed(run_seed, baseline ? 0xba5e11e5ULL : 0xf0c4ULL);
  h = mix_seed(h, static_cast<uint64_t>(t));
  h = mix_seed(h, fnv1a(token));
  return mix_seed(h, static_cast<uint64_t>(sample_index));
}

bool is_baseline_site(const ForkSite& site) { return site.token.empty(); }

std::string strip_ws(const std::string& s) {
  const char* ws = " \t\n\r\f\v";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<int> parse_percent(const std::string& text) {
  std::string s = strip_ws(text);
  if (!s.empty() && s.back() == '%') {
    s.pop_back();
    s = strip_ws(s);
  }
  if (s.empty() || s.size() > 3) return std::nullopt;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  int value = std::stoi(s);
  if (value > 100) return std::nullopt;
  return value;
}

BasePath decode_base_path(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                          provider::CompletionBackend& backend) {
  if (prompt.text.empty()) throw PreconditionError("decode_base_path: empty prompt");
  validate(config);

  provider::CompletionRequest request;
  request.prompt = prompt.text;
  request.max_tokens = config.max_tokens;
  request.temperature = config.base_temperature;
  request.top_logprobs = config.k_max;
  request.stop = config.stop;
  request.seed = mix_seed(config.seed, fnv1a("base_path"));

  auto result = backend.complete(request);
  if (result.events.empty()) {
    throw Error("decode_base_path: model produced an empty completion");
  }

  BasePath base;
  base.prompt_id = prompt.id;
  base.prompt_text = prompt.text;
  base.events = std::move(result.events);
  for (auto& e : base.events) ensure_realized_alternate(e);
  base.decode_params = {config.base_temperature, config.max_tokens, config.seed};
  validate(base);
  return base;
}

std::vector<ForkSite> select_fork_sites(const BasePath& base, const RunConfig& config) {
  std::vector<ForkSite> out;
  for (std::size_t t = 0; t < base.events.size(); ++t) {
    const auto& event = base.events[t];
    std::vector<ForkSite> candidates;
    std::set<std::string> seen;
    ForkSite base_site{t, event.token, std::min(1.0, std::exp(event.logprob))};
    for (const auto& [token, lp] : event.top_alternates) {
      if (!seen.insert(token).second) continue;  // alternates sorted desc, first wins
      double p = std::min(1.0, std::exp(lp));
      if (token == event.token) base_site.token_prob = p;
      if (p >= config.p_min || token == event.token) {
        candidates.push_back({t, token, p});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const ForkSite& a, const ForkSite& b) {
      if (a.token_prob != b.token_prob) return a.token_prob > b.token_prob;
      return a.token < b.token;
    });
    if (static_cast<int>(candidates.size()) > config.k_max) {
      bool base_kept = false;
      for (int i = 0; i < config.k_max; ++i) {
        if (candidates[i].token == event.token) {
          base_kept = true;
          break;
        }
      }
      candidates.resize(config.k_max);
      if (!base_kept) {
        candidates.back() = base_site;
        std::sort(candidates.begin(), candidates.end(), [](const ForkSite& a, const ForkSite& b) {
          if (a.token_prob != b.token_prob) return a.token_prob > b.token_prob;
          return a.token < b.token;
        });
      }
    }
    out.insert(out.end(), candidates.begin(), candidates.end());
  }
  return out;
}

std::vector<SampleRecord> resample_site(const BasePath& base, const ForkSite& site,
                                        const RunConfig& config,
                                        provider::CompletionBackend& backend) {
  bool baseline = is_baseline_site(site);
  if (site.token_index >= base.length()) {
    throw PreconditionError("resample_site: index " + std::to_string(site.token_index) +
                            " outside base path");
  }
  std::string context = base.prompt_text;
  for (std::size_t i = 0; i < site.token_index; ++i) context += base.events[i].token;
  if (!baseline) context += site.token;

  int batch = baseline ? config.full_resamples : config.samples_per_site;
  std::vector<SampleRecord> records;

  if (config.exhaustive) {
    if (auto leaves = backend.enumerate(context)) {
      if (static_cast<int>(leaves->size()) > batch) {
        throw Error("resample_site: " + std::to_string(leaves->size()) +
                    " continuations exceed the per-site sample budget; raise samples_per_site");
      }
      int index = 1;
      for (const auto& [text, prob] : *leaves) {
        SampleRecord record;
        record.site = site;
        record.completion_text = text;
        record.completion_logprob = std::log(prob);
        record.sample_index = index++;
        records.push_back(std::move(record));
      }
      return records;
    }
  }

  for (int s = 1; s <= batch; ++s) {
    provider::CompletionRequest request;
    request.prompt = context;
    request.max_tokens = config.max_tokens;
    request.temperature = config.resample_temperature;
    request.top_logprobs = 1;
    request.stop = config.stop;
    request.seed = sample_seed(config.seed, baseline, site.token_index, site.token, s);
    auto result = backend.complete(request);

    SampleRecord record;
    record.site = site;
    record.completion_text = result.text;
    double logprob = 0.0;
    for (const auto& e : result.events) logprob += e.logprob;
    record.completion_logprob = std::min(0.0, logprob);
    record.sample_index = s;
    records.push_back(std::move(record));
  }
  return records;
}

BaselineProbeResults run_baseline_probes(const tasks::PreparedPrompt& prompt, const BasePath& base,
                                         const RunConfig& config,
                                         provider::CompletionBackend& backend) {
  BaselineProbeResults out;
  std::string answer_probe = prompt.text + base.completion_text() + "\nTherefore, the answer is: ";

  provider::CompletionRequest request;
  request.prompt = answer_probe;
  request.max_tokens = config.probe_max_tokens;
  request.temperature = 0.0;
  request.top_logprobs = config.k_max;
  request.stop = config.stop;
  request.seed = mix_seed(config.seed, fnv1a("answer_probe"));
  auto answer = backend.complete(request);

  if (!answer.events.empty()) {
    for (const auto& [token, lp] : answer.events.front().top_alternates) {
      out.answer_logits[token] = std::exp(lp);
    }
  }
  out.greedy_answer_text = answer.text;
  out.greedy_answer_label = outcomes::cleanse_answer(config.task_kind, answer.text);

  request.prompt = answer_probe + answer.text + "\nPercent confidence in final answer: ";
  request.top_logprobs = 1;
  request.seed = mix_seed(config.seed, fnv1a("confidence_probe"));
  auto confidence = backend.complete(request);
  out.verbalized_raw = confidence.text;
  out.verbalized_percent = parse_percent(confidence.text);
  return out;
}

std::string full_qa_text(const tasks::PreparedPrompt& prompt, const BasePath& base,
                         const SampleRecord& record) {
  std::string text = prompt.text;
  if (is_baseline_site(record.site)) return text + record.completion_text;
  for (std::size_t i = 0; i < record.site.token_index && i < base.length(); ++i) {
    text += base.events[i].token;
  }
  text += record.site.token;
  text += record.completion_text;
  return text;
}

// ---------------------------------------------------------------------------
// Stages

SampleStore stage_decode(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                         provider::CompletionBackend& backend,
                         const std::filesystem::path& store_path) {
  SampleStore store = load_store(store_path);
  if (!store.base_path) {
    StoreWriter writer(store_path);
    store.run_config = config;
    store.base_path = decode_base_path(prompt, config, backend);
    writer.append_base(config, *store.base_path);
  }
  return store;
}

namespace {

std::string record_key(const SampleRecord& record, bool baseline) {
  return (baseline ? "b|" : "s|") + std::to_string(record.site.token_index) + "|" +
         record.site.token + "|" + std::to_string(record.sample_index);
}

}  // namespace

SampleStore stage_fork(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                       provider::CompletionBackend& backend,
                       const std::filesystem::path& store_path, int jobs) {
  SampleStore store = stage_decode(prompt, config, backend, store_path);
  StoreWriter writer(store_path);
  const BasePath& base = *store.base_path;
  const RunConfig& cfg = store.run_config;

  std::set<std::string> have;
  std::map<std::pair<std::size_t, std::string>, int> per_site_counts;
  for (const auto& r : store.records) {
    have.insert(record_key(r, false));
    per_site_counts[{r.site.token_index, r.site.token}]++;
  }
  for (const auto& r : store.baseline_records) {
    have.insert(record_key(r, true));
    per_site_counts[{r.site.token_index, r.site.token}]++;
  }

  std::vector<ForkSite> work = select_fork_sites(base, cfg);
  if (cfg.full_resamples > 0) work.push_back(ForkSite{0, "", 1.0});

  std::mutex store_mutex;
  try {
    parallel_for(work.size(), jobs, [&](std::size_t i) {
      const ForkSite& site = work[i];
      bool baseline = is_baseline_site(site);
      int want = baseline ? cfg.full_resamples : cfg.samples_per_site;
      int existing = 0;
      {
        std::lock_guard<std::mutex> lock(store_mutex);
        auto it = per_site_counts.find({site.token_index, site.token});
        if (it != per_site_counts.end()) existing = it->second;
      }
      if (cfg.exhaustive ? existing > 0 : existing >= want) return;

      auto records = resample_site(base, site, cfg, backend);
      std::lock_guard<std::mutex> lock(store_mutex);
      for (auto& record : records) {
        std::string key = record_key(record, baseline);
        if (!have.insert(key).second) continue;
        writer.append_sample(record, baseline);
        (baseline ? store.baseline_records : store.records).push_back(std::move(record));
      }
    });

    if (!store.baseline_probe_results) {
      store.baseline_probe_results = run_baseline_probes(prompt, base, cfg, backend);
      writer.append_probe(*store.baseline_probe_results);
    }
  } catch (const ProviderUnavailableError& e) {
    throw AbortedRunError(std::string("fork stage aborted; partial store retained: ") + e.what());
  }
  return store;
}

SampleStore stage_extract(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                          provider::ExtractionBackend& extractor,
                          const std::filesystem::path& store_path, int jobs) {
  (void)config;
  SampleStore store = load_store(store_path);
  if (!store.base_path) throw PreconditionError("stage_extract: store has no base path");
  StoreWriter writer(store_path);
  const RunConfig& cfg = store.run_config;

  std::vector<std::pair<SampleRecord*, bool>> todo;
  for (auto& r : store.records) {
    if (!r.outcome_label) todo.emplace_back(&r, false);
  }
  for (auto& r : store.baseline_records) {
    if (!r.outcome_label) todo.emplace_back(&r, true);
  }

  const auto& tmpl = cfg.template_for(cfg.task_kind);
  try {
    parallel_for(todo.size(), jobs, [&](std::size_t i) {
      auto [record, baseline] = todo[i];
      std::string qa = full_qa_text(prompt, *store.base_path, *record);
      auto messages =
          outcomes::instantiate_template(tmpl, qa, prompt.ending_1, prompt.ending_2);
      std::string reply = extractor.extract(messages);
      record->outcome_label = outcomes::cleanse_answer(cfg.task_kind, reply);
      writer.append_sample(*record, baseline);
    });
  } catch (const ProviderUnavailableError& e) {
    throw AbortedRunError(std::string("extract stage aborted; partial store retained: ") +
                          e.what());
  }

  if (!todo.empty() || !store.sealed()) seal_store(store, writer);
  return store;
}

SampleStore run_forking_analysis(const tasks::PreparedPrompt& prompt, const RunConfig& config,
                                 provider::CompletionBackend& backend,
                                 provider::ExtractionBackend& extractor,
                                 const std::filesystem::path& store_path, int jobs) {
  stage_fork(prompt, config, backend, store_path, jobs);
  return stage_extract(prompt, config, extractor, store_path, jobs);
}

BaselineTriple static_baselines(const SampleStore& store) {
  if (!store.base_path) throw PreconditionError("static_baselines: store has no base path");
  if (store.baseline_records.empty()) {
    throw EmptyStoreError("static_baselines: no baseline re-samples in store");
  }
  if (!store.baseline_probe_results) {
    throw PreconditionError("static_baselines: probe results missing");
  }

  BaselineTriple out;
  double n = static_cast<double>(store.baseline_records.size());
  for (const auto& r : store.baseline_records) {
    if (!r.outcome_label) throw PreconditionError("static_baselines: unlabeled baseline record");
    out.resample_histogram[*r.outcome_label] += 1.0 / n;
  }
  out.answer_logits = store.baseline_probe_results->answer_logits;
  if (store.baseline_probe_results->verbalized_percent) {
    double c = static_cast<double>(*store.baseline_probe_results->verbalized_percent) / 100.0;
    out.verbalized[store.baseline_probe_results->greedy_answer_label] += c;
    out.verbalized[outcomes::OutcomeSpace::kOther] += 1.0 - c;
    out.verbalized_valid = true;
  }
  return out;
}

}  // namespace forkpath::pipeline
