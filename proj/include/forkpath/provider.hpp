#pragma once

#include <atomic>
#include <condition_variable>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "forkpath/core.hpp"

namespace forkpath::provider {

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 1;
  double temperature = 0.0;
  int top_logprobs = 1;
  std::vector<std::string> stop;
  std::optional<uint64_t> seed;
};

void validate(const CompletionRequest& request);
void to_json(json& j, const CompletionRequest& request);
void from_json(const json& j, CompletionRequest& request);

struct CompletionResult {
  std::string text;
  std::vector<TokenEvent> events;
  // Provider returned fewer alternates than requested at some index.
  bool degraded_logprobs = false;
};

void to_json(json& j, const CompletionResult& result);
void from_json(const json& j, CompletionResult& result);

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

void to_json(json& j, const ChatMessage& message);
void from_json(const json& j, ChatMessage& message);

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  // Stable identity mixed into cache keys.
  virtual std::string name() const = 0;
  // Exact continuation enumeration when the backend supports it (scripted
  // trees); returns nullopt for sampled-only backends.
  virtual std::optional<std::vector<std::pair<std::string, double>>> enumerate(
      const std::string& prompt) {
    (void)prompt;
    return std::nullopt;
  }
};

class ExtractionBackend {
 public:
  virtual ~ExtractionBackend() = default;
  virtual std::string extract(const std::vector<ChatMessage>& messages) = 0;
  virtual std::string name() const = 0;
};

// Deterministic table-driven model: a prefix tree over completion text.
// Each node maps the text generated so far to weighted next-token branches;
// a branch equal to `terminal` (or a context with no node) ends the path.
class ScriptedModel {
 public:
  ScriptedModel() = default;
  ScriptedModel(std::map<std::string, std::vector<std::pair<std::string, double>>> nodes,
                std::string terminal);

  static ScriptedModel from_json(const json& j);
  static ScriptedModel from_file(const std::filesystem::path& path);

  const std::vector<std::pair<std::string, double>>* node(const std::string& context) const;
  const std::string& terminal() const { return terminal_; }

  // Longest suffix of `prompt` that is a context reachable from the root.
  // Falls back to the root (empty context).
  std::string resolve_context(const std::string& prompt) const;
  bool is_reachable(const std::string& context) const;

 private:
  void index_reachable();

  std::map<std::string, std::vector<std::pair<std::string, double>>> nodes_;
  std::string terminal_ = "<END>";
  std::set<std::string> reachable_;
  std::set<std::size_t> reachable_lengths_;
};

// All (continuation text, probability) pairs reachable from `prefix`.
// Probabilities multiply along branches and sum to 1.
std::vector<std::pair<std::string, double>> enumerate_paths(const ScriptedModel& model,
                                                            const std::string& prefix);

class ScriptedBackend : public CompletionBackend {
 public:
  explicit ScriptedBackend(ScriptedModel model, uint64_t default_seed = 0)
      : model_(std::move(model)), default_seed_(default_seed) {}

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override { return "scripted"; }
  std::optional<std::vector<std::pair<std::string, double>>> enumerate(
      const std::string& prompt) override;

  const ScriptedModel& model() const { return model_; }

 private:
  ScriptedModel model_;
  uint64_t default_seed_;
};

// Substring-rule extractor for tests: first rule whose needle occurs in the
// joined message contents wins.
class ScriptedExtractor : public ExtractionBackend {
 public:
  ScriptedExtractor(std::vector<std::pair<std::string, std::string>> rules,
                    std::string fallback)
      : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

  static ScriptedExtractor from_json(const json& j);
  static ScriptedExtractor from_file(const std::filesystem::path& path);

  std::string extract(const std::vector<ChatMessage>& messages) override;
  std::string name() const override { return "scripted-extractor"; }

 private:
  std::vector<std::pair<std::string, std::string>> rules_;
  std::string fallback_;
};

struct RetryPolicy {
  int max_attempts = 5;
  double base_delay_seconds = 0.25;
  double max_delay_seconds = 8.0;
  uint64_t jitter_seed = 0;
};

struct ThrottleConfig {
  int max_in_flight = 4;
  // <= 0 disables the budget.
  double tokens_per_minute = 0.0;
};

// Blocking limiter: bounds concurrent requests and enforces a token budget.
class Throttle {
 public:
  explicit Throttle(ThrottleConfig config);
  void acquire(double estimated_tokens);
  void release();

 private:
  ThrottleConfig config_;
  std::mutex mutex_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  double available_tokens_ = 0.0;
  std::chrono::steady_clock::time_point last_refill_;
};

// One file per request hash under `dir`, holding the canonical response.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  std::optional<json> get(const std::string& key) const;
  void put(const std::string& key, const json& response) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// Wraps a backend with the on-disk response cache; `calls_to_inner` exposes
// how many requests actually reached the wrapped backend.
class CachedCompletionBackend : public CompletionBackend {
 public:
  CachedCompletionBackend(std::shared_ptr<CompletionBackend> inner, ResponseCache cache);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override;
  std::optional<std::vector<std::pair<std::string, double>>> enumerate(
      const std::string& prompt) override;

  long calls_to_inner() const { return calls_.load(); }

 private:
  std::shared_ptr<CompletionBackend> inner_;
  ResponseCache cache_;
  std::atomic<long> calls_{0};
  std::mutex mutex_;
};

class CachedExtractionBackend : public ExtractionBackend {
 public:
  CachedExtractionBackend(std::shared_ptr<ExtractionBackend> inner, ResponseCache cache);

  std::string extract(const std::vector<ChatMessage>& messages) override;
  std::string name() const override;

  long calls_to_inner() const { return calls_.load(); }

 private:
  std::shared_ptr<ExtractionBackend> inner_;
  ResponseCache cache_;
  std::atomic<long> calls_{0};
  std::mutex mutex_;
};

std::string request_cache_key(const std::string& backend_name, const CompletionRequest& request);
std::string extraction_cache_key(const std::string& backend_name,
                                 const std::vector<ChatMessage>& messages);

struct HttpBackendConfig {
  std::string base_url;             // e.g. https://api.example.com
  std::string completions_path = "/v1/completions";
  std::string chat_path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "FORKPATH_PROVIDER_KEY";
  RetryPolicy retry;
  ThrottleConfig throttle;
};

void to_json(json& j, const HttpBackendConfig& config);
void from_json(const json& j, HttpBackendConfig& config);

// OpenAI-style completions endpoint with top-K logprobs.
class HttpCompletionBackend : public CompletionBackend {
 public:
  explicit HttpCompletionBackend(HttpBackendConfig config);
  CompletionResult complete(const CompletionRequest& request) override;
  std::string name() const override;

 private:
  HttpBackendConfig config_;
  std::shared_ptr<Throttle> throttle_;
};

// OpenAI-style chat completions endpoint used for answer extraction.
class HttpChatExtractor : public ExtractionBackend {
 public:
  explicit HttpChatExtractor(HttpBackendConfig config);
  std::string extract(const std::vector<ChatMessage>& messages) override;
  std::string name() const override;

 private:
  HttpBackendConfig config_;
  std::shared_ptr<Throttle> throttle_;
};

// POSTs `body` as JSON and parses the JSON reply, retrying transient
// failures (transport errors, 429, 5xx) with exponential backoff + jitter.
json http_post_json(const HttpBackendConfig& config, const std::string& path,
                    const json& body, const std::string& api_key, Throttle* throttle,
                    double estimated_tokens);

}  // namespace forkpath::provider
