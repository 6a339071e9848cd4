#include "forkpath/provider.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "forkpath/hash.hpp"
#include "forkpath/rng.hpp"
#include "forkpath/util.hpp"

namespace forkpath::provider {

void validate(const CompletionRequest& request) {
  if (request.max_tokens < 1) throw PreconditionError("CompletionRequest: max_tokens < 1");
  if (request.top_logprobs < 1) throw PreconditionError("CompletionRequest: top_logprobs < 1");
  if (request.temperature < 0.0) throw PreconditionError("CompletionRequest: negative temperature");
}

void to_json(json& j, const CompletionRequest& request) {
  j = json{{"prompt", request.prompt},
           {"max_tokens", request.max_tokens},
           {"temperature", request.temperature},
           {"top_logprobs", request.top_logprobs},
           {"stop", request.stop},
           {"seed", request.seed ? json(*request.seed) : json(nullptr)}};
}

void from_json(const json& j, CompletionRequest& request) {
  request.prompt = j.at("prompt").get<std::string>();
  request.max_tokens = j.at("max_tokens").get<int>();
  request.temperature = j.at("temperature").get<double>();
  request.top_logprobs = j.at("top_logprobs").get<int>();
  request.stop = j.at("stop").get<std::vector<std::string>>();
  const auto& seed = j.at("seed");
  request.seed = seed.is_null() ? std::nullopt : std::make_optional(seed.get<uint64_t>());
}

void to_json(json& j, const CompletionResult& result) {
  j = json{{"text", result.text},
           {"events", result.events},
           {"degraded_logprobs", result.degraded_logprobs}};
}

void from_json(const json& j, CompletionResult& result) {
  result.text = j.at("text").get<std::string>();
  result.events = j.at("events").get<std::vector<TokenEvent>>();
  result.degraded_logprobs = j.at("degraded_logprobs").get<bool>();
}

void to_json(json& j, const ChatMessage& message) {
  j = json{{"role", message.role}, {"content", message.content}};
}

void from_json(const json& j, ChatMessage& message) {
  message.role = j.at("role").get<std::string>();
  message.content = j.at("content").get<std::string>();
}

// ---------------------------------------------------------------------------
// ScriptedModel

ScriptedModel::ScriptedModel(
    std::map<std::string, std::vector<std::pair<std::string, double>>> nodes,
    std::string terminal)
    : nodes_(std::move(nodes)), terminal_(std::move(terminal)) {
  for (const auto& [context, branches] : nodes_) {
    if (branches.empty()) throw Error("ScriptedModel: node with no branches at '" + context + "'");
    double total = 0.0;
    for (const auto& [token, prob] : branches) {
      if (prob <= 0.0) throw Error("ScriptedModel: nonpositive branch probability");
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error("ScriptedModel: branch probabilities at '" + context + "' sum to " +
                  std::to_string(total));
    }
  }
  index_reachable();
}

void ScriptedModel::index_reachable() {
  reachable_.clear();
  std::vector<std::string> frontier{""};
  reachable_.insert("");
  while (!frontier.empty()) {
    std::string context = std::move(frontier.back());
    frontier.pop_back();
    auto it = nodes_.find(context);
    if (it == nodes_.end()) continue;
    for (const auto& [token, prob] : it->second) {
      if (token == terminal_) continue;
      std::string next = context + token;
      if (reachable_.insert(next).second) frontier.push_back(next);
    }
  }
  reachable_lengths_.clear();
  for (const auto& c : reachable_) reachable_lengths_.insert(c.size());
}

ScriptedModel ScriptedModel::from_json(const json& j) {
  std::map<std::string, std::vector<std::pair<std::string, double>>> nodes;
  for (const auto& [context, branches] : j.at("nodes").items()) {
    std::vector<std::pair<std::string, double>> parsed;
    for (const auto& branch : branches) {
      parsed.emplace_back(branch.at(0).get<std::string>(), branch.at(1).get<double>());
    }
    nodes.emplace(context, std::move(parsed));
  }
  std::string terminal = j.value("terminal", std::string("<END>"));
  return ScriptedModel(std::move(nodes), std::move(terminal));
}

ScriptedModel ScriptedModel::from_file(const std::filesystem::path& path) {
  return from_json(json::parse(read_file(path)));
}

const std::vector<std::pair<std::string, double>>* ScriptedModel::node(
    const std::string& context) const {
  auto it = nodes_.find(context);
  return it == nodes_.end() ? nullptr : &it->second;
}

bool ScriptedModel::is_reachable(const std::string& context) const {
  return reachable_.count(context) > 0;
}

std::string ScriptedModel::resolve_context(const std::string& prompt) const {
  for (auto it = reachable_lengths_.rbegin(); it != reachable_lengths_.rend(); ++it) {
    std::size_t len = *it;
    if (len > prompt.size()) continue;
    std::string suffix = prompt.substr(prompt.size() - len);
    if (reachable_.count(suffix)) return suffix;
  }
  return "";
}

namespace {

void enumerate_from(const ScriptedModel& model, const std::string& context,
                    const std::string& accumulated, double prob,
                    std::vector<std::pair<std::string, double>>& out) {
  const auto* branches = model.node(context);
  if (branches == nullptr) {
    out.emplace_back(accumulated, prob);
    return;
  }
  for (const auto& [token, p] : *branches) {
    if (token == model.terminal()) {
      out.emplace_back(accumulated, prob * p);
    } else {
      enumerate_from(model, context + token, accumulated + token, prob * p, out);
    }
  }
}

}  // namespace

std::vector<std::pair<std::string, double>> enumerate_paths(const ScriptedModel& model,
                                                            const std::string& prefix) {
  if (!model.is_reachable(prefix)) {
    throw UnknownContextError("enumerate_paths: unreachable prefix '" + prefix + "'");
  }
  std::vector<std::pair<std::string, double>> out;
  enumerate_from(model, prefix, "", 1.0, out);
  return out;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

namespace {

// Branches ordered by descending probability, lexicographic tiebreak.
std::vector<std::pair<std::string, double>> sorted_branches(
    const std::vector<std::pair<std::string, double>>& branches) {
  auto out = branches;
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

}  // namespace

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
  validate(request);
  if (request.prompt.empty()) throw PreconditionError("complete: empty prompt");

  CompletionResult result;
  std::string context = model_.resolve_context(request.prompt);
  Rng rng(request.seed.value_or(default_seed_));

  for (int step = 0; step < request.max_tokens; ++step) {
    const auto* branches = model_.node(context);
    if (branches == nullptr) break;

    auto ordered = sorted_branches(*branches);
    std::size_t chosen = 0;
    if (request.temperature > 0.0) {
      // Sample from probabilities tempered by 1/temperature; the recorded
      // logprobs stay at the model's own distribution.
      std::vector<double> tempered(ordered.size());
      for (std::size_t i = 0; i < ordered.size(); ++i) {
        tempered[i] = std::pow(ordered[i].second, 1.0 / request.temperature);
      }
      double total = 0.0;
      for (double w : tempered) total += w;
      double u = rng.uniform() * total;
      double cum = 0.0;
      chosen = ordered.size() - 1;
      for (std::size_t i = 0; i < ordered.size(); ++i) {
        cum += tempered[i];
        if (u < cum) {
          chosen = i;
          break;
        }
      }
    }

    const auto& [token, prob] = ordered[chosen];
    if (token == model_.terminal()) break;
    bool is_stop = std::find(request.stop.begin(), request.stop.end(), token) != request.stop.end();
    if (is_stop) break;

    TokenEvent event;
    event.token = token;
    event.logprob = std::log(prob);
    int kept = 0;
    for (const auto& [alt, p] : ordered) {
      if (alt == model_.terminal()) continue;
      if (kept >= request.top_logprobs) break;
      event.top_alternates.emplace_back(alt, std::log(p));
      ++kept;
    }
    ensure_realized_alternate(event);
    validate(event);

    result.events.push_back(std::move(event));
    result.text += token;
    context += token;
  }
  return result;
}

std::optional<std::vector<std::pair<std::string, double>>> ScriptedBackend::enumerate(
    const std::string& prompt) {
  return enumerate_paths(model_, model_.resolve_context(prompt));
}

// ---------------------------------------------------------------------------
// ScriptedExtractor

ScriptedExtractor ScriptedExtractor::from_json(const json& j) {
  std::vector<std::pair<std::string, std::string>> rules;
  for (const auto& rule : j.at("rules")) {
    rules.emplace_back(rule.at(0).get<std::string>(), rule.at(1).get<std::string>());
  }
  return ScriptedExtractor(std::move(rules), j.value("default", std::string()));
}

ScriptedExtractor ScriptedExtractor::from_file(const std::filesystem::path& path) {
  return from_json(json::parse(read_file(path)));
}

std::string ScriptedExtractor::extract(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw PreconditionError("extract: empty message list");
  std::string joined;
  for (const auto& m : messages) {
    joined += m.content;
    joined += '\n';
  }
  for (const auto& [needle, reply] : rules_) {
    if (joined.find(needle) != std::string::npos) return reply;
  }
  return fallback_;
}

// ---------------------------------------------------------------------------
// Throttle

Throttle::Throttle(ThrottleConfig config)
    : config_(config), last_refill_(std::chrono::steady_clock::now()) {
  available_tokens_ = config_.tokens_per_minute;  // allow an initial burst
}

void Throttle::acquire(double estimated_tokens) {
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    if (config_.tokens_per_minute > 0.0) {
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      last_refill_ = now;
      available_tokens_ = std::min(config_.tokens_per_minute,
                                   available_tokens_ + elapsed * config_.tokens_per_minute / 60.0);
    }
    bool slot_free = in_flight_ < config_.max_in_flight;
    bool budget_ok = config_.tokens_per_minute <= 0.0 || available_tokens_ >= estimated_tokens ||
                     available_tokens_ >= config_.tokens_per_minute;  // oversized request
    if (slot_free && budget_ok) {
      ++in_flight_;
      if (config_.tokens_per_minute > 0.0) available_tokens_ -= estimated_tokens;
      return;
    }
    cv_.wait_for(lock, std::chrono::milliseconds(20));
  }
}

void Throttle::release() {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    --in_flight_;
  }
  cv_.notify_all();
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<json> ResponseCache::get(const std::string& key) const {
  auto path = dir_ / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return json::parse(read_file(path));
}

void ResponseCache::put(const std::string& key, const json& response) const {
  auto path = dir_ / (key + ".json");
  auto tmp = dir_ / (key + ".tmp");
  write_file(tmp, response.dump());
  std::filesystem::rename(tmp, path);
}

std::string request_cache_key(const std::string& backend_name, const CompletionRequest& request) {
  json j{{"backend", backend_name}, {"kind", "complete"}, {"request", request}};
  return sha256_hex(j.dump());
}

std::string extraction_cache_key(const std::string& backend_name,
                                 const std::vector<ChatMessage>& messages) {
  json j{{"backend", backend_name}, {"kind", "extract"}, {"messages", messages}};
  return sha256_hex(j.dump());
}

CachedCompletionBackend::CachedCompletionBackend(std::shared_ptr<CompletionBackend> inner,
                                                 ResponseCache cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

CompletionResult CachedCompletionBackend::complete(const CompletionRequest& request) {
  std::string key = request_cache_key(inner_->name(), request);
  if (auto hit = cache_.get(key)) return hit->get<CompletionResult>();
  calls_.fetch_add(1);
  CompletionResult result = inner_->complete(request);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.put(key, json(result));
  return result;
}

std::string CachedCompletionBackend::name() const { return inner_->name(); }

std::optional<std::vector<std::pair<std::string, double>>> CachedCompletionBackend::enumerate(
    const std::string& prompt) {
  return inner_->enumerate(prompt);
}

CachedExtractionBackend::CachedExtractionBackend(std::shared_ptr<ExtractionBackend> inner,
                                                 ResponseCache cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::string CachedExtractionBackend::extract(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw PreconditionError("extract: empty message list");
  std::string key = extraction_cache_key(inner_->name(), messages);
  if (auto hit = cache_.get(key)) return hit->at("text").get<std::string>();
  calls_.fetch_add(1);
  std::string text = inner_->extract(messages);
  std::lock_guard<std::mutex> lock(mutex_);
  cache_.put(key, json{{"text", text}});
  return text;
}

std::string CachedExtractionBackend::name() const { return inner_->name(); }

// ---------------------------------------------------------------------------
// HTTP backends

void to_json(json& j, const HttpBackendConfig& config) {
  j = json{{"base_url", config.base_url},
           {"completions_path", config.completions_path},
           {"chat_path", config.chat_path},
           {"model", config.model},
           {"api_key_env", config.api_key_env},
           {"max_attempts", config.retry.max_attempts},
           {"base_delay_seconds", config.retry.base_delay_seconds},
           {"max_in_flight", config.throttle.max_in_flight},
           {"tokens_per_minute", config.throttle.tokens_per_minute}};
}

void from_json(const json& j, HttpBackendConfig& config) {
  config.base_url = j.at("base_url").get<std::string>();
  config.completions_path = j.value("completions_path", std::string("/v1/completions"));
  config.chat_path = j.value("chat_path", std::string("/v1/chat/completions"));
  config.model = j.value("model", std::string());
  config.api_key_env = j.value("api_key_env", std::string("FORKPATH_PROVIDER_KEY"));
  config.retry.max_attempts = j.value("max_attempts", 5);
  config.retry.base_delay_seconds = j.value("base_delay_seconds", 0.25);
  config.throttle.max_in_flight = j.value("max_in_flight", 4);
  config.throttle.tokens_per_minute = j.value("tokens_per_minute", 0.0);
}

namespace {

std::string api_key_or_throw(const std::string& env_var) {
  const char* key = std::getenv(env_var.c_str());
  if (key == nullptr || *key == '\0') {
    throw PreconditionError("missing API key in environment variable " + env_var);
  }
  return key;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

json http_post_json(const HttpBackendConfig& config, const std::string& path, const json& body,
                    const std::string& api_key, Throttle* throttle, double estimated_tokens) {
  Rng jitter(mix_seed(config.retry.jitter_seed));
  std::string payload = body.dump();
  std::string last_error = "no attempts made";

  for (int attempt = 0; attempt < config.retry.max_attempts; ++attempt) {
    if (attempt > 0) {
      double delay = config.retry.base_delay_seconds * std::pow(2.0, attempt - 1);
      delay = std::min(delay, config.retry.max_delay_seconds);
      delay *= 0.5 + 0.5 * jitter.uniform();
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    if (throttle != nullptr) throttle->acquire(estimated_tokens);
    httplib::Client client(config.base_url);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
    auto res = client.Post(path, headers, payload, "application/json");
    if (throttle != nullptr) throttle->release();

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::exception& e) {
        last_error = std::string("bad JSON in response: ") + e.what();
        continue;
      }
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!retryable_status(res->status)) break;
  }
  throw ProviderUnavailableError("provider unavailable after retries: " + last_error);
}

HttpCompletionBackend::HttpCompletionBackend(HttpBackendConfig config)
    : config_(std::move(config)), throttle_(std::make_shared<Throttle>(config_.throttle)) {}

std::string HttpCompletionBackend::name() const {
  return "http:" + config_.base_url + config_.completions_path + ":" + config_.model;
}

CompletionResult HttpCompletionBackend::complete(const CompletionRequest& request) {
  validate(request);
  if (request.prompt.empty()) throw PreconditionError("complete: empty prompt");
  std::string api_key = api_key_or_throw(config_.api_key_env);

  json body{{"model", config_.model},
            {"prompt", request.prompt},
            {"max_tokens", request.max_tokens},
            {"temperature", request.temperature},
            {"logprobs", request.top_logprobs}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.seed) body["seed"] = *request.seed;

  double estimated = static_cast<double>(request.prompt.size()) / 4.0 + request.max_tokens;
  json response = http_post_json(config_, config_.completions_path, body, api_key,
                                 throttle_.get(), estimated);

  const auto& choice = response.at("choices").at(0);
  CompletionResult result;
  result.text = choice.at("text").get<std::string>();

  const auto& logprobs = choice.at("logprobs");
  const auto& tokens = logprobs.at("tokens");
  const auto& token_logprobs = logprobs.at("token_logprobs");
  const auto& top_logprobs = logprobs.at("top_logprobs");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    TokenEvent event;
    event.token = tokens.at(i).get<std::string>();
    event.logprob = token_logprobs.at(i).is_null()
                        ? 0.0
                        : std::min(0.0, token_logprobs.at(i).get<double>());
    if (i < top_logprobs.size() && top_logprobs.at(i).is_object()) {
      for (const auto& [tok, lp] : top_logprobs.at(i).items()) {
        event.top_alternates.emplace_back(tok, std::min(0.0, lp.get<double>()));
      }
      std::sort(event.top_alternates.begin(), event.top_alternates.end(),
                [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
                });
      if (static_cast<int>(event.top_alternates.size()) < request.top_logprobs) {
        result.degraded_logprobs = true;
      }
    } else {
      result.degraded_logprobs = true;
    }
    ensure_realized_alternate(event);
    validate(event);
    result.events.push_back(std::move(event));
  }
  return result;
}

HttpChatExtractor::HttpChatExtractor(HttpBackendConfig config)
    : config_(std::move(config)), throttle_(std::make_shared<Throttle>(config_.throttle)) {
  if (config_.api_key_env == "FORKPATH_PROVIDER_KEY") {
    config_.api_key_env = "FORKPATH_EXTRACTOR_KEY";
  }
}

std::string HttpChatExtractor::name() const {
  return "http:" + config_.base_url + config_.chat_path + ":" + config_.model;
}

std::string HttpChatExtractor::extract(const std::vector<ChatMessage>& messages) {
  if (messages.empty()) throw PreconditionError("extract: empty message list");
  std::string api_key = api_key_or_throw(config_.api_key_env);

  json body{{"model", config_.model}, {"messages", messages}};
  double estimated = 64;
  for (const auto& m : messages) estimated += static_cast<double>(m.content.size()) / 4.0;
  json response =
      http_post_json(config_, config_.chat_path, body, api_key, throttle_.get(), estimated);
  return response.at("choices").at(0).at("message").at("content").get<std::string>();
}

}  // namespace forkpath::provider
