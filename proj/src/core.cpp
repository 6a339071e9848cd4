#include "forkpath/core.hpp"

#include <algorithm>
#include <cmath>

namespace forkpath {

std::string BasePath::completion_text() const {
  std::string out;
  for (const auto& e : events) out += e.token;
  return out;
}

double path_probability(std::span<const double> logprobs) {
  double total = 0.0;
  for (double lp : logprobs) {
    if (lp > 0.0) throw InvalidLogprobError("path_probability: logprob > 0: " + std::to_string(lp));
    total += lp;
  }
  return std::exp(total);
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw DegenerateWeightsError("normalize_weights: negative or non-finite weight");
    }
    total += w;
  }
  if (total <= 0.0) throw DegenerateWeightsError("normalize_weights: weights sum to zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

void validate(const TokenEvent& event) {
  if (event.logprob > 0.0) throw InvalidLogprobError("TokenEvent: logprob > 0");
  for (std::size_t i = 0; i < event.top_alternates.size(); ++i) {
    if (event.top_alternates[i].second > 0.0) {
      throw InvalidLogprobError("TokenEvent: alternate logprob > 0");
    }
    if (i > 0 && event.top_alternates[i].second > event.top_alternates[i - 1].second) {
      throw Error("TokenEvent: top_alternates not sorted by descending logprob");
    }
  }
  bool realized_present = std::any_of(
      event.top_alternates.begin(), event.top_alternates.end(),
      [&](const auto& alt) { return alt.first == event.token; });
  if (!realized_present) throw Error("TokenEvent: realized token missing from top_alternates");
}

void validate(const BasePath& path) {
  if (path.events.empty()) throw Error("BasePath: events empty");
  for (const auto& e : path.events) validate(e);
}

void validate(const ForkSite& site) {
  if (site.token_prob <= 0.0 || site.token_prob > 1.0) {
    throw Error("ForkSite: token_prob outside (0, 1]");
  }
}

void validate(const SampleRecord& record) {
  validate(record.site);
  if (record.completion_logprob > 0.0) {
    throw InvalidLogprobError("SampleRecord: completion_logprob > 0");
  }
}

void ensure_realized_alternate(TokenEvent& event) {
  for (const auto& alt : event.top_alternates) {
    if (alt.first == event.token) return;
  }
  event.top_alternates.emplace_back(event.token, event.logprob);
  std::stable_sort(event.top_alternates.begin(), event.top_alternates.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
}

void to_json(json& j, const TokenEvent& event) {
  json alts = json::array();
  for (const auto& [token, lp] : event.top_alternates) alts.push_back(json::array({token, lp}));
  j = json{{"token", event.token}, {"logprob", event.logprob}, {"top_alternates", std::move(alts)}};
}

void from_json(const json& j, TokenEvent& event) {
  event.token = j.at("token").get<std::string>();
  event.logprob = j.at("logprob").get<double>();
  event.top_alternates.clear();
  for (const auto& alt : j.at("top_alternates")) {
    event.top_alternates.emplace_back(alt.at(0).get<std::string>(), alt.at(1).get<double>());
  }
  validate(event);
}

void to_json(json& j, const DecodeParams& params) {
  j = json{{"temperature", params.temperature},
           {"max_tokens", params.max_tokens},
           {"seed", params.seed}};
}

void from_json(const json& j, DecodeParams& params) {
  params.temperature = j.at("temperature").get<double>();
  params.max_tokens = j.at("max_tokens").get<int>();
  params.seed = j.at("seed").get<uint64_t>();
}

void to_json(json& j, const BasePath& path) {
  j = json{{"prompt_id", path.prompt_id},
           {"prompt_text", path.prompt_text},
           {"events", path.events},
           {"decode_params", path.decode_params}};
}

void from_json(const json& j, BasePath& path) {
  path.prompt_id = j.at("prompt_id").get<std::string>();
  path.prompt_text = j.at("prompt_text").get<std::string>();
  path.events = j.at("events").get<std::vector<TokenEvent>>();
  path.decode_params = j.at("decode_params").get<DecodeParams>();
  validate(path);
}

void to_json(json& j, const ForkSite& site) {
  j = json{{"t", site.token_index}, {"w", site.token}, {"p_w", site.token_prob}};
}

void from_json(const json& j, ForkSite& site) {
  site.token_index = j.at("t").get<std::size_t>();
  site.token = j.at("w").get<std::string>();
  site.token_prob = j.at("p_w").get<double>();
  validate(site);
}

void to_json(json& j, const SampleRecord& record) {
  j = json{{"site", record.site},
           {"completion_text", record.completion_text},
           {"completion_logprob", record.completion_logprob},
           {"outcome_label", record.outcome_label ? json(*record.outcome_label) : json(nullptr)},
           {"sample_index", record.sample_index}};
}

void from_json(const json& j, SampleRecord& record) {
  record.site = j.at("site").get<ForkSite>();
  record.completion_text = j.at("completion_text").get<std::string>();
  record.completion_logprob = j.at("completion_logprob").get<double>();
  const auto& label = j.at("outcome_label");
  record.outcome_label = label.is_null() ? std::nullopt : std::make_optional(label.get<std::string>());
  record.sample_index = j.at("sample_index").get<int>();
  validate(record);
}

}  // namespace forkpath
