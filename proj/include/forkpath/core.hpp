#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "forkpath/errors.hpp"

namespace forkpath {

using json = nlohmann::json;

// One decoded token with the model's next-token distribution at that index.
// top_alternates is sorted by descending logprob and always contains the
// realized token (appended with its own logprob when the provider's top-K
// list missed it).
struct TokenEvent {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> top_alternates;

  bool operator==(const TokenEvent&) const = default;
};

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 0;
  uint64_t seed = 0;

  bool operator==(const DecodeParams&) const = default;
};

// The reference completion whose token indices define all fork sites.
struct BasePath {
  std::string prompt_id;
  std::string prompt_text;
  std::vector<TokenEvent> events;
  DecodeParams decode_params;

  std::size_t length() const { return events.size(); }
  std::string completion_text() const;

  bool operator==(const BasePath&) const = default;
};

// A (token index, alternate token) pair to branch at, with the model's
// probability of that token given the base prefix.
struct ForkSite {
  std::size_t token_index = 0;
  std::string token;
  double token_prob = 1.0;

  bool operator==(const ForkSite&) const = default;
};

// One re-sampled continuation at a fork site. completion_logprob is the sum
// of per-token logprobs of the continuation; outcome_label is filled by the
// extraction stage.
struct SampleRecord {
  ForkSite site;
  std::string completion_text;
  double completion_logprob = 0.0;
  std::optional<std::string> outcome_label;
  int sample_index = 0;

  bool operator==(const SampleRecord&) const = default;
};

// exp(sum of logprobs). Empty input is the empty product.
double path_probability(std::span<const double> logprobs);

// Scales nonnegative weights to sum to 1. Rejects all-zero and negative
// input rather than guessing.
std::vector<double> normalize_weights(std::span<const double> weights);

// Invariant checks applied at deserialization and provider boundaries.
void validate(const TokenEvent& event);
void validate(const BasePath& path);
void validate(const ForkSite& site);
void validate(const SampleRecord& record);

// If the realized token is missing from top_alternates, append it with the
// event's own logprob and restore descending order.
void ensure_realized_alternate(TokenEvent& event);

void to_json(json& j, const TokenEvent& event);
void from_json(const json& j, TokenEvent& event);
void to_json(json& j, const DecodeParams& params);
void from_json(const json& j, DecodeParams& params);
void to_json(json& j, const BasePath& path);
void from_json(const json& j, BasePath& path);
void to_json(json& j, const ForkSite& site);
void from_json(const json& j, ForkSite& site);
void to_json(json& j, const SampleRecord& record);
void from_json(const json& j, SampleRecord& record);

}  // namespace forkpath
