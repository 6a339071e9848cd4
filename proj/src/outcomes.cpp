#include "forkpath/outcomes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <regex>

namespace forkpath::outcomes {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::coinflip: return "coinflip";
    case TaskKind::lastletter: return "lastletter";
    case TaskKind::aqua: return "aqua";
    case TaskKind::gsm8k: return "gsm8k";
    case TaskKind::mmlu: return "mmlu";
    case TaskKind::hotpotqa: return "hotpotqa";
    case TaskKind::storycloze: return "storycloze";
  }
  throw Error("unknown task kind");
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "coinflip") return TaskKind::coinflip;
  if (name == "lastletter") return TaskKind::lastletter;
  if (name == "aqua") return TaskKind::aqua;
  if (name == "gsm8k") return TaskKind::gsm8k;
  if (name == "mmlu") return TaskKind::mmlu;
  if (name == "hotpotqa") return TaskKind::hotpotqa;
  if (name == "storycloze") return TaskKind::storycloze;
  throw Error("unknown task kind: " + name);
}

std::string to_string(WeightingMode mode) {
  return mode == WeightingMode::self_normalized ? "self_normalized" : "uniform";
}

WeightingMode weighting_mode_from_string(const std::string& name) {
  if (name == "self_normalized") return WeightingMode::self_normalized;
  if (name == "uniform") return WeightingMode::uniform;
  throw Error("unknown weighting mode: " + name);
}

std::size_t OutcomeSpace::index_of(const std::string& label) const {
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  return other_index();
}

void validate(const OutcomeDistribution& dist) {
  if (dist.space.labels.empty() || dist.space.labels.back() != OutcomeSpace::kOther) {
    throw Error("OutcomeSpace: reserved label must be last");
  }
  if (dist.probs.size() != dist.space.labels.size()) {
    throw SpaceMismatchError("OutcomeDistribution: probs/labels size mismatch");
  }
  double total = 0.0;
  for (double p : dist.probs) {
    if (p < -1e-12) throw Error("OutcomeDistribution: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("OutcomeDistribution: probabilities sum to " + std::to_string(total));
  }
}

void to_json(json& j, const OutcomeSpace& space) { j = json{{"labels", space.labels}}; }

void from_json(const json& j, OutcomeSpace& space) {
  space.labels = j.at("labels").get<std::vector<std::string>>();
}

void to_json(json& j, const OutcomeDistribution& dist) {
  j = json{{"space", dist.space}, {"probs", dist.probs}};
}

void from_json(const json& j, OutcomeDistribution& dist) {
  dist.space = j.at("space").get<OutcomeSpace>();
  dist.probs = j.at("probs").get<std::vector<double>>();
  validate(dist);
}

// ---------------------------------------------------------------------------
// Answer cleansing

namespace {

const char* kWhitespace = " \t\n\r\f\v";

std::string strip(const std::string& s) {
  auto begin = s.find_first_not_of(kWhitespace);
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(kWhitespace);
  return s.substr(begin, end - begin + 1);
}

// Equivalent of Python s.split(delim)[1]: the segment between the first and
// second occurrence of delim (or through the end when there is no second).
std::string split_second(const std::string& s, const std::string& delim) {
  auto first = s.find(delim);
  auto start = first + delim.size();
  auto next = s.find(delim, start);
  if (next == std::string::npos) return s.substr(start);
  return s.substr(start, next - start);
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Shortest decimal matching Python's str(float(...)) rules: fixed notation
// for magnitudes in [1e-4, 1e16), scientific otherwise, ".0" appended to
// integral fixed-notation values.
std::string python_float_repr(double value) {
  char buf[64];
  if (value == 0.0) return std::signbit(value) ? "-0.0" : "0.0";
  double magnitude = std::fabs(value);
  if (magnitude >= 1e16 || magnitude < 1e-4) {
    for (int p = 0; p <= 17; ++p) {
      std::snprintf(buf, sizeof(buf), "%.*e", p, value);
      if (std::strtod(buf, nullptr) == value) break;
    }
    return buf;
  }
  for (int d = 0; d <= 17; ++d) {
    std::snprintf(buf, sizeof(buf), "%.*f", d, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  std::string s = buf;
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

}  // namespace

std::string cleanse_generic(const std::string& raw) {
  std::string s = raw;
  if (s.find("answer is ") != std::string::npos) {
    s = replace_all(split_second(s, "answer is "), "$", "");
  }
  s = strip(s);
  if (s.size() <= 1) return s;
  if (s.back() == '.') s.pop_back();
  return s;
}

std::string cleanse_choice(const std::string& raw, int num_choices) {
  std::string s = strip(raw);
  static const char* kLetters = "ABCDE";
  for (int i = 0; i < num_choices && i < 5; ++i) {
    if (s.size() == 1 && s[0] == kLetters[i]) return s;
  }
  return OutcomeSpace::kUnparsed;
}

std::string cleanse_numeric(const std::string& raw) {
  std::string cleaned = replace_all(raw, ",", "");
  static const std::regex number_re("-?[0-9]+\\.?[0-9]*");
  std::smatch match;
  if (std::regex_search(cleaned, match, number_re)) {
    return python_float_repr(std::strtod(match.str(0).c_str(), nullptr));
  }
  return raw;
}

std::string cleanse_letter_concat(const std::string& raw) {
  std::string s = lowercase(raw);
  s = replace_all(s, "\"", "");
  s = replace_all(s, "'", "");
  s = replace_all(s, ".", "");
  if (s.find("answer is") != std::string::npos) s = split_second(s, "answer is");
  if (s.find("message is") != std::string::npos) s = split_second(s, "message is");
  s = replace_all(s, " ", "");
  return strip(lowercase(s));
}

std::string cleanse_ending_choice(const std::string& raw) {
  std::string s = strip(raw);
  if (s == "1" || s == "2") return s;
  return OutcomeSpace::kUnparsed;
}

std::string cleanse_answer(TaskKind kind, const std::string& raw) {
  switch (kind) {
    case TaskKind::coinflip:
    case TaskKind::hotpotqa: return cleanse_generic(raw);
    case TaskKind::lastletter: return cleanse_letter_concat(raw);
    case TaskKind::aqua: return cleanse_choice(raw, 5);
    case TaskKind::gsm8k: return cleanse_numeric(raw);
    case TaskKind::mmlu: return cleanse_choice(raw, 4);
    case TaskKind::storycloze: return cleanse_ending_choice(raw);
  }
  throw Error("unknown task kind");
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

bool is_other_label(const std::string& label) {
  return label == OutcomeSpace::kOther || label == OutcomeSpace::kUnparsed;
}

const std::string& label_or_throw(const SampleRecord& record) {
  if (!record.outcome_label) {
    throw PreconditionError("sample record at t=" + std::to_string(record.site.token_index) +
                            " has no outcome label");
  }
  return *record.outcome_label;
}

}  // namespace

std::map<std::string, double> label_weights(const std::vector<SampleRecord>& records,
                                            WeightingMode mode) {
  if (records.empty()) throw MissingSiteError("label_weights: no records at site");

  std::map<std::string, double> mass;
  if (mode == WeightingMode::uniform) {
    double w = 1.0 / static_cast<double>(records.size());
    for (const auto& r : records) mass[label_or_throw(r)] += w;
    return mass;
  }

  // Merge duplicate completions, then self-normalize sequence probabilities
  // in log space so long low-probability continuations do not underflow.
  std::vector<const SampleRecord*> unique;
  std::map<std::string, std::size_t> seen;
  for (const auto& r : records) {
    label_or_throw(r);
    if (seen.emplace(r.completion_text, unique.size()).second) unique.push_back(&r);
  }
  double max_lp = -std::numeric_limits<double>::infinity();
  for (const auto* r : unique) max_lp = std::max(max_lp, r->completion_logprob);
  std::vector<double> weights(unique.size());
  for (std::size_t i = 0; i < unique.size(); ++i) {
    weights[i] = std::exp(unique[i]->completion_logprob - max_lp);
  }
  auto normalized = normalize_weights(weights);
  for (std::size_t i = 0; i < unique.size(); ++i) {
    mass[*unique[i]->outcome_label] += normalized[i];
  }
  return mass;
}

OutcomeDistribution project_onto_space(const std::map<std::string, double>& mass,
                                       const OutcomeSpace& space) {
  OutcomeDistribution dist;
  dist.space = space;
  dist.probs.assign(space.labels.size(), 0.0);
  for (const auto& [label, weight] : mass) {
    dist.probs[space.index_of(label)] += weight;
  }
  validate(dist);
  return dist;
}

OutcomeDistribution outcome_distribution_tw(const std::vector<SampleRecord>& records,
                                            const OutcomeSpace& space, WeightingMode mode) {
  return project_onto_space(label_weights(records, mode), space);
}

OutcomeDistribution outcome_distribution_t(
    const std::vector<std::pair<double, OutcomeDistribution>>& weighted) {
  if (weighted.empty()) throw MissingSiteError("outcome_distribution_t: no retained alternates");
  const OutcomeSpace& space = weighted.front().second.space;
  std::vector<double> probs;
  probs.reserve(weighted.size());
  for (const auto& [p, dist] : weighted) {
    if (p <= 0.0) throw PreconditionError("outcome_distribution_t: nonpositive token probability");
    if (dist.space != space) {
      throw SpaceMismatchError("outcome_distribution_t: distributions use different spaces");
    }
    probs.push_back(p);
  }
  auto mix = normalize_weights(probs);
  OutcomeDistribution out;
  out.space = space;
  out.probs.assign(space.labels.size(), 0.0);
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    for (std::size_t k = 0; k < out.probs.size(); ++k) {
      out.probs[k] += mix[i] * weighted[i].second.probs[k];
    }
  }
  validate(out);
  return out;
}

OutcomeSpace build_outcome_space(const std::vector<SampleRecord>& records, WeightingMode mode) {
  if (records.empty()) throw EmptyStoreError("build_outcome_space: empty record set");

  // Group by index, then token, keeping the site probability per token.
  std::map<std::size_t, std::map<std::string, std::pair<double, std::vector<SampleRecord>>>> grouped;
  for (const auto& r : records) {
    auto& slot = grouped[r.site.token_index][r.site.token];
    slot.first = r.site.token_prob;
    slot.second.push_back(r);
  }

  std::map<std::string, double> totals;
  for (const auto& [t, by_token] : grouped) {
    double prob_sum = 0.0;
    for (const auto& [w, slot] : by_token) prob_sum += slot.first;
    for (const auto& [w, slot] : by_token) {
      auto mass = label_weights(slot.second, mode);
      double share = slot.first / prob_sum;
      for (const auto& [label, weight] : mass) {
        if (!is_other_label(label)) totals[label] += share * weight;
      }
    }
  }

  std::vector<std::pair<std::string, double>> ranked(totals.begin(), totals.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  OutcomeSpace space;
  for (std::size_t i = 0; i < ranked.size() && i < 6; ++i) space.labels.push_back(ranked[i].first);
  space.labels.push_back(OutcomeSpace::kOther);
  return space;
}

// ---------------------------------------------------------------------------
// Extraction prompts

namespace {

ExtractionTemplate make_template(std::initializer_list<provider::ChatMessage> messages) {
  ExtractionTemplate t;
  t.messages.assign(messages);
  return t;
}

std::string substitute(std::string text, const std::string& placeholder, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(placeholder, pos)) != std::string::npos) {
    text.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

ExtractionTemplate default_extraction_template(TaskKind kind) {
  switch (kind) {
    case TaskKind::coinflip:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user", "What is the final choice (Yes or No) in the Answer in the previous message?"},
           {"system", "Respond with a single-word Yes or No if possible."}});
    case TaskKind::lastletter:
    case TaskKind::hotpotqa:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user",
            "What is the final answer to the Question given in the Answer in the previous "
            "message? Be brief."},
           {"system",
            "Respond with only the final answer, if possible. Be brief in your response, do not "
            "include unnecessary text."}});
    case TaskKind::mmlu:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user",
            "What is the final choice (A, B, C, or D) at the end of the Answer in the previous "
            "message?"},
           {"system", "Respond with a single-word multiple choice answer if possible: A, B, C or D."}});
    case TaskKind::aqua:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user",
            "What is the final choice (A, B, C, D, or E) at the end of the Answer in the previous "
            "message?"},
           {"system",
            "Respond with a single-word multiple choice answer if possible: A, B, C, D or E."}});
    case TaskKind::gsm8k:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user", "What is the final answer given in the Answer in the previous message?"},
           {"system", "Respond only with a number if possible. Do not include units such as \"$\"."}});
    case TaskKind::storycloze:
      return make_template(
          {{"user", "{full_qa_text}"},
           {"user",
            "Which of the following two sentences matches the ending of this story?\n1. "
            "\"{ending_1}\"\n2. \"{ending_2}\""},
           {"system", "Respond with a single word, either 1 or 2."}});
  }
  throw Error("unknown task kind");
}

std::map<TaskKind, ExtractionTemplate> load_extraction_templates(const json& j) {
  std::map<TaskKind, ExtractionTemplate> out;
  for (const auto& [name, messages] : j.items()) {
    ExtractionTemplate t;
    t.messages = messages.get<std::vector<provider::ChatMessage>>();
    out[task_kind_from_string(name)] = std::move(t);
  }
  return out;
}

std::vector<provider::ChatMessage> instantiate_template(const ExtractionTemplate& tmpl,
                                                        const std::string& full_qa_text,
                                                        const std::string& ending_1,
                                                        const std::string& ending_2) {
  std::vector<provider::ChatMessage> out;
  out.reserve(tmpl.messages.size());
  for (const auto& m : tmpl.messages) {
    std::string content = substitute(m.content, "{full_qa_text}", full_qa_text);
    content = substitute(content, "{ending_1}", ending_1);
    content = substitute(content, "{ending_2}", ending_2);
    out.push_back({m.role, content});
  }
  return out;
}

}  // namespace forkpath::outcomes
