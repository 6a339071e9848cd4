#pragma once

#include <map>
#include <string>
#include <vector>

#include "forkpath/core.hpp"
#include "forkpath/provider.hpp"

namespace forkpath::outcomes {

enum class TaskKind { coinflip, lastletter, aqua, gsm8k, mmlu, hotpotqa, storycloze };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

// How per-sample weights are formed inside a (t, w) batch.
enum class WeightingMode { self_normalized, uniform };

std::string to_string(WeightingMode mode);
WeightingMode weighting_mode_from_string(const std::string& name);

// Categorical outcome labels. At most six named labels; the reserved
// terminal label "Other" is always last and absorbs everything unnamed.
struct OutcomeSpace {
  static constexpr const char* kOther = "Other";
  // Cleansing emits this sentinel for replies outside a closed choice set;
  // it always folds into Other.
  static constexpr const char* kUnparsed = "*Other";

  std::vector<std::string> labels;  // includes kOther, last

  std::size_t size() const { return labels.size(); }
  std::size_t other_index() const { return labels.size() - 1; }
  std::size_t index_of(const std::string& label) const;

  bool operator==(const OutcomeSpace&) const = default;
};

struct OutcomeDistribution {
  OutcomeSpace space;
  std::vector<double> probs;  // aligned with space.labels

  bool operator==(const OutcomeDistribution&) const = default;
};

void validate(const OutcomeDistribution& dist);
void to_json(json& j, const OutcomeSpace& space);
void from_json(const json& j, OutcomeSpace& space);
void to_json(json& j, const OutcomeDistribution& dist);
void from_json(const json& j, OutcomeDistribution& dist);

// Answer cleansing: deterministic normalization of extractor replies into
// canonical labels. All functions are idempotent.
std::string cleanse_generic(const std::string& raw);
std::string cleanse_choice(const std::string& raw, int num_choices);
std::string cleanse_numeric(const std::string& raw);
std::string cleanse_letter_concat(const std::string& raw);
std::string cleanse_ending_choice(const std::string& raw);

std::string cleanse_answer(TaskKind kind, const std::string& raw);

// Weighted label mass for one (t, w) batch, normalized to sum to 1.
// Self-normalized mode merges duplicate completions, then weights each
// distinct continuation by its sequence probability; uniform mode counts
// every record equally.
std::map<std::string, double> label_weights(const std::vector<SampleRecord>& records,
                                            WeightingMode mode);

// Projects label mass onto a fixed space; unknown labels fold into Other.
OutcomeDistribution project_onto_space(const std::map<std::string, double>& mass,
                                       const OutcomeSpace& space);

// o_{t,w}: outcome distribution at one fork site.
OutcomeDistribution outcome_distribution_tw(const std::vector<SampleRecord>& records,
                                            const OutcomeSpace& space, WeightingMode mode);

// o_t: mixture of per-token distributions, with the retained alternates'
// probabilities renormalized to sum to 1.
OutcomeDistribution outcome_distribution_t(
    const std::vector<std::pair<double, OutcomeDistribution>>& weighted);

// Top-6 labels by total weighted probability in o_t across all indices,
// plus Other. Records must all carry labels.
OutcomeSpace build_outcome_space(const std::vector<SampleRecord>& records, WeightingMode mode);

// ---------------------------------------------------------------------------
// Extraction prompts

// Role-tagged message template; {full_qa_text}, {ending_1} and {ending_2}
// are substituted at call time.
struct ExtractionTemplate {
  std::vector<provider::ChatMessage> messages;
};

ExtractionTemplate default_extraction_template(TaskKind kind);

// Optional overrides: JSON object keyed by task kind name.
std::map<TaskKind, ExtractionTemplate> load_extraction_templates(const json& j);

std::vector<provider::ChatMessage> instantiate_template(const ExtractionTemplate& tmpl,
                                                        const std::string& full_qa_text,
                                                        const std::string& ending_1 = "",
                                                        const std::string& ending_2 = "");

}  // namespace forkpath::outcomes
