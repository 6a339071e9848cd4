#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forkpath/outcomes.hpp"

namespace forkpath::tasks {

// One dataset row. Fields beyond id/question are task-specific.
struct Example {
  std::string id;
  std::string question;
  std::vector<std::string> choices;   // aqua (5), mmlu (4)
  std::string answer;                 // optional ground truth, carried through
  std::string first_sentence;         // storycloze
  std::vector<std::string> endings;   // storycloze, exactly 2
};

Example example_from_json(const json& j);
std::vector<Example> load_dataset(const std::filesystem::path& path);

// The exact completion prompt sent to the model, plus the story endings the
// extraction prompt needs for storycloze.
struct PreparedPrompt {
  std::string id;
  std::string text;
  std::string ending_1;
  std::string ending_2;
};

PreparedPrompt prepare_prompt(outcomes::TaskKind kind, const Example& example);

}  // namespace forkpath::tasks
