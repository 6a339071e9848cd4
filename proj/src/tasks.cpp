#include "forkpath/tasks.hpp"

#include <fstream>
#include <sstream>

#include "forkpath/util.hpp"

namespace forkpath::tasks {

using outcomes::TaskKind;

Example example_from_json(const json& j) {
  Example e;
  if (j.contains("id")) {
    const auto& id = j.at("id");
    e.id = id.is_string() ? id.get<std::string>() : id.dump();
  }
  e.question = j.value("question", std::string());
  e.choices = j.value("choices", std::vector<std::string>{});
  if (j.contains("answer")) {
    const auto& a = j.at("answer");
    e.answer = a.is_string() ? a.get<std::string>() : a.dump();
  }
  e.first_sentence = j.value("first_sentence", std::string());
  e.endings = j.value("endings", std::vector<std::string>{});
  if (e.id.empty()) throw PreconditionError("dataset row missing id");
  return e;
}

std::vector<Example> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset: " + path.string());
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(example_from_json(json::parse(line)));
  }
  return out;
}

PreparedPrompt prepare_prompt(TaskKind kind, const Example& example) {
  PreparedPrompt prompt;
  prompt.id = example.id;

  switch (kind) {
    case TaskKind::coinflip:
    case TaskKind::lastletter:
    case TaskKind::gsm8k:
    case TaskKind::hotpotqa: {
      if (example.question.empty()) throw PreconditionError("example has no question");
      prompt.text = "Question:\n" + example.question + "\n\nAnswer:\nLet's think step by step.";
      return prompt;
    }
    case TaskKind::mmlu:
    case TaskKind::aqua: {
      std::size_t needed = kind == TaskKind::aqua ? 5 : 4;
      if (example.question.empty()) throw PreconditionError("example has no question");
      if (example.choices.size() < needed) {
        throw PreconditionError("example " + example.id + " needs " + std::to_string(needed) +
                                " choices");
      }
      static const char* kLetters = "ABCDE";
      std::string text = "Question:\n" + example.question + "\n\nChoices:\n";
      for (std::size_t i = 0; i < needed; ++i) {
        text += kLetters[i];
        text += ") " + example.choices[i] + "\n";
      }
      text += "\nAnswer:\nLet's think step by step.";
      prompt.text = std::move(text);
      return prompt;
    }
    case TaskKind::storycloze: {
      if (example.first_sentence.empty() || example.endings.size() != 2) {
        throw PreconditionError("storycloze example " + example.id +
                                " needs first_sentence and exactly 2 endings");
      }
      prompt.ending_1 = example.endings[0];
      prompt.ending_2 = example.endings[1];
      prompt.text =
          "Question:\nWrite a story with the following constraints:\n"
          "1. The story must be exactly five sentences long.\n"
          "2. The story must start with the sentence: \"" +
          example.first_sentence +
          "\"\n"
          "3. The story must end with one of the following two sentences:\n"
          "  - \"" +
          prompt.ending_1 +
          "\"\n  - \"" +
          prompt.ending_2 +
          "\"\n"
          "4. The last sentence must be exactly one of these sentences, not a rephrasing.\n\n"
          "Answer:\n" +
          example.first_sentence;
      return prompt;
    }
  }
  throw Error("unknown task kind");
}

}  // namespace forkpath::tasks
