#include "ragtrain/prompts.hpp"

namespace ragtrain::prompts {

std::string fill_slot(std::string_view tmpl, std::string_view slot, std::string_view value) {
  std::string marker = "{" + std::string(slot) + "}";
  std::string out(tmpl);
  const auto pos = out.find(marker);
  if (pos != std::string::npos) out.replace(pos, marker.size(), value);
  return out;
}

std::string judge_prompt(std::string_view question, std::string_view golden,
                         std::string_view prediction) {
  std::string p = fill_slot(kJudgeTemplate, "question", question);
  p = fill_slot(p, "golden", golden);
  return fill_slot(p, "prediction", prediction);
}

std::string generation_prompt(std::string_view question) {
  return std::string(kGenerationSystemPrompt) + "\n" + std::string(question);
}

std::string rewrite_prompt(std::string_view knowledge_block, std::string_view question) {
  return fill_slot(kRewriteSystemPrompt, "document", knowledge_block) + "\n" +
         std::string(question);
}

}  // namespace ragtrain::prompts
