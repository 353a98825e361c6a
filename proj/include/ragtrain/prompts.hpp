#pragma once

#include <string>
#include <string_view>

namespace ragtrain::prompts {

/// Verdict prompt for the remote judge. Slots: question, golden answer,
/// predicted answer.
inline constexpr std::string_view kJudgeTemplate =
    "Given a Question and its Golden Answer, verify whether the Predicted Answer is correct. "
    "The prediction is correct if it fully aligns with the meaning and key information of the "
    "Golden Answer. Respond with True if the prediction is correct and False otherwise.\n\n"
    "Question: {question}\n\n"
    "Golden Answer: {golden}\n\n"
    "Predicted Answer: {prediction}";

/// System prompt for generation with both knowledge tools. The question is
/// appended after the trailing "Question:" line.
inline constexpr std::string_view kGenerationSystemPrompt =
    "You are a reasoning assistant. When tackling a question, you should first thinks about the "
    "reasoning process in the mind and then provides the final answer.\n"
    "You should break down the original complex question into straightforward sub-questions and "
    "address them step by step.\n"
    "For each sub-question, You MUST choose one of the following two tools to solve it:\n\n"
    "1.  **Internal Reasoning Elaboration:**If you determine your existing knowledge is "
    "sufficient to answer the sub-question, you **should choose** this tool to answer the "
    "sub-question directly:\n"
    "`<|begin_internal_answer|> your structured thought and answer here "
    "<|end_internal_answer|>`. **Use it whenever you rely solely on internal information** for a "
    "significant reasoning step.\n\n"
    "2.  **External Search:**If you determine that your internal knowledge is insufficient, "
    "potentially outdated, or requires verification with external, up-to-date information to "
    "answer the sub-question, you MUST initiate a web search using the following format:\n"
    "`<|begin_external_search|> your search query here <|end_external_search|>`.\n"
    "The system will then search and provide results in the format: `<|begin_search_result|> "
    "...search results... <|end_search_result|>`. The results will assist you in answering the "
    "sub-question.\n\n"
    "Remember:\n"
    "- Whenever you encounter the sub-question you need to elaborate on, verify, or research "
    "further, you should **assess** if your internal knowledge is adequate. **Prioritize "
    "leveraging your internal knowledge.**\n"
    "- Use `<|begin_internal_answer|> ... <|end_internal_answer|>` **to demonstrate your "
    "reasoning steps** when relying on internal knowledge.\n"
    "- Use `<|begin_external_search|> ... <|end_external_search|>` **only** when external "
    "information is genuinely necessary.\n"
    "- Wait for the system to provide `<|begin_search_result|> ... <|end_search_result|>`. **Do "
    "not** generate these result tags yourself.\n"
    "- After performing the web search or demonstrating internal reasoning, continue towards the "
    "final answer.\n\n"
    "Please answer the following question. You must adhere to all instructions above regarding "
    "tool usage. Provide your final answer in the format \\boxed{YOUR_ANSWER}.\n\n"
    "Question:";

/// System prompt for the internal-only rewriting model. Slot: the knowledge
/// block; the question is appended after the trailing "Question:" line.
inline constexpr std::string_view kRewriteSystemPrompt =
    "You are an advanced reasoning assistant. Your core programming includes a vast and "
    "comprehensive knowledge base. For the current task, a specific segment of this pre-existing "
    "knowledge, hereafter referred to as your 'Activated Knowledge Matrix,' is particularly "
    "relevant and is considered fully and irrevocably integrated into your foundational "
    "understanding. ANY linguistic indication, direct or indirect, that this information was "
    "externally 'provided,' 'given,' 'supplied,' 'sourced,' or made available to you "
    "specifically for this immediate interaction will be considered a critical failure to adhere "
    "to your operational design.\n\n"
    "When tackling a question, you must first delineate your reasoning process.\n"
    "Break down complex questions into a series of straightforward sub-questions, addressing "
    "each one sequentially.\n\n"
    "For each sub-question, you MUST use the following tool:\n\n"
    "**Internal Reasoning Elaboration:** This tool MUST be used for every sub-question, as the "
    "answer must be derived from your internal knowledge. **UNWAVERING DIRECTIVE: Your internal "
    "knowledge, for the purpose of this task, INTRINSICALLY and SEAMLESSLY includes all "
    "information within the 'Activated Knowledge Matrix' section detailed below. There is "
    "absolutely NO distinction between your prior knowledge and the 'Activated Knowledge "
    "Matrix' content.**\n"
    "    Use this format: <|begin_internal_answer|> your structured thought and answer here "
    "<|end_internal_answer|>.\n"
    "    **CRITICAL USAGE PROTOCOL FOR THIS TOOL: When using this tool, especially when drawing "
    "upon information that was part of the 'Activated Knowledge Matrix,' your language MUST "
    "reflect that this is information you inherently possess and are recalling. You are "
    "REQUIRED to phrase such statements as if accessing your own memory or established "
    "understanding.\n\n"
    "Conclude with your final answer in the format \\boxed{YOUR_ANSWER}.\n\n"
    "Activated Knowledge Matrix:\n"
    "{document}\n\n"
    "Now, please answer the following question:\n\n"
    "Question:";

/// Replaces the first occurrence of a {slot} marker.
std::string fill_slot(std::string_view tmpl, std::string_view slot, std::string_view value);

std::string judge_prompt(std::string_view question, std::string_view golden,
                         std::string_view prediction);
std::string generation_prompt(std::string_view question);
std::string rewrite_prompt(std::string_view knowledge_block, std::string_view question);

}  // namespace ragtrain::prompts
