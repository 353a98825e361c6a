#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ragtrain/remote.hpp"
#include "ragtrain/rollout.hpp"
#include "ragtrain/world.hpp"

namespace ragtrain {

/// Token-level F1 between prediction and golden after answer normalization:
/// multiset overlap, precision over prediction tokens, recall over golden
/// tokens, harmonic mean. 0 when either side is empty.
double f1_score(std::string_view prediction, std::string_view golden);

struct JudgeConfig {
  enum class Mode { Offline, Remote };
  Mode mode = Mode::Offline;
  RemotePolicyConfig remote;
};

struct JudgeVerdict {
  bool correct = false;
  bool fallback = false;  // remote judge unavailable, offline proxy used
};

/// Offline mode is the cover-exact-match proxy; remote mode fills the
/// verdict prompt, sends it to the inference server, and parses True/False.
/// An unreachable or unparseable remote judge falls back to offline with
/// the fallback flag set.
JudgeVerdict judge(std::string_view prediction, std::string_view golden,
                   std::string_view question, const JudgeConfig& config);

struct QuestionRecord {
  std::string id;
  std::string prediction;
  double f1 = 0.0;
  bool judge_correct = false;
  bool judge_fallback = false;
  std::size_t retrieval_count = 0;
  bool format_ok = false;
};

struct EvalReport {
  std::string dataset;
  std::vector<QuestionRecord> records;
  double f1_mean = 0.0;
  double judge_accuracy = 0.0;
  double retrieval_count_mean = 0.0;
  std::size_t n = 0;

  /// Recomputes the aggregates from the records and compares exactly.
  bool audit() const;
};

EvalReport aggregate_records(std::string_view dataset, std::vector<QuestionRecord> records);

/// One greedy rollout per question; per-question failures score 0 with the
/// retrieval count still recorded.
EvalReport evaluate(Policy& policy, SearchClient& search, const std::vector<QAExample>& dataset,
                    const RolloutParams& params, const JudgeConfig& judge_config,
                    const TagSet& tags, std::string_view dataset_name = "eval");

/// Aligned plain-text table, one row per dataset block.
std::string report_table(const EvalReport& report);
std::string report_to_json(const EvalReport& report);

}  // namespace ragtrain
