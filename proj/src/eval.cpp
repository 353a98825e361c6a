#include "ragtrain/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ragtrain/prompts.hpp"
#include "ragtrain/rewards.hpp"
#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

double f1_score(std::string_view prediction, std::string_view golden) {
  const auto pred = normalize_words(prediction);
  const auto gold = normalize_words(golden);
  if (pred.empty() || gold.empty()) return 0.0;

  std::map<std::string, std::size_t> gold_counts;
  for (const auto& w : gold) ++gold_counts[w];
  std::size_t overlap = 0;
  for (const auto& w : pred) {
    auto it = gold_counts.find(w);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

JudgeVerdict judge(std::string_view prediction, std::string_view golden,
                   std::string_view question, const JudgeConfig& config) {
  JudgeVerdict verdict;
  if (config.mode == JudgeConfig::Mode::Offline) {
    verdict.correct = cover_exact_match(prediction, golden);
    return verdict;
  }

  RemoteRequest req;
  req.prompt = prompts::judge_prompt(question, golden, prediction);
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.max_tokens = 8;
  try {
    const RemoteCompletion completion = remote_generate(config.remote, req);
    std::string head;
    for (const char c : completion.text) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!head.empty()) break;
        continue;
      }
      head.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      if (head.size() >= 5) break;
    }
    if (head == "true" || head.rfind("true", 0) == 0) {
      verdict.correct = true;
      return verdict;
    }
    if (head == "false" || head.rfind("false", 0) == 0) {
      verdict.correct = false;
      return verdict;
    }
  } catch (const RemoteError&) {
    // fall through to offline proxy
  }
  verdict.fallback = true;
  verdict.correct = cover_exact_match(prediction, golden);
  return verdict;
}

EvalReport aggregate_records(std::string_view dataset, std::vector<QuestionRecord> records) {
  EvalReport report;
  report.dataset = std::string(dataset);
  report.records = std::move(records);
  report.n = report.records.size();
  if (report.n == 0) return report;
  double f1 = 0.0;
  double acc = 0.0;
  double rc = 0.0;
  for (const auto& r : report.records) {
    f1 += r.f1;
    acc += r.judge_correct ? 1.0 : 0.0;
    rc += static_cast<double>(r.retrieval_count);
  }
  const auto n = static_cast<double>(report.n);
  report.f1_mean = f1 / n;
  report.judge_accuracy = acc / n;
  report.retrieval_count_mean = rc / n;
  return report;
}

bool EvalReport::audit() const {
  const EvalReport check = aggregate_records(dataset, records);
  return check.f1_mean == f1_mean && check.judge_accuracy == judge_accuracy &&
         check.retrieval_count_mean == retrieval_count_mean && check.n == n;
}

EvalReport evaluate(Policy& policy, SearchClient& search, const std::vector<QAExample>& dataset,
                    const RolloutParams& params, const JudgeConfig& judge_config,
                    const TagSet& tags, std::string_view dataset_name) {
  if (dataset.empty()) throw std::invalid_argument("evaluate requires a nonempty dataset");
  RolloutParams greedy = params;
  greedy.gen.greedy = true;

  std::vector<QuestionRecord> records;
  records.reserve(dataset.size());
  for (const auto& qa : dataset) {
    QuestionRecord rec;
    rec.id = qa.id;
    try {
      Rollout r = run_rollout(policy, search, qa.id, qa.question, greedy, tags, StreamRng(0));
      rec.retrieval_count = r.retrieval_count;
      rec.format_ok = r.format_ok;
      const ReasoningTrace* trace = r.trace();
      if (trace && trace->final_answer) rec.prediction = *trace->final_answer;
    } catch (const std::exception&) {
      // scored 0 below
    }
    rec.f1 = rec.prediction.empty() ? 0.0 : f1_score(rec.prediction, qa.golden_answer);
    if (!rec.prediction.empty()) {
      const JudgeVerdict v = judge(rec.prediction, qa.golden_answer, qa.question, judge_config);
      rec.judge_correct = v.correct;
      rec.judge_fallback = v.fallback;
    }
    records.push_back(std::move(rec));
  }
  return aggregate_records(dataset_name, std::move(records));
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  auto pct = [](double x) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(1);
    s << 100.0 * x;
    return s.str();
  };
  auto num = [](double x) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << x;
    return s.str();
  };
  out << "Dataset            F1    LasJ    RC      n\n";
  out << "-----------------  ----  ----  ----  -----\n";
  std::string name = report.dataset;
  if (name.size() > 17) name.resize(17);
  out << name << std::string(19 - name.size(), ' ');
  out << pct(report.f1_mean) << "  " << pct(report.judge_accuracy) << "  "
      << num(report.retrieval_count_mean) << "  " << report.n << "\n";
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["dataset"] = report.dataset;
  j["f1"] = report.f1_mean;
  j["judge_accuracy"] = report.judge_accuracy;
  j["retrieval_count"] = report.retrieval_count_mean;
  j["n"] = report.n;
  j["records"] = json::array();
  for (const auto& r : report.records) {
    j["records"].push_back({{"id", r.id},
                            {"prediction", r.prediction},
                            {"f1", r.f1},
                            {"judge_correct", r.judge_correct},
                            {"judge_fallback", r.judge_fallback},
                            {"retrieval_count", r.retrieval_count},
                            {"format_ok", r.format_ok}});
  }
  return j.dump(2);
}

}  // namespace ragtrain
