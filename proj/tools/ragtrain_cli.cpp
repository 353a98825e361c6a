#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ragtrain/config.hpp"
#include "ragtrain/eval.hpp"
#include "ragtrain/orchestrator.hpp"
#include "ragtrain/rewards.hpp"
#include "ragtrain/world.hpp"

namespace {

using namespace ragtrain;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunConfig load_config(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                      const std::string& out_override) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  if (config_path.empty()) cfg.finalize();
  if (seed_override) {
    cfg.seed = *seed_override;
    cfg.world.seed = *seed_override;
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  return cfg;
}

int cmd_world_gen(const RunConfig& cfg) {
  const WorldBundle world = generate_world(cfg.world);
  const std::string dir = cfg.out_dir;
  save_world(world, dir);
  std::cout << "world: " << world.graph.facts.size() << " facts, " << world.questions.size()
            << " questions, " << world.corpus.size() << " passages -> " << dir << "\n";
  return 0;
}

int cmd_ingest(const std::string& corpus_path, const std::string& out_path) {
  const Corpus corpus = Corpus::ingest(corpus_path);
  corpus.save(out_path);
  std::cout << "ingested " << corpus.size() << " passages, " << corpus.vocabulary_size()
            << " index terms -> " << out_path << "\n";
  return 0;
}

int cmd_sft(const RunConfig& cfg) {
  const WorldBundle world = generate_world(cfg.world);
  FeatureSpec spec;
  spec.window = cfg.feature_window;
  ToyPolicy policy(world_vocabulary(world, cfg.tags()), spec);
  const SeedReport seeded = seed_internal_knowledge(policy, world, cfg.seeding);
  std::cout << "seeded: recitation accuracy " << seeded.recitation_accuracy << " after "
            << seeded.rounds << " rounds\n";
  const Stage1Report report = run_stage1(cfg, world, policy);
  if (report.skipped) {
    std::cout << "stage 1 skipped (ablation.no_stage1)\n";
  } else if (report.empty_cold_start) {
    std::cout << "stage 1: empty cold-start set; policy unchanged\n";
  } else {
    std::cout << "stage 1: " << report.cold_start_samples << " cold-start samples, loss "
              << report.sft_epoch_losses.front() << " -> " << report.sft_epoch_losses.back()
              << "\n";
  }
  std::filesystem::create_directories(cfg.out_dir);
  Checkpoint::from_policy(policy, cfg.seed, cfg.tag_mode).save(cfg.out_dir + "/stage1.json");
  std::ofstream echo(cfg.out_dir + "/config_echo.txt");
  echo << cfg.echo();
  std::cout << "checkpoint -> " << cfg.out_dir << "/stage1.json\n";
  return 0;
}

int cmd_rl(const RunConfig& cfg, const std::string& resume_path) {
  const WorldBundle world = generate_world(cfg.world);
  if (resume_path.empty()) {
    const FullRunResult result = run_full_training(cfg, world);
    std::cout << "stage 1: " << result.stage1.cold_start_samples << " cold-start samples\n";
    std::cout << "stage 2: " << result.stage2.dynamics.size() << " steps";
    if (!result.stage2.dynamics.empty()) {
      const auto& last = result.stage2.dynamics.back();
      std::cout << ", final reward_mean " << last.reward_mean << ", rc_mean " << last.rc_mean;
    }
    std::cout << "\nfinal checkpoint -> " << cfg.out_dir << "/final.json\n";
    return result.stage2.aborted_non_finite ? 1 : 0;
  }
  const Checkpoint start = Checkpoint::load(resume_path);
  const Checkpoint ref = Checkpoint::load(cfg.out_dir + "/stage1.json");
  const ToyPolicy ref_policy = ref.make_policy();
  const Stage2Result result = run_stage2(cfg, world, start, ref_policy, cfg.out_dir);
  result.final_checkpoint.save(cfg.out_dir + "/final.json");
  std::cout << "resumed at step " << start.step << ", finished " << result.dynamics.size()
            << " steps -> " << cfg.out_dir << "/final.json\n";
  return result.aborted_non_finite ? 1 : 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& policy_path, const std::string& dataset_path,
             const std::string& corpus_path, const std::string& report_path) {
  const Checkpoint ckpt = Checkpoint::load(policy_path);
  ToyPolicy policy = ckpt.make_policy();

  std::vector<QAExample> dataset;
  Corpus corpus;
  if (!dataset_path.empty()) {
    dataset = questions_from_jsonl(read_file(dataset_path));
    if (corpus_path.empty()) {
      throw std::runtime_error("eval with --dataset requires --corpus");
    }
    corpus = Corpus::ingest(corpus_path);
  } else {
    const WorldBundle world = generate_world(cfg.world);
    dataset = world.questions;
    corpus = world.corpus;
  }
  CorpusSearchClient search(corpus);
  const EvalReport report = evaluate(policy, search, dataset, cfg.rollout, cfg.judge_config(),
                                     cfg.tags(), "eval");
  std::cout << report_table(report);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report_to_json(report) << '\n';
    std::ofstream table(report_path + ".txt");
    table << report_table(report);
    std::cout << "report -> " << report_path << "\n";
  }
  return 0;
}

int cmd_rollout(const RunConfig& cfg, const std::string& policy_path, const std::string& question_id,
                std::size_t n, const std::string& dump_path) {
  const WorldBundle world = generate_world(cfg.world);
  const QAExample* qa = world.question_by_id(question_id);
  if (!qa) throw std::runtime_error("question id not found in world: " + question_id);

  FeatureSpec spec;
  spec.window = cfg.feature_window;
  ToyPolicy policy = policy_path.empty()
                         ? ToyPolicy(world_vocabulary(world, cfg.tags()), spec)
                         : Checkpoint::load(policy_path).make_policy();
  CorpusSearchClient search(world.corpus);
  const RolloutGroup group = run_group(policy, search, qa->id, qa->question, qa->golden_answer,
                                       std::max<std::size_t>(n, 2), cfg.rollout, cfg.tags(),
                                       cfg.seed, "rollout_cmd");
  std::ostringstream records;
  for (const auto& r : group.rollouts) records << rollout_to_json(r) << '\n';
  if (dump_path.empty()) {
    std::cout << records.str();
  } else {
    std::ofstream out(dump_path);
    out << records.str();
    std::cout << group.rollouts.size() << " rollouts -> " << dump_path << "\n";
  }
  return 0;
}

int cmd_score(const RunConfig& cfg, const std::string& rollouts_path, const std::string& golden_path,
              const std::string& out_path) {
  const TagSet tags = cfg.tags();
  const auto questions = questions_from_jsonl(read_file(golden_path));
  auto golden_of = [&](const std::string& qid) -> const std::string* {
    for (const auto& q : questions) {
      if (q.id == qid) return &q.golden_answer;
    }
    return nullptr;
  };

  // Rebuild rollouts from dump records, grouped by question.
  std::map<std::string, std::vector<Rollout>> by_question;
  std::istringstream in(read_file(rollouts_path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    Rollout r;
    r.question_id = rec.at("question_id").get<std::string>();
    r.tokens = tokenize(rec.at("text").get<std::string>(), tags);
    std::vector<std::pair<int, std::size_t>> rle;
    for (const auto& p : rec.at("mask_rle")) {
      rle.emplace_back(p.at(0).get<int>(), p.at(1).get<std::size_t>());
    }
    r.mask = mask_from_rle(rle);
    r.retrieval_count = rec.at("retrieval_count").get<std::size_t>();
    r.truncated = rec.value("truncated", false);
    r.parsed = parse(rec.at("text").get<std::string>(), tags);
    r.format_ok = validate_format(r.parsed);
    by_question[r.question_id].push_back(std::move(r));
  }

  std::ostringstream out;
  for (auto& [qid, rollouts] : by_question) {
    const std::string* golden = golden_of(qid);
    if (!golden) {
      std::cerr << "warning: no golden answer for question " << qid << ", skipped\n";
      continue;
    }
    RolloutGroup group;
    group.question_id = qid;
    group.golden_answer = *golden;
    group.rollouts = std::move(rollouts);
    const auto breakdowns = score_group(group, cfg.rewards);
    for (std::size_t i = 0; i < breakdowns.size(); ++i) {
      out << reward_to_json(breakdowns[i], qid, i) << '\n';
    }
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    std::ofstream f(out_path);
    f << out.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage training for retrieval-interleaved reasoning policies"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  app.add_option("--config", config_path, "run configuration file (flat key = value)");
  app.add_option("--seed", seed_override, "override the configured seed");
  app.add_option("--out", out_override, "override the configured output directory");

  auto* world_gen = app.add_subcommand("world-gen", "generate and dump a synthetic QA world");

  auto* ingest = app.add_subcommand("ingest", "build a retrieval corpus from a record file");
  std::string ingest_corpus, ingest_out;
  ingest->add_option("--corpus", ingest_corpus, "newline-delimited passage records")->required();
  ingest->add_option("--out", ingest_out, "normalized index output path")->required();

  auto* sft = app.add_subcommand("sft", "seed the policy and run the cold-start stage");

  auto* rl = app.add_subcommand("rl", "run the full two-stage training loop");
  std::string resume_path;
  rl->add_option("--resume", resume_path, "checkpoint to resume stage 2 from");

  auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  std::string eval_policy, eval_dataset, eval_corpus, eval_report;
  eval_cmd->add_option("--policy", eval_policy, "policy checkpoint")->required();
  eval_cmd->add_option("--dataset", eval_dataset, "question records (defaults to the world)");
  eval_cmd->add_option("--corpus", eval_corpus, "corpus for retrieval when --dataset is given");
  eval_cmd->add_option("--report", eval_report, "report output path");

  auto* rollout_cmd = app.add_subcommand("rollout", "sample a rollout group for one question");
  std::string ro_question, ro_dump, ro_policy;
  std::size_t ro_n = 16;
  rollout_cmd->add_option("--question", ro_question, "question id")->required();
  rollout_cmd->add_option("--n", ro_n, "rollouts to sample");
  rollout_cmd->add_option("--dump", ro_dump, "rollout record output path");
  rollout_cmd->add_option("--policy", ro_policy, "policy checkpoint (default: fresh policy)");

  auto* score = app.add_subcommand("score", "reward breakdowns for dumped rollouts");
  std::string score_rollouts, score_golden, score_out;
  score->add_option("--rollouts", score_rollouts, "rollout dump path")->required();
  score->add_option("--golden", score_golden, "question records with answers")->required();
  score->add_option("--out", score_out, "breakdown output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg = load_config(config_path, seed_override, out_override);
    if (world_gen->parsed()) return cmd_world_gen(cfg);
    if (ingest->parsed()) return cmd_ingest(ingest_corpus, ingest_out);
    if (sft->parsed()) return cmd_sft(cfg);
    if (rl->parsed()) return cmd_rl(cfg, resume_path);
    if (eval_cmd->parsed()) return cmd_eval(cfg, eval_policy, eval_dataset, eval_corpus, eval_report);
    if (rollout_cmd->parsed()) return cmd_rollout(cfg, ro_policy, ro_question, ro_n, ro_dump);
    if (score->parsed()) return cmd_score(cfg, score_rollouts, score_golden, score_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
