#include "ragtrain/orchestrator.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

void Checkpoint::save(const std::string& path) const {
  json j;
  j["step"] = step;
  j["seed"] = seed;
  j["tag_mode"] = tag_mode;
  j["feature_window"] = feature_window;
  j["vocab_words"] = vocab_words;
  json rows = json::array();
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < weights.cols(); ++c) row.push_back(weights(r, c));
    rows.push_back(std::move(row));
  }
  j["weights"] = std::move(rows);
  j["memory"] = json::array();
  for (const auto& m : memory_dataset) {
    j["memory"].push_back({{"question_id", m.question_id},
                           {"question", join_tokens(m.question_tokens)},
                           {"text", join_tokens(m.trace_tokens)},
                           {"source_rollout", m.source_rollout}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump() << '\n';
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  Checkpoint ckpt;
  ckpt.step = j.at("step").get<std::size_t>();
  ckpt.seed = j.at("seed").get<std::uint64_t>();
  ckpt.tag_mode = j.at("tag_mode").get<std::string>();
  ckpt.feature_window = j.at("feature_window").get<std::size_t>();
  ckpt.vocab_words = j.at("vocab_words").get<std::vector<std::string>>();
  const auto& rows = j.at("weights");
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = n_rows > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  ckpt.weights = Matrix::Zero(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      ckpt.weights(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                               .get<double>();
    }
  }
  const TagSet tags = ckpt.tag_mode == "short" ? TagSet::short_tags() : TagSet::long_tags();
  for (const auto& m : j.at("memory")) {
    MemorySample s;
    s.question_id = m.at("question_id").get<std::string>();
    s.question_tokens = tokenize(m.at("question").get<std::string>(), tags);
    s.trace_tokens = tokenize(m.at("text").get<std::string>(), tags);
    s.source_rollout = m.value("source_rollout", "");
    ckpt.memory_dataset.push_back(std::move(s));
  }
  return ckpt;
}

ToyPolicy Checkpoint::make_policy() const {
  const TagSet tags = tag_mode == "short" ? TagSet::short_tags() : TagSet::long_tags();
  Vocabulary vocab = Vocabulary::build(tags, vocab_words);
  FeatureSpec spec;
  spec.window = feature_window;
  return ToyPolicy(std::move(vocab), spec, weights);
}

Checkpoint Checkpoint::from_policy(const ToyPolicy& policy, std::uint64_t seed,
                                   std::string tag_mode, std::size_t step) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.seed = seed;
  ckpt.tag_mode = std::move(tag_mode);
  ckpt.feature_window = policy.feature_spec().window;
  const auto& tokens = policy.vocab().tokens();
  // Strip the markers and end-of-trace symbol that Vocabulary::build adds.
  ckpt.vocab_words.assign(tokens.begin() + 9, tokens.end());
  ckpt.weights = policy.weights();
  return ckpt;
}

std::string DynamicsRecord::to_json() const {
  json j;
  j["step"] = step;
  j["reward_mean"] = reward_mean;
  j["rc_mean"] = rc_mean;
  j["j_mask"] = j_mask;
  j["l_m"] = l_m;
  j["total_loss"] = total_loss;
  j["grad_norm"] = grad_norm;
  j["degenerate"] = degenerate;
  return j.dump();
}

Stage1Report run_stage1(const RunConfig& config, const WorldBundle& world, ToyPolicy& policy) {
  Stage1Report report;
  if (config.ablation.no_stage1) {
    report.skipped = true;
    return report;
  }
  const TagSet tags = config.tags();
  CorpusSearchClient search(world.corpus);

  RolloutParams sampling = config.rollout;
  sampling.gen.temperature = config.stage1.temperature;
  std::vector<SFTSample> cold_start;
  const std::size_t n = std::max<std::size_t>(config.stage1.samples_per_question, 2);
  for (const auto& qa : world.questions) {
    RolloutGroup group =
        run_group(policy, search, qa.id, qa.question, qa.golden_answer, n, sampling, tags,
                  StreamRng::derive_key(config.seed, "stage1"), "reject");
    std::vector<const Rollout*> ptrs;
    for (const auto& r : group.rollouts) ptrs.push_back(&r);
    auto kept = rejection_filter(ptrs, qa.golden_answer, {}, config.rewards);
    for (auto& s : kept) cold_start.push_back(std::move(s));
  }

  report.cold_start_samples = cold_start.size();
  if (cold_start.empty()) {
    report.empty_cold_start = true;
    return report;
  }
  const SFTRunReport sft = run_sft(policy, cold_start, config.stage1.epochs,
                                   config.stage1.batch_size, config.stage1.learning_rate,
                                   StreamRng::derive_key(config.seed, "stage1_sft"));
  report.sft_epoch_losses = sft.epoch_losses;
  return report;
}

namespace {

// Question scheduled for a given global slot: deck shuffles are a pure
// function of (seed, epoch), so resuming at any step replays identically.
const QAExample& scheduled_question(const WorldBundle& world, std::uint64_t seed,
                                    std::size_t global_slot) {
  const std::size_t n = world.questions.size();
  const std::size_t epoch = global_slot / n;
  const std::size_t offset = global_slot % n;
  std::vector<std::size_t> deck(n);
  for (std::size_t i = 0; i < n; ++i) deck[i] = i;
  StreamRng rng = StreamRng::derive(seed, "question_deck", epoch);
  rng.shuffle(deck);
  return world.questions[deck[offset]];
}

}  // namespace

Stage2Result run_stage2(const RunConfig& config, const WorldBundle& world,
                        const Checkpoint& start, const ToyPolicy& ref_policy,
                        const std::string& log_dir) {
  Stage2Result result;
  const TagSet tags = config.tags();
  ToyPolicy policy = start.make_policy();
  std::vector<MemorySample> memory = start.memory_dataset;
  CorpusSearchClient search(world.corpus);

  std::ofstream log;
  if (!log_dir.empty()) {
    std::filesystem::create_directories(log_dir);
    const std::string mode = start.step == 0 ? "dynamics.jsonl" : "dynamics_resume.jsonl";
    log.open(log_dir + "/" + mode, std::ios::app);
  }

  RewardConfig reward_cfg = config.rewards;
  if (config.ablation.no_group_reward) reward_cfg.eta = 0.0;  // clip at 0 kills the bonus

  Checkpoint last_good = start;

  for (std::size_t step = start.step; step < config.stage2.steps; ++step) {
    std::vector<RolloutGroup> groups;
    for (std::size_t slot = 0; slot < config.stage2.questions_per_step; ++slot) {
      const std::size_t global_slot = step * config.stage2.questions_per_step + slot;
      const QAExample& qa = scheduled_question(world, config.seed, global_slot);
      groups.push_back(run_group(policy, search, qa.id, qa.question, qa.golden_answer,
                                 config.rl.group_size, config.rollout, tags,
                                 StreamRng::derive_key(config.seed, "stage2", step), "rollout"));
    }

    for (auto& group : groups) {
      for (auto& r : group.rollouts) {
        fill_ref_logprobs(r, ref_policy, tags, config.rollout.max_retrievals);
      }
    }

    if (!config.ablation.no_memorization) {
      RewriterConfig rewriter;  // template mode
      merge_memory_samples(memory, build_memory_dataset(groups, rewriter, tags, reward_cfg));
    }

    RLBatch batch;
    batch.max_retrievals = config.rollout.max_retrievals;
    double reward_sum = 0.0;
    double rc_sum = 0.0;
    std::size_t total_rollouts = 0;
    for (const auto& group : groups) {
      const auto breakdowns = score_group(group, reward_cfg);
      for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
        const Rollout& r = group.rollouts[i];
        reward_sum += breakdowns[i].total;
        rc_sum += static_cast<double>(r.retrieval_count);
        ++total_rollouts;
        if (r.rl_eligible && r.unmasked_count() > 0) {
          batch.rollouts.push_back(&r);
          batch.rewards.push_back(breakdowns[i].total);
        }
      }
    }

    DynamicsRecord record;
    record.step = step;
    record.reward_mean = total_rollouts ? reward_sum / static_cast<double>(total_rollouts) : 0.0;
    record.rc_mean = total_rollouts ? rc_sum / static_cast<double>(total_rollouts) : 0.0;

    std::optional<AdvantageTensor> adv;
    try {
      adv = batch_advantages(batch, config.rl.beta, config.rl.norm_epsilon);
    } catch (const DegenerateBatch&) {
      record.degenerate = true;
      batch.rollouts.clear();
      batch.rewards.clear();
    }

    std::vector<const MemorySample*> memory_batch;
    if (!config.ablation.no_memorization && !memory.empty()) {
      StreamRng mem_rng = StreamRng::derive(config.seed, "memory_slice", step);
      std::vector<std::size_t> idx(memory.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      mem_rng.shuffle(idx);
      const std::size_t take = std::min(config.stage2.memory_batch_size, memory.size());
      for (std::size_t i = 0; i < take; ++i) memory_batch.push_back(&memory[idx[i]]);
    }

    try {
      const LossReport loss = combined_step(policy, batch, adv ? &*adv : nullptr, memory_batch,
                                            config.rl);
      record.j_mask = loss.j_mask;
      record.l_m = loss.l_m;
      record.total_loss = loss.total_loss;
      record.grad_norm = loss.grad_norm;
    } catch (const NonFiniteLoss&) {
      result.aborted_non_finite = true;
      result.dynamics.push_back(record);
      if (log.is_open()) log << record.to_json() << '\n';
      break;
    }

    result.dynamics.push_back(record);
    if (log.is_open()) {
      log << record.to_json() << '\n';
      log.flush();
    }

    Checkpoint now = Checkpoint::from_policy(policy, config.seed, config.tag_mode, step + 1);
    now.memory_dataset = memory;
    last_good = now;
    if (!log_dir.empty() && config.stage2.checkpoint_every > 0 &&
        (step + 1) % config.stage2.checkpoint_every == 0) {
      now.save(log_dir + "/ckpt_" + std::to_string(step + 1) + ".json");
    }
  }

  result.final_checkpoint = std::move(last_good);
  return result;
}

EvalReport evaluate_checkpoint(const RunConfig& config, const WorldBundle& world,
                               const Checkpoint& ckpt, std::string_view dataset_name) {
  ToyPolicy policy = ckpt.make_policy();
  CorpusSearchClient search(world.corpus);
  return evaluate(policy, search, world.questions, config.rollout, config.judge_config(),
                  config.tags(), dataset_name);
}

FullRunResult run_full_training(const RunConfig& config, const WorldBundle& world) {
  FullRunResult result;
  const TagSet tags = config.tags();

  FeatureSpec spec;
  spec.window = config.feature_window;
  ToyPolicy policy(world_vocabulary(world, tags), spec);
  seed_internal_knowledge(policy, world, config.seeding);
  result.seeded = Checkpoint::from_policy(policy, config.seed, config.tag_mode);

  result.stage1 = run_stage1(config, world, policy);
  result.post_sft = Checkpoint::from_policy(policy, config.seed, config.tag_mode);

  const std::string out = config.out_dir;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream echo(out + "/config_echo.txt");
    echo << config.echo();
    result.seeded.save(out + "/seeded.json");
    result.post_sft.save(out + "/stage1.json");
  }

  // Post-cold-start weights are the frozen reference for the KL penalty.
  const ToyPolicy ref_policy = result.post_sft.make_policy();
  result.stage2 = run_stage2(config, world, result.post_sft, ref_policy, out);
  if (!out.empty()) {
    result.stage2.final_checkpoint.save(out + "/final.json");
  }
  return result;
}

}  // namespace ragtrain
