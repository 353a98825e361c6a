#include "ragtrain/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ragtrain {

TagSet RunConfig::tags() const {
  if (tag_mode == "long") return TagSet::long_tags();
  if (tag_mode == "short") return TagSet::short_tags();
  throw ConfigError("tags must be 'long' or 'short', got '" + tag_mode + "'");
}

JudgeConfig RunConfig::judge_config() const {
  JudgeConfig cfg;
  if (judge_mode == "remote") {
    cfg.mode = JudgeConfig::Mode::Remote;
    cfg.remote.base_url = remote_base_url;
  } else if (judge_mode != "offline") {
    throw ConfigError("judge must be 'offline' or 'remote', got '" + judge_mode + "'");
  }
  return cfg;
}

namespace {

struct Binder {
  std::map<std::string, std::function<void(const std::string&)>, std::less<>> setters;
  std::map<std::string, std::function<std::string()>, std::less<>> getters;

  template <typename T>
  void bind(const std::string& key, T& field) {
    setters[key] = [&field, key](const std::string& value) {
      std::istringstream in(value);
      if constexpr (std::is_same_v<T, bool>) {
        if (value == "true" || value == "1") {
          field = true;
        } else if (value == "false" || value == "0") {
          field = false;
        } else {
          throw ConfigError("key '" + key + "' expects a boolean, got '" + value + "'");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        field = value;
      } else {
        T parsed{};
        in >> parsed;
        if (in.fail() || !(in >> std::ws).eof()) {
          throw ConfigError("key '" + key + "' has malformed value '" + value + "'");
        }
        field = parsed;
      }
    };
    getters[key] = [&field]() {
      if constexpr (std::is_same_v<T, bool>) {
        return std::string(field ? "true" : "false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        return field;
      } else {
        std::ostringstream out;
        out.precision(17);
        out << field;
        return out.str();
      }
    };
  }
};

Binder make_binder(RunConfig& cfg) {
  Binder b;
  b.bind("seed", cfg.seed);
  b.bind("out_dir", cfg.out_dir);
  b.bind("tags", cfg.tag_mode);

  b.bind("world.n_entities", cfg.world.n_entities);
  b.bind("world.n_relations", cfg.world.n_relations);
  b.bind("world.n_facts", cfg.world.n_facts);
  b.bind("world.internal_fraction", cfg.world.internal_fraction);
  b.bind("world.n_questions", cfg.world.n_questions);
  b.bind("world.n_demo_entities", cfg.world.n_demo_entities);
  b.bind("world.distractors_per_entity", cfg.world.distractors_per_entity);

  b.bind("policy.window", cfg.feature_window);

  b.bind("gen.temperature", cfg.rollout.gen.temperature);
  b.bind("gen.top_p", cfg.rollout.gen.top_p);
  b.bind("gen.max_segment_tokens", cfg.rollout.gen.max_segment_tokens);
  b.bind("gen.max_trace_tokens", cfg.rollout.gen.max_trace_tokens);
  b.bind("gen.max_retrievals", cfg.rollout.max_retrievals);
  b.bind("gen.retrieve_k", cfg.rollout.retrieve_k);

  b.bind("seed_policy.learning_rate", cfg.seeding.learning_rate);
  b.bind("seed_policy.batch_size", cfg.seeding.batch_size);
  b.bind("seed_policy.max_rounds", cfg.seeding.max_rounds);
  b.bind("seed_policy.sharpen_rounds", cfg.seeding.sharpen_rounds);
  b.bind("seed_policy.target_accuracy", cfg.seeding.target_accuracy);
  b.bind("seed_policy.format_demos", cfg.seeding.include_format_demos);
  b.bind("seed_policy.demo_weight", cfg.seeding.demo_weight);

  b.bind("stage1.samples_per_question", cfg.stage1.samples_per_question);
  b.bind("stage1.epochs", cfg.stage1.epochs);
  b.bind("stage1.batch_size", cfg.stage1.batch_size);
  b.bind("stage1.learning_rate", cfg.stage1.learning_rate);
  b.bind("stage1.temperature", cfg.stage1.temperature);

  b.bind("rl.steps", cfg.stage2.steps);
  b.bind("rl.questions_per_step", cfg.stage2.questions_per_step);
  b.bind("rl.memory_batch_size", cfg.stage2.memory_batch_size);
  b.bind("rl.checkpoint_every", cfg.stage2.checkpoint_every);
  b.bind("rl.beta", cfg.rl.beta);
  b.bind("rl.clip_epsilon", cfg.rl.clip_epsilon);
  b.bind("rl.mu", cfg.rl.mu);
  b.bind("rl.eta", cfg.rl.eta);
  b.bind("rl.learning_rate", cfg.rl.learning_rate);
  b.bind("rl.group_size", cfg.rl.group_size);
  b.bind("rl.norm_epsilon", cfg.rl.norm_epsilon);

  b.bind("rewards.max_answer_words", cfg.rewards.max_answer_words);

  b.bind("ablation.no_stage1", cfg.ablation.no_stage1);
  b.bind("ablation.no_group_reward", cfg.ablation.no_group_reward);
  b.bind("ablation.no_memorization", cfg.ablation.no_memorization);

  b.bind("judge", cfg.judge_mode);
  b.bind("remote.base_url", cfg.remote_base_url);
  return b;
}

// sigma scope needs enum handling outside the generic binder
void apply_special(RunConfig& cfg, const std::string& key, const std::string& value, bool& hit) {
  hit = true;
  if (key == "rewards.sigma_scope") {
    if (value == "all") {
      cfg.rewards.sigma_scope = SigmaScope::AllRollouts;
    } else if (value == "correct") {
      cfg.rewards.sigma_scope = SigmaScope::CorrectOnly;
    } else {
      throw ConfigError("rewards.sigma_scope must be 'all' or 'correct'");
    }
    return;
  }
  hit = false;
}

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  Binder binder = make_binder(cfg);

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line = trim(text.substr(start, end - start));
    ++line_no;
    const bool last = end == text.size();
    start = end + 1;
    if (line.empty() || line[0] == '#') {
      if (last) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool hit = false;
    apply_special(cfg, key, value, hit);
    if (!hit) {
      const auto it = binder.setters.find(key);
      if (it == binder.setters.end()) {
        throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
      it->second(value);
    }
    if (last) break;
  }
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::finalize() {
  if (const char* env = std::getenv("RAGTRAIN_REMOTE_URL")) {
    remote_base_url = env;
  }
  world.seed = seed;
  rewards.eta = rl.eta;  // single knob for the group-reward clip
}

std::string RunConfig::echo() const {
  RunConfig copy = *this;
  Binder binder = make_binder(copy);
  std::string out;
  for (const auto& [key, getter] : binder.getters) {
    out += key;
    out += " = ";
    out += getter();
    out += '\n';
  }
  out += "rewards.sigma_scope = ";
  out += rewards.sigma_scope == SigmaScope::AllRollouts ? "all" : "correct";
  out += '\n';
  return out;
}

}  // namespace ragtrain
