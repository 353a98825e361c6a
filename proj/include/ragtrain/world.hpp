#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragtrain/corpus.hpp"
#include "ragtrain/errors.hpp"
#include "ragtrain/knowledge.hpp"
#include "ragtrain/policy.hpp"
#include "ragtrain/rollout.hpp"

namespace ragtrain {

enum class Channel { Internal, External };

std::string_view to_string(Channel c);

struct Fact {
  std::string id;
  std::string subject;
  std::string relation;
  std::string object;
  Channel channel = Channel::Internal;
};

struct FactGraph {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<Fact> facts;

  /// Relations are functional: at most one fact per (subject, relation).
  const Fact* lookup(std::string_view subject, std::string_view relation) const;
  const Fact* by_id(std::string_view id) const;
};

/// Two-hop chain question: answer = relation2(relation1(subject)).
struct QAExample {
  std::string id;
  std::string question;
  std::string golden_answer;
  std::string fact1_id;
  std::string fact2_id;
  Channel hop1 = Channel::Internal;
  Channel hop2 = Channel::Internal;
};

struct WorldConfig {
  std::uint64_t seed = 0;
  std::size_t n_entities = 90;
  std::size_t n_relations = 6;
  std::size_t n_facts = 160;
  double internal_fraction = 0.5;
  std::size_t n_questions = 200;
  std::size_t n_demo_entities = 12;
  std::size_t distractors_per_entity = 1;
};

/// A generated world: the fact graph, a corpus holding exactly the external
/// facts (plus distractors), chain questions with per-hop channel tags, and
/// reserved demonstration facts used only for format seeding.
struct WorldBundle {
  WorldConfig config;
  FactGraph graph;
  Corpus corpus;
  std::vector<QAExample> questions;
  std::vector<Fact> demo_facts;
  std::vector<std::string> vocab_words;

  const QAExample* question_by_id(std::string_view id) const;
  const QAExample* question_by_text(std::string_view text) const;
};

/// Deterministic world generation. Throws InfeasibleConfig when the
/// requested counts cannot be satisfied.
WorldBundle generate_world(const WorldConfig& config);

/// Question surface form for a chain (relation1, subject, relation2).
std::string question_surface(std::string_view relation1, std::string_view subject,
                             std::string_view relation2);
/// Single-fact recitation probe "find <relation> of <subject> ?".
std::string recitation_probe(const Fact& fact);
/// Recitation target trace text for one fact.
std::string recitation_trace(const Fact& fact, const TagSet& tags);

/// Builds the vocabulary for a world (markers + end-of-trace + world words).
Vocabulary world_vocabulary(const WorldBundle& world, const TagSet& tags);

struct SeedOptions {
  double learning_rate = 0.5;
  std::size_t batch_size = 16;
  std::size_t max_rounds = 300;
  std::size_t sharpen_rounds = 120;  // extra rounds after the target is hit
  double target_accuracy = 0.95;
  bool include_format_demos = true;
  std::size_t demo_weight = 3;  // demo-sample replication in the seed mix
};

struct SeedReport {
  std::size_t rounds = 0;
  double recitation_accuracy = 0.0;
};

/// Pre-trains the policy on internal-fact recitation traces (and reserved
/// demonstration traces teaching the trace syntax over demo entities) until
/// greedy recitation accuracy on the internal facts reaches the target.
/// External facts are never shown. Throws ConvergenceFailure after
/// max_rounds.
SeedReport seed_internal_knowledge(ToyPolicy& policy, const WorldBundle& world,
                                   const SeedOptions& opts = {});

/// Greedy recitation accuracy for the given facts: fraction whose probe
/// answer equals the fact object.
double recitation_accuracy(ToyPolicy& policy, const std::vector<const Fact*>& facts,
                           const TagSet& tags);

/// Format-demonstration SFT samples over the reserved demo facts (documents
/// masked).
std::vector<SFTSample> demo_samples(const WorldBundle& world, const TagSet& tags);
/// Recitation SFT samples for one channel of the fact graph.
std::vector<SFTSample> recitation_samples(const WorldBundle& world, Channel channel,
                                          const TagSet& tags);

/// Graph-reading scripted policy. FullAccess resolves every hop from the
/// graph (external hops issue queries); InternalOnly resolves only
/// internal-channel hops and answers "unknown" when a hop would need
/// retrieval.
class GraphOraclePolicy : public Policy {
 public:
  enum class Mode { FullAccess, InternalOnly };

  GraphOraclePolicy(const WorldBundle& world, const TagSet& tags, Mode mode = Mode::FullAccess);

  SegmentSample sample_segment(const GenContext& ctx, const GenParams& params,
                               StreamRng& rng) override;
  std::optional<double> score_token(const std::vector<std::string>&, std::string_view,
                                    const std::vector<std::string>&) const override {
    return 0.0;
  }
  bool can_score() const override { return true; }

  /// The full model-token script for one question.
  std::vector<std::string> script_for(const QAExample& qa) const;

 private:
  const WorldBundle* world_;
  TagSet tags_;
  Mode mode_;
  std::unordered_map<std::string, const QAExample*> by_question_;
};

// World persistence: corpus file in the retrieval format, questions and
// graph as newline-delimited / JSON files.
void save_world(const WorldBundle& world, const std::string& dir);
std::string questions_to_jsonl(const std::vector<QAExample>& questions);
std::vector<QAExample> questions_from_jsonl(std::string_view jsonl);

}  // namespace ragtrain
