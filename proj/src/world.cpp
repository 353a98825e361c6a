#include "ragtrain/world.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

std::string_view to_string(Channel c) {
  return c == Channel::Internal ? "internal" : "external";
}

const Fact* FactGraph::lookup(std::string_view subject, std::string_view relation) const {
  for (const auto& f : facts) {
    if (f.subject == subject && f.relation == relation) return &f;
  }
  return nullptr;
}

const Fact* FactGraph::by_id(std::string_view id) const {
  for (const auto& f : facts) {
    if (f.id == id) return &f;
  }
  return nullptr;
}

const QAExample* WorldBundle::question_by_id(std::string_view id) const {
  for (const auto& q : questions) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

const QAExample* WorldBundle::question_by_text(std::string_view text) const {
  for (const auto& q : questions) {
    if (q.question == text) return &q;
  }
  return nullptr;
}

std::string question_surface(std::string_view relation1, std::string_view subject,
                             std::string_view relation2) {
  std::string q = "find ";
  q += relation1;
  q += " of ";
  q += subject;
  q += " then ";
  q += relation2;
  q += " ?";
  return q;
}

std::string recitation_probe(const Fact& fact) {
  return "find " + fact.relation + " of " + fact.subject + " ?";
}

std::string recitation_trace(const Fact& fact, const TagSet& tags) {
  return tags.internal_open + " " + fact.object + " " + tags.internal_close + " " +
         tags.answer_open + " " + fact.object + " " + tags.answer_close;
}

namespace {

const std::vector<std::string>& relation_pool() {
  static const std::vector<std::string> pool = {"made_by", "found_in", "led_by",
                                                "part_of", "kept_by", "tied_to"};
  return pool;
}

constexpr std::string_view kDistractorRelation = "noted_with";
constexpr std::string_view kUnknownAnswer = "unknown";

std::string entity_name(std::size_t i) {
  std::string n = std::to_string(i);
  while (n.size() < 2) n.insert(n.begin(), '0');
  return "ent" + n;
}

std::string demo_entity_name(std::size_t i) { return "demo" + std::to_string(i); }

std::string fact_passage_text(const Fact& f) {
  return f.subject + " " + f.relation + " " + f.object + " .";
}

}  // namespace

WorldBundle generate_world(const WorldConfig& config) {
  if (config.internal_fraction < 0.0 || config.internal_fraction > 1.0) {
    throw InfeasibleConfig("internal_fraction must be in [0, 1]");
  }
  if (config.n_relations < 1 || config.n_relations > relation_pool().size()) {
    throw InfeasibleConfig("n_relations must be between 1 and " +
                           std::to_string(relation_pool().size()));
  }
  if (config.n_entities < 4) throw InfeasibleConfig("need at least 4 entities");

  WorldBundle world;
  world.config = config;

  for (std::size_t i = 0; i < config.n_entities; ++i) {
    world.graph.entities.push_back(entity_name(i));
  }
  world.graph.relations.assign(relation_pool().begin(),
                               relation_pool().begin() + static_cast<std::ptrdiff_t>(config.n_relations));

  // Layered topology: subjects -> mids -> answers, with the relation pool
  // split between the two hops. A question's context window then never
  // activates a competing fact: (subject, hop-2 relation) and
  // (mid, hop-1 relation) cannot exist.
  const std::size_t layer = config.n_entities / 3;
  if (layer < 2) throw InfeasibleConfig("need at least 6 entities for the layered graph");
  const std::size_t r_split = std::max<std::size_t>(1, config.n_relations / 2);
  std::vector<std::string> hop1_relations(world.graph.relations.begin(),
                                          world.graph.relations.begin() +
                                              static_cast<std::ptrdiff_t>(r_split));
  std::vector<std::string> hop2_relations(world.graph.relations.begin() +
                                              static_cast<std::ptrdiff_t>(r_split),
                                          world.graph.relations.end());
  if (hop2_relations.empty()) hop2_relations = hop1_relations;

  const std::size_t max_facts = layer * hop1_relations.size() + layer * hop2_relations.size();
  if (config.n_facts > max_facts) {
    throw InfeasibleConfig("n_facts " + std::to_string(config.n_facts) + " exceeds capacity " +
                           std::to_string(max_facts) + " of the layered graph");
  }

  // All placeable (subject, relation, target-layer) slots, half per hop.
  StreamRng rng = StreamRng::derive(config.seed, "world_facts");
  struct Slot {
    std::size_t subject;
    std::size_t relation;  // into hop1_relations or hop2_relations
    bool second_hop;
  };
  std::vector<Slot> slots;
  for (std::size_t e = 0; e < layer; ++e) {
    for (std::size_t r = 0; r < hop1_relations.size(); ++r) slots.push_back({e, r, false});
  }
  for (std::size_t e = layer; e < 2 * layer; ++e) {
    for (std::size_t r = 0; r < hop2_relations.size(); ++r) slots.push_back({e, r, true});
  }
  rng.shuffle(slots);
  std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.second_hop < b.second_hop;
  });
  // Interleave hop-1/hop-2 slots so both sides fill evenly.
  std::vector<Slot> ordered;
  {
    const std::size_t n1 = layer * hop1_relations.size();
    std::size_t i = 0;
    std::size_t j = n1;
    while (i < n1 || j < slots.size()) {
      if (i < n1) ordered.push_back(slots[i++]);
      if (j < slots.size()) ordered.push_back(slots[j++]);
    }
  }
  for (const Slot& slot : ordered) {
    if (world.graph.facts.size() >= config.n_facts) break;
    const std::size_t target_base = slot.second_hop ? 2 * layer : layer;
    const std::size_t target_span = slot.second_hop ? config.n_entities - 2 * layer : layer;
    Fact f;
    f.id = "f" + std::to_string(world.graph.facts.size());
    f.subject = world.graph.entities[slot.subject];
    f.relation = slot.second_hop ? hop2_relations[slot.relation] : hop1_relations[slot.relation];
    f.object = world.graph.entities[target_base + rng.uniform_index(target_span)];
    world.graph.facts.push_back(std::move(f));
  }

  // Channel split.
  {
    std::vector<std::size_t> order(world.graph.facts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    StreamRng channel_rng = StreamRng::derive(config.seed, "world_channels");
    channel_rng.shuffle(order);
    const auto n_internal = static_cast<std::size_t>(
        std::llround(config.internal_fraction * static_cast<double>(order.size())));
    for (std::size_t k = 0; k < order.size(); ++k) {
      world.graph.facts[order[k]].channel = k < n_internal ? Channel::Internal : Channel::External;
    }
  }

  // Candidate chains (fact1, fact2) with fact1.object == fact2.subject; at
  // most one question per (subject, unordered relation pair) so identical
  // context windows never demand different continuations. Chains whose
  // question window would activate a competing fact association are
  // dropped: distinct relations, no (subject, relation2) fact, no
  // (mid-entity, relation1) fact.
  std::vector<std::pair<std::size_t, std::size_t>> chains;
  for (std::size_t i = 0; i < world.graph.facts.size(); ++i) {
    for (std::size_t j = 0; j < world.graph.facts.size(); ++j) {
      const Fact& f1 = world.graph.facts[i];
      const Fact& f2 = world.graph.facts[j];
      if (f1.object != f2.subject) continue;
      if (f2.object == f1.subject) continue;  // avoid trivial loops
      if (f1.relation == f2.relation) continue;
      if (world.graph.lookup(f1.subject, f2.relation) != nullptr) continue;
      if (world.graph.lookup(f1.object, f1.relation) != nullptr) continue;
      chains.emplace_back(i, j);
    }
  }
  StreamRng chain_rng = StreamRng::derive(config.seed, "world_chains");
  chain_rng.shuffle(chains);

  std::set<std::tuple<std::string, std::string, std::string>> seen_pairs;
  for (const auto& [i, j] : chains) {
    if (world.questions.size() >= config.n_questions) break;
    const Fact& f1 = world.graph.facts[i];
    const Fact& f2 = world.graph.facts[j];
    std::string ra = f1.relation;
    std::string rb = f2.relation;
    if (rb < ra) std::swap(ra, rb);
    if (!seen_pairs.insert({f1.subject, ra, rb}).second) continue;
    QAExample qa;
    qa.id = "q" + std::to_string(world.questions.size());
    qa.question = question_surface(f1.relation, f1.subject, f2.relation);
    qa.golden_answer = f2.object;
    qa.fact1_id = f1.id;
    qa.fact2_id = f2.id;
    qa.hop1 = f1.channel;
    qa.hop2 = f2.channel;
    world.questions.push_back(std::move(qa));
  }
  if (world.questions.size() < config.n_questions) {
    throw InfeasibleConfig("only " + std::to_string(world.questions.size()) +
                           " questions constructible; lower n_questions or raise n_facts");
  }

  // Demo facts over reserved entities: one two-hop chain per entity
  // triple, mirroring the layered relation split.
  if (config.n_demo_entities >= 3) {
    StreamRng demo_rng = StreamRng::derive(config.seed, "world_demos");
    for (std::size_t i = 0; i + 2 < config.n_demo_entities; i += 3) {
      Fact f1;
      f1.id = "demo_f" + std::to_string(i);
      f1.subject = demo_entity_name(i);
      f1.relation = hop1_relations[demo_rng.uniform_index(hop1_relations.size())];
      f1.object = demo_entity_name(i + 1);
      f1.channel = Channel::External;
      world.demo_facts.push_back(std::move(f1));
      Fact f2;
      f2.id = "demo_f" + std::to_string(i + 1);
      f2.subject = demo_entity_name(i + 1);
      f2.relation = hop2_relations[demo_rng.uniform_index(hop2_relations.size())];
      f2.object = demo_entity_name(i + 2);
      f2.channel = Channel::External;
      world.demo_facts.push_back(std::move(f2));
    }
  }

  // Corpus: one passage per external fact plus per-entity distractors.
  std::vector<Passage> passages;
  for (const auto& f : world.graph.facts) {
    if (f.channel != Channel::External) continue;
    passages.push_back(Passage{"p_" + f.id, f.subject, fact_passage_text(f)});
  }
  StreamRng distractor_rng = StreamRng::derive(config.seed, "world_distractors");
  for (std::size_t d = 0; d < config.distractors_per_entity; ++d) {
    for (std::size_t e = 0; e < world.graph.entities.size(); ++e) {
      const std::string& subject = world.graph.entities[e];
      const std::string& object =
          world.graph.entities[distractor_rng.uniform_index(world.graph.entities.size())];
      passages.push_back(Passage{"d" + std::to_string(d) + "_" + subject, subject,
                                 subject + " " + std::string(kDistractorRelation) + " " + object +
                                     " ."});
    }
  }
  world.corpus = Corpus(std::move(passages));

  // World word list: everything a trace over this world can contain.
  std::set<std::string> words;
  for (const auto& e : world.graph.entities) words.insert(e);
  for (std::size_t i = 0; i < config.n_demo_entities; ++i) words.insert(demo_entity_name(i));
  for (const auto& r : world.graph.relations) words.insert(r);
  words.insert(std::string(kDistractorRelation));
  const std::vector<std::string> template_words = {"find", "of",      "then", "?",    ".",
                                                   "—", "no",    "results", "found",
                                                   std::string(kUnknownAnswer)};
  for (const auto& w : template_words) words.insert(w);
  for (std::size_t i = 1; i <= 5; ++i) words.insert("(" + std::to_string(i) + ")");
  world.vocab_words.assign(words.begin(), words.end());
  return world;
}

Vocabulary world_vocabulary(const WorldBundle& world, const TagSet& tags) {
  return Vocabulary::build(tags, world.vocab_words);
}

std::vector<SFTSample> recitation_samples(const WorldBundle& world, Channel channel,
                                          const TagSet& tags) {
  std::vector<SFTSample> samples;
  for (const auto& f : world.graph.facts) {
    if (f.channel != channel) continue;
    const auto target = tokenize(recitation_trace(f, tags), tags);
    samples.emplace_back("recite_" + f.id, tokenize(recitation_probe(f), tags), target,
                         std::vector<std::uint8_t>(target.size(), 1));
  }
  return samples;
}

namespace {

// Builds an SFT sample for a demo chain in one of four channel shapes.
SFTSample demo_chain_sample(const Fact& f1, const Fact& f2, bool hop1_external,
                            bool hop2_external, const TagSet& tags, std::size_t shape_index) {
  TraceBuilder builder(tags);
  auto add_hop = [&](const Fact& f, bool external) {
    if (external) {
      builder.query(f.subject + " " + f.relation);
      builder.document("(1) " + f.subject + " — " + fact_passage_text(f));
    } else {
      builder.internal(f.object);
    }
  };
  add_hop(f1, hop1_external);
  add_hop(f2, hop2_external);
  builder.answer(f2.object);
  ReasoningTrace trace = std::move(builder).build();

  std::vector<std::uint8_t> mask(trace.tokens.size(), 1);
  for (const auto& seg : trace.segments) {
    if (seg.kind == SegmentKind::Document) {
      for (std::size_t t = seg.token_span.begin; t < seg.token_span.end; ++t) mask[t] = 0;
    }
  }
  const std::string question = question_surface(f1.relation, f1.subject, f2.relation);
  return SFTSample("demo_" + f1.id + "_" + std::to_string(shape_index), tokenize(question, tags),
                   trace.tokens, std::move(mask));
}

}  // namespace

std::vector<SFTSample> demo_samples(const WorldBundle& world, const TagSet& tags) {
  std::vector<SFTSample> samples;
  const auto& demos = world.demo_facts;
  for (std::size_t i = 0; i + 1 < demos.size(); i += 2) {
    const Fact& f1 = demos[i];
    const Fact& f2 = demos[i + 1];
    samples.push_back(demo_chain_sample(f1, f2, true, true, tags, 0));
    samples.push_back(demo_chain_sample(f1, f2, true, false, tags, 1));
    samples.push_back(demo_chain_sample(f1, f2, false, true, tags, 2));
    samples.push_back(demo_chain_sample(f1, f2, false, false, tags, 3));
  }
  return samples;
}

double recitation_accuracy(ToyPolicy& policy, const std::vector<const Fact*>& facts,
                           const TagSet& tags) {
  if (facts.empty()) return 1.0;
  MockWebSearch no_search;
  RolloutParams params;
  params.gen.greedy = true;
  params.gen.max_segment_tokens = 32;
  params.gen.max_trace_tokens = 64;
  params.max_retrievals = 0;
  std::size_t correct = 0;
  for (const Fact* f : facts) {
    Rollout r = run_rollout(policy, no_search, "probe_" + f->id, recitation_probe(*f), params,
                            tags, StreamRng(0));
    const ReasoningTrace* trace = r.trace();
    if (trace && trace->final_answer && *trace->final_answer == f->object) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(facts.size());
}

SeedReport seed_internal_knowledge(ToyPolicy& policy, const WorldBundle& world,
                                   const SeedOptions& opts) {
  const TagSet& tags = policy.vocab().tags();
  std::vector<SFTSample> samples = recitation_samples(world, Channel::Internal, tags);
  if (opts.include_format_demos) {
    const auto demos = demo_samples(world, tags);
    for (std::size_t rep = 0; rep < std::max<std::size_t>(opts.demo_weight, 1); ++rep) {
      samples.insert(samples.end(), demos.begin(), demos.end());
    }
  }

  std::vector<const Fact*> internal_facts;
  for (const auto& f : world.graph.facts) {
    if (f.channel == Channel::Internal) internal_facts.push_back(&f);
  }

  SeedReport report;
  if (samples.empty()) {
    report.recitation_accuracy = recitation_accuracy(policy, internal_facts, tags);
    return report;  // nothing to seed
  }

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  bool target_hit = false;
  std::size_t rounds_past_target = 0;
  for (std::size_t round = 0; round < opts.max_rounds + opts.sharpen_rounds; ++round) {
    StreamRng rng = StreamRng::derive(world.config.seed, "seed_round", round);
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      std::vector<const SFTSample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + opts.batch_size); ++k) {
        batch.push_back(&samples[order[k]]);
      }
      const auto [loss, grad] = sft_loss_batch(policy, batch);
      if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite seeding loss");
      policy.mutable_weights() -= opts.learning_rate * grad;
    }
    report.rounds = round + 1;
    if (!target_hit) {
      report.recitation_accuracy = recitation_accuracy(policy, internal_facts, tags);
      target_hit = report.recitation_accuracy >= opts.target_accuracy;
      if (!target_hit && round + 1 >= opts.max_rounds) {
        throw ConvergenceFailure("recitation accuracy " +
                                 std::to_string(report.recitation_accuracy) +
                                 " below target after " + std::to_string(opts.max_rounds) +
                                 " rounds");
      }
    } else if (++rounds_past_target >= opts.sharpen_rounds) {
      break;
    }
  }
  if (!target_hit) {
    throw ConvergenceFailure("recitation accuracy below target");
  }
  report.recitation_accuracy = recitation_accuracy(policy, internal_facts, tags);
  return report;
}

GraphOraclePolicy::GraphOraclePolicy(const WorldBundle& world, const TagSet& tags, Mode mode)
    : world_(&world), tags_(tags), mode_(mode) {
  for (const auto& q : world.questions) {
    by_question_.emplace(join_tokens(tokenize(q.question, tags_)), &q);
  }
}

std::vector<std::string> GraphOraclePolicy::script_for(const QAExample& qa) const {
  const Fact* f1 = world_->graph.by_id(qa.fact1_id);
  const Fact* f2 = world_->graph.by_id(qa.fact2_id);
  std::vector<std::string> script;
  auto emit_words = [&script](std::initializer_list<std::string> words) {
    for (const auto& w : words) script.push_back(w);
  };
  auto emit_hop = [&](const Fact& f) {
    const bool internal_route = mode_ == Mode::InternalOnly || f.channel == Channel::Internal;
    if (internal_route) {
      emit_words({tags_.internal_open, f.object, tags_.internal_close});
    } else {
      emit_words({tags_.external_open, f.subject, f.relation, tags_.external_close});
    }
  };
  if (mode_ == Mode::InternalOnly &&
      (qa.hop1 != Channel::Internal || qa.hop2 != Channel::Internal)) {
    emit_words({tags_.answer_open, std::string(kUnknownAnswer), tags_.answer_close});
    return script;
  }
  if (f1 && f2) {
    emit_hop(*f1);
    emit_hop(*f2);
    emit_words({tags_.answer_open, f2->object, tags_.answer_close});
  } else {
    emit_words({tags_.answer_open, std::string(kUnknownAnswer), tags_.answer_close});
  }
  return script;
}

SegmentSample GraphOraclePolicy::sample_segment(const GenContext& ctx, const GenParams& params,
                                                StreamRng& rng) {
  const auto it = by_question_.find(join_tokens(ctx.question_tokens));
  std::vector<std::string> script;
  if (it != by_question_.end()) {
    script = script_for(*it->second);
  } else {
    script = {tags_.answer_open, std::string(kUnknownAnswer), tags_.answer_close};
  }
  ScriptedPolicy scripted(std::move(script), tags_);
  return scripted.sample_segment(ctx, params, rng);
}

void save_world(const WorldBundle& world, const std::string& dir) {
  std::filesystem::create_directories(dir);
  world.corpus.save(dir + "/corpus.jsonl");
  {
    std::ofstream out(dir + "/questions.jsonl");
    out << questions_to_jsonl(world.questions);
  }
  json graph;
  graph["entities"] = world.graph.entities;
  graph["relations"] = world.graph.relations;
  auto fact_to_json = [](const Fact& f) {
    return json{{"id", f.id},
                {"subject", f.subject},
                {"relation", f.relation},
                {"object", f.object},
                {"channel", std::string(to_string(f.channel))}};
  };
  graph["facts"] = json::array();
  for (const auto& f : world.graph.facts) graph["facts"].push_back(fact_to_json(f));
  graph["demo_facts"] = json::array();
  for (const auto& f : world.demo_facts) graph["demo_facts"].push_back(fact_to_json(f));
  std::ofstream out(dir + "/graph.json");
  out << graph.dump(2) << '\n';
}

std::string questions_to_jsonl(const std::vector<QAExample>& questions) {
  std::string out;
  for (const auto& q : questions) {
    json rec;
    rec["id"] = q.id;
    rec["question"] = q.question;
    rec["answer"] = q.golden_answer;
    rec["hop1"] = std::string(to_string(q.hop1));
    rec["hop2"] = std::string(to_string(q.hop2));
    rec["fact1"] = q.fact1_id;
    rec["fact2"] = q.fact2_id;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<QAExample> questions_from_jsonl(std::string_view jsonl) {
  std::vector<QAExample> out;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json rec = json::parse(line);
    QAExample qa;
    qa.id = rec.at("id").get<std::string>();
    qa.question = rec.at("question").get<std::string>();
    qa.golden_answer = rec.at("answer").get<std::string>();
    qa.hop1 = rec.value("hop1", "internal") == "external" ? Channel::External : Channel::Internal;
    qa.hop2 = rec.value("hop2", "internal") == "external" ? Channel::External : Channel::Internal;
    qa.fact1_id = rec.value("fact1", "");
    qa.fact2_id = rec.value("fact2", "");
    out.push_back(std::move(qa));
  }
  return out;
}

}  // namespace ragtrain
