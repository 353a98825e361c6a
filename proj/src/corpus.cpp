#include "ragtrain/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "ragtrain/text.hpp"

namespace ragtrain {

using nlohmann::json;

Corpus::Corpus(std::vector<Passage> passages, Bm25Params params)
    : passages_(std::move(passages)), bm25_(params) {
  std::unordered_set<std::string> ids;
  for (const auto& p : passages_) {
    if (p.id.empty() || p.title.empty() || p.text.empty()) {
      throw CorpusError("passage fields id/title/text must be non-empty (id='" + p.id + "')");
    }
    if (!ids.insert(p.id).second) throw DuplicateIdError("duplicate passage id: " + p.id);
  }
  build_index();
}

Corpus Corpus::ingest(const std::string& path, Bm25Params params) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_jsonl(buf.str(), params);
}

Corpus Corpus::from_jsonl(std::string_view jsonl, Bm25Params params) {
  std::vector<Passage> passages;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    std::size_t end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const std::string_view line = jsonl.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == jsonl.size()) break;
      continue;
    }
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      throw CorpusParseError("malformed record", line_no);
    }
    if (!rec.contains("id") || !rec.contains("title") || !rec.contains("contents")) {
      throw CorpusParseError("record missing id/title/contents", line_no);
    }
    Passage p;
    try {
      p.id = rec.at("id").get<std::string>();
      p.title = rec.at("title").get<std::string>();
      p.text = rec.at("contents").get<std::string>();
    } catch (const json::exception&) {
      throw CorpusParseError("record fields must be strings", line_no);
    }
    if (!ids.insert(p.id).second) throw DuplicateIdError("duplicate passage id: " + p.id);
    passages.push_back(std::move(p));
    if (end == jsonl.size()) break;
  }
  return Corpus(std::move(passages), params);
}

void Corpus::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path);
  for (const auto& p : passages_) {
    json rec = {{"id", p.id}, {"title", p.title}, {"contents", p.text}};
    out << rec.dump() << '\n';
  }
}

std::vector<std::string> Corpus::passage_terms(const Passage& p) const {
  auto terms = normalize_words(p.title);
  auto body = normalize_words(p.text);
  terms.insert(terms.end(), body.begin(), body.end());
  return terms;
}

void Corpus::build_index() {
  index_.clear();
  doc_lengths_.assign(passages_.size(), 0);
  std::size_t total_len = 0;
  for (std::size_t d = 0; d < passages_.size(); ++d) {
    const auto terms = passage_terms(passages_[d]);
    doc_lengths_[d] = terms.size();
    total_len += terms.size();
    std::unordered_map<std::string, std::size_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (const auto& [term, count] : tf) {
      index_[term].push_back(Posting{d, count});
    }
  }
  avg_doc_length_ = passages_.empty() ? 0.0 : static_cast<double>(total_len) / passages_.size();
  for (auto& [term, postings] : index_) {
    std::sort(postings.begin(), postings.end(),
              [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
  }
}

const Passage* Corpus::find(std::string_view id) const {
  for (const auto& p : passages_) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::vector<ScoredPassage> Corpus::retrieve(std::string_view query, std::size_t k) const {
  if (k < 1) throw CorpusError("retrieve requires k >= 1");
  const auto terms = normalize_words(query);
  if (terms.empty()) throw EmptyQueryError("query has no terms after normalization");

  const double n_docs = static_cast<double>(passages_.size());
  std::vector<double> scores(passages_.size(), 0.0);
  for (const auto& term : terms) {
    const auto it = index_.find(term);
    if (it == index_.end()) continue;
    const auto& postings = it->second;
    const double df = static_cast<double>(postings.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& post : postings) {
      const double tf = static_cast<double>(post.tf);
      const double norm_len =
          avg_doc_length_ > 0.0 ? static_cast<double>(doc_lengths_[post.doc]) / avg_doc_length_ : 1.0;
      const double denom = tf + bm25_.k1 * (1.0 - bm25_.b + bm25_.b * norm_len);
      scores[post.doc] += idf * tf * (bm25_.k1 + 1.0) / denom;
    }
  }

  std::vector<std::size_t> hits;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (scores[d] > 0.0) hits.push_back(d);
  }
  std::sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return passages_[a].id < passages_[b].id;
  });
  if (hits.size() > k) hits.resize(k);

  std::vector<ScoredPassage> out;
  out.reserve(hits.size());
  for (const std::size_t d : hits) out.push_back(ScoredPassage{&passages_[d], scores[d]});
  return out;
}

std::string format_document_entries(const std::vector<ScoredPassage>& passages) {
  if (passages.empty()) throw CorpusError("format_documents requires a nonempty passage list");
  std::string out;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i > 0) out += ' ';
    out += "(" + std::to_string(i + 1) + ") " + passages[i].passage->title + " — " +
           passages[i].passage->text;
  }
  return out;
}

std::string format_documents(const std::vector<ScoredPassage>& passages, const TagSet& tags) {
  return tags.document_open + " " + format_document_entries(passages) + " " + tags.document_close;
}

}  // namespace ragtrain
