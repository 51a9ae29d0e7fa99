#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sst/common.hpp"

namespace sst {

struct Sentence {
  std::size_t index = 0;
  std::string text;
  std::vector<std::string> tokens;

  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string id;
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool operator==(const Document&) const = default;
};

// A query/candidate pair. `label` is binary for classification data and a
// graded relevance for ranking data.
struct DocumentPair {
  Document query;
  Document candidate;
  int label = 0;

  std::string id() const { return query.id + "::" + candidate.id; }
  bool operator==(const DocumentPair&) const = default;
};

struct TokenizerOptions {
  // Rule-based suffix stripping, a stand-in for lemmatization.
  bool strip_suffixes = false;
};

// Splits on `.`, `!`, `?` followed by whitespace or end of text, and after
// the CJK terminals 。！？ unconditionally. Runs of terminals stay with the
// sentence they close. Fragments are trimmed; empty ones are dropped.
std::vector<std::string> split_sentences(std::string_view raw_text);

// Throws kEmptyDocument when no sentence survives.
Document segment(std::string_view raw_text, std::string id = {},
                 const TokenizerOptions& options = {});

// Builds a document from already-split sentences, without re-segmenting.
Document make_document(std::string id, const std::vector<std::string>& sentences,
                       const TokenizerOptions& options = {});

// Lowercases ASCII, splits on anything that is not a letter or digit. CJK
// ideographs become single-character tokens.
std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options = {});

std::string strip_suffix(std::string_view token);

// Pairs file: one JSON object per line with query_id, query_text, cand_id,
// cand_text and a 0/1 label. Optional query_sentences / cand_sentences
// string arrays are taken verbatim.
std::vector<DocumentPair> parse_pairs(std::istream& in, const TokenizerOptions& options = {});
std::vector<DocumentPair> load_pairs(const std::string& path, const TokenizerOptions& options = {});
void write_pairs(std::ostream& out, const std::vector<DocumentPair>& pairs);

// qid -> docid -> grade.
using Qrels = std::map<std::string, std::map<std::string, int>>;

// Whitespace separated `qid 0 docid grade`. A repeated (qid, docid) keeps
// the last grade and records a warning.
Qrels parse_qrels(std::istream& in, Diagnostics* diag = nullptr);
void write_qrels(std::ostream& out, const Qrels& qrels);

// One line of a TREC run: `qid Q0 docid rank score tag`.
struct RunEntry {
  std::string qid;
  std::string docid;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;

  bool operator==(const RunEntry&) const = default;
};

using RunFile = std::vector<RunEntry>;

RunFile parse_run(std::istream& in);
void write_run(std::ostream& out, const RunFile& run);

struct RankingTask {
  std::vector<Document> queries;
  std::map<std::string, Document> documents;
  // qid -> candidate doc ids in file order.
  std::map<std::string, std::vector<std::string>> pools;
  Qrels qrels;
  std::vector<std::string> warnings;
};

// topics: JSONL {query_id, text | sentences}; candidates: JSONL
// {query_id, doc_id, text | sentences}, a document listed for several
// queries may omit the text after its first appearance.
RankingTask load_ranking_task(const std::string& topics_path, const std::string& candidates_path,
                              const std::string& qrels_path, const TokenizerOptions& options = {});
RankingTask parse_ranking_task(std::istream& topics, std::istream& candidates, std::istream& qrels,
                               const TokenizerOptions& options = {});

struct SyntheticSpec {
  std::size_t topic_count = 8;
  // General (event independent) words per topic.
  std::size_t vocab_per_topic = 40;
  std::pair<std::size_t, std::size_t> sentences_per_topic_range{4, 9};
  // Probability that a negative candidate reuses the query's main-topic
  // event lexicon, so the main subtopic alone looks like a match.
  double shared_main_topic_rate = 0.6;
  // Probability that a negative candidate covers the query's complementary
  // topic with a conflicting event lexicon (otherwise a different topic).
  double negative_confusion_rate = 1.0;
  std::uint64_t seed = 1;

  std::size_t pair_count = 100;
  std::size_t candidates_per_query = 1;
  std::size_t events_per_topic = 6;
  std::size_t event_vocab = 10;
  std::size_t noise_vocab = 30;
  double noise_rate = 0.15;
  double event_word_rate = 0.35;
  std::pair<std::size_t, std::size_t> sentence_length_range{8, 14};
  // Topics that appear in only one document of the pair.
  std::size_t distractor_topics = 2;
  // Prepended to every generated document id.
  std::string id_prefix;
};

// Ground-truth topic id per sentence of each document.
struct TopicMap {
  std::vector<int> query;
  std::vector<int> candidate;

  bool operator==(const TopicMap&) const = default;
};

struct SyntheticCorpus {
  std::vector<DocumentPair> pairs;
  std::vector<TopicMap> topics;
};

void validate(const SyntheticSpec& spec);
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Ranking view of a synthetic corpus: queries deduplicated, candidate pools
// and qrels taken from pair labels.
RankingTask ranking_task_from_pairs(const std::vector<DocumentPair>& pairs);

// Document-frequency and collection statistics over a set of documents;
// supplies IDF weights and the background language model.
class CorpusStats {
 public:
  CorpusStats() = default;

  void add(const Document& document);
  static CorpusStats from_pairs(const std::vector<DocumentPair>& pairs);

  std::size_t documents() const { return documents_; }
  std::size_t total_tokens() const { return total_tokens_; }
  std::size_t vocabulary_size() const { return collection_frequency_.size(); }

  // ln((N + 1) / (df + 1)) + 1, never zero.
  double idf(const std::string& token) const;
  // Collection probability p(w | corpus); 0 for unseen words.
  double background(const std::string& token) const;

 private:
  std::size_t documents_ = 0;
  std::size_t total_tokens_ = 0;
  std::unordered_map<std::string, std::size_t> document_frequency_;
  std::unordered_map<std::string, std::size_t> collection_frequency_;
};

// Concatenated tokens of the selected sentences, in the given order.
std::vector<std::string> gather_tokens(const Document& document, const std::vector<std::size_t>& indices);
std::vector<std::string> all_tokens(const Document& document);

}  // namespace sst
