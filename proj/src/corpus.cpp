#include "sst/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sst {

namespace {

using json = nlohmann::json;

// Decodes one UTF-8 code point starting at `pos`; advances `pos`. Invalid
// bytes decode as themselves.
char32_t next_code_point(std::string_view text, std::size_t& pos) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  std::size_t length = 1;
  char32_t cp = lead;
  if (lead >= 0xF0) {
    length = 4;
    cp = lead & 0x07;
  } else if (lead >= 0xE0) {
    length = 3;
    cp = lead & 0x0F;
  } else if (lead >= 0xC0) {
    length = 2;
    cp = lead & 0x1F;
  }
  if (length == 1 || pos + length > text.size()) {
    ++pos;
    return lead;
  }
  for (std::size_t k = 1; k < length; ++k) {
    cp = (cp << 6) | (static_cast<unsigned char>(text[pos + k]) & 0x3F);
  }
  pos += length;
  return cp;
}

bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
         cp == 0x3000 || cp == 0xA0;
}

bool is_latin_terminal(char32_t cp) { return cp == '.' || cp == '!' || cp == '?'; }
bool is_cjk_terminal(char32_t cp) { return cp == 0x3002 || cp == 0xFF01 || cp == 0xFF1F; }

bool is_cjk_ideograph(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF);
}

bool is_separator(char32_t cp) {
  if (cp < 0x80) {
    const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    return !alnum;
  }
  // General and CJK punctuation, full-width ASCII punctuation.
  return (cp >= 0x2000 && cp <= 0x206F) || (cp >= 0x3000 && cp <= 0x303F) ||
         (cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
         (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65) || cp == 0xA0;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string> string_array(const json& value, std::string_view field, std::size_t line) {
  if (!value.is_array()) {
    throw Error(ErrorKind::kParseError,
                "line " + std::to_string(line) + ": field '" + std::string(field) + "' must be an array",
                line);
  }
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw Error(ErrorKind::kParseError,
                  "line " + std::to_string(line) + ": '" + std::string(field) + "' must hold strings",
                  line);
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string required_string(const json& object, const char* field, std::size_t line) {
  const auto it = object.find(field);
  if (it == object.end() || !it->is_string()) {
    throw Error(ErrorKind::kParseError,
                "line " + std::to_string(line) + ": missing string field '" + field + "'", line);
  }
  return it->get<std::string>();
}

// Document from `<prefix>_sentences` when present, else `<text_field>`.
Document document_field(const json& object, const std::string& id, const char* text_field,
                        const char* sentences_field, std::size_t line, const TokenizerOptions& options) {
  try {
    if (const auto it = object.find(sentences_field); it != object.end()) {
      return make_document(id, string_array(*it, sentences_field, line), options);
    }
    return segment(required_string(object, text_field, line), id, options);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kEmptyDocument && e.line() == 0) {
      throw Error(ErrorKind::kEmptyDocument,
                  "line " + std::to_string(line) + ": document '" + id + "' has no sentences", line);
    }
    throw;
  }
}

json parse_line(const std::string& text, std::size_t line) {
  json object;
  try {
    object = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kParseError, "line " + std::to_string(line) + ": " + e.what(), line);
  }
  if (!object.is_object()) {
    throw Error(ErrorKind::kParseError, "line " + std::to_string(line) + ": expected a JSON object",
                line);
  }
  return object;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + path + "'");
  return in;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view raw_text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t pos = 0;
  auto flush = [&](std::size_t end) {
    const auto piece = trim(raw_text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  while (pos < raw_text.size()) {
    const char32_t cp = next_code_point(raw_text, pos);
    if (is_latin_terminal(cp) || is_cjk_terminal(cp)) {
      bool cjk = is_cjk_terminal(cp);
      std::size_t end = pos;
      while (end < raw_text.size()) {
        std::size_t probe = end;
        const char32_t next = next_code_point(raw_text, probe);
        if (!is_latin_terminal(next) && !is_cjk_terminal(next)) break;
        cjk = cjk || is_cjk_terminal(next);
        end = probe;
      }
      bool boundary = cjk || end == raw_text.size();
      if (!boundary) {
        std::size_t probe = end;
        boundary = is_space(next_code_point(raw_text, probe));
      }
      pos = end;
      if (boundary) flush(end);
    }
  }
  flush(raw_text.size());
  return out;
}

Document segment(std::string_view raw_text, std::string id, const TokenizerOptions& options) {
  if (trim(raw_text).empty()) throw Error(ErrorKind::kEmptyDocument, "document text is empty");
  auto pieces = split_sentences(raw_text);
  if (pieces.empty()) throw Error(ErrorKind::kEmptyDocument, "no sentence survives segmentation");
  return make_document(std::move(id), pieces, options);
}

Document make_document(std::string id, const std::vector<std::string>& sentences,
                       const TokenizerOptions& options) {
  if (sentences.empty()) throw Error(ErrorKind::kEmptyDocument, "document has no sentences");
  Document doc;
  doc.id = std::move(id);
  doc.sentences.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    doc.sentences.push_back({i, sentences[i], tokenize(sentences[i], options)});
  }
  return doc;
}

std::string strip_suffix(std::string_view token) {
  std::string t(token);
  if (t.size() > 4 && ends_with(t, "ies")) return t.substr(0, t.size() - 3) + "y";
  if (ends_with(t, "sses")) return t.substr(0, t.size() - 2);
  if (t.size() > 5 && ends_with(t, "ing")) return t.substr(0, t.size() - 3);
  if (t.size() > 4 && ends_with(t, "ed")) return t.substr(0, t.size() - 2);
  if (t.size() > 3 && ends_with(t, "s") && !ends_with(t, "ss") && !ends_with(t, "us")) {
    return t.substr(0, t.size() - 1);
  }
  return t;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerOptions& options) {
  std::vector<std::string> tokens;
  std::string current;
  auto emit = [&] {
    if (current.empty()) return;
    tokens.push_back(options.strip_suffixes ? strip_suffix(current) : current);
    current.clear();
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t begin = pos;
    const char32_t cp = next_code_point(text, pos);
    if (is_separator(cp)) {
      emit();
    } else if (is_cjk_ideograph(cp)) {
      emit();
      tokens.emplace_back(text.substr(begin, pos - begin));
    } else if (cp < 0x80) {
      current.push_back(static_cast<char>(cp >= 'A' && cp <= 'Z' ? cp - 'A' + 'a' : cp));
    } else {
      current.append(text.substr(begin, pos - begin));
    }
  }
  emit();
  return tokens;
}

std::vector<DocumentPair> parse_pairs(std::istream& in, const TokenizerOptions& options) {
  std::vector<DocumentPair> pairs;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    const json object = parse_line(text, line);
    const auto label_it = object.find("label");
    if (label_it == object.end() || !label_it->is_number()) {
      throw Error(ErrorKind::kParseError,
                  "line " + std::to_string(line) + ": missing numeric field 'label'", line);
    }
    const double label = label_it->get<double>();
    if (label != 0.0 && label != 1.0) {
      throw Error(ErrorKind::kLabelError,
                  "line " + std::to_string(line) + ": label must be 0 or 1", line);
    }
    DocumentPair pair;
    pair.query = document_field(object, required_string(object, "query_id", line), "query_text",
                                "query_sentences", line, options);
    pair.candidate = document_field(object, required_string(object, "cand_id", line), "cand_text",
                                    "cand_sentences", line, options);
    pair.label = static_cast<int>(label);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<DocumentPair> load_pairs(const std::string& path, const TokenizerOptions& options) {
  auto in = open_input(path);
  return parse_pairs(in, options);
}

void write_pairs(std::ostream& out, const std::vector<DocumentPair>& pairs) {
  for (const auto& pair : pairs) {
    json object;
    object["query_id"] = pair.query.id;
    object["cand_id"] = pair.candidate.id;
    object["label"] = pair.label;
    json qs = json::array();
    for (const auto& s : pair.query.sentences) qs.push_back(s.text);
    json ds = json::array();
    for (const auto& s : pair.candidate.sentences) ds.push_back(s.text);
    object["query_sentences"] = std::move(qs);
    object["cand_sentences"] = std::move(ds);
    out << object.dump() << '\n';
  }
}

Qrels parse_qrels(std::istream& in, Diagnostics* diag) {
  Qrels qrels;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    std::istringstream fields(text);
    std::string qid, iteration, docid, grade_text, extra;
    if (!(fields >> qid >> iteration >> docid >> grade_text) || (fields >> extra)) {
      throw Error(ErrorKind::kParseError,
                  "line " + std::to_string(line) + ": expected 'qid 0 docid grade'", line);
    }
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument(grade_text);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParseError,
                  "line " + std::to_string(line) + ": grade '" + grade_text + "' is not an integer",
                  line);
    }
    auto& judged = qrels[qid];
    if (const auto it = judged.find(docid); it != judged.end()) {
      warn(diag, "qrels line " + std::to_string(line) + ": duplicate judgment for (" + qid + ", " +
                     docid + "), keeping the last grade");
    }
    judged[docid] = grade;
  }
  return qrels;
}

void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, judged] : qrels) {
    for (const auto& [docid, grade] : judged) out << qid << " 0 " << docid << ' ' << grade << '\n';
  }
}

RunFile parse_run(std::istream& in) {
  RunFile run;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (trim(text).empty()) continue;
    std::istringstream fields(text);
    RunEntry entry;
    std::string q0, rank_text, score_text, extra;
    if (!(fields >> entry.qid >> q0 >> entry.docid >> rank_text >> score_text >> entry.tag) || (fields >> extra)) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line) + ": expected 'qid Q0 docid rank score tag'",
                  line);
    }
    try {
      entry.rank = static_cast<std::size_t>(std::stoul(rank_text));
      entry.score = std::stod(score_text);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(line) + ": bad rank or score", line);
    }
    run.push_back(std::move(entry));
  }
  return run;
}

void write_run(std::ostream& out, const RunFile& run) {
  for (const auto& e : run) {
    out << e.qid << " Q0 " << e.docid << ' ' << e.rank << ' ' << format_double(e.score) << ' ' << e.tag << '\n';
  }
}

RankingTask parse_ranking_task(std::istream& topics, std::istream& candidates, std::istream& qrels,
                               const TokenizerOptions& options) {
  RankingTask task;
  std::string text;
  std::size_t line = 0;
  while (std::getline(topics, text)) {
    ++line;
    if (trim(text).empty()) continue;
    const json object = parse_line(text, line);
    task.queries.push_back(document_field(object, required_string(object, "query_id", line), "text",
                                          "sentences", line, options));
  }
  line = 0;
  while (std::getline(candidates, text)) {
    ++line;
    if (trim(text).empty()) continue;
    const json object = parse_line(text, line);
    const auto qid = required_string(object, "query_id", line);
    const auto docid = required_string(object, "doc_id", line);
    if (!task.documents.contains(docid)) {
      task.documents.emplace(docid, document_field(object, docid, "text", "sentences", line, options));
    }
    task.pools[qid].push_back(docid);
  }
  Diagnostics diag;
  task.qrels = parse_qrels(qrels, &diag);
  task.warnings = std::move(diag.warnings);
  if (task.qrels.empty()) throw Error(ErrorKind::kEmptyJudgments, "qrels contain no judgments");
  for (const auto& [qid, judged] : task.qrels) {
    for (const auto& [docid, grade] : judged) {
      if (!task.documents.contains(docid)) {
        throw Error(ErrorKind::kUnknownDocId,
                    "qrels reference unknown document '" + docid + "' for query '" + qid + "'");
      }
    }
  }
  return task;
}

RankingTask load_ranking_task(const std::string& topics_path, const std::string& candidates_path,
                              const std::string& qrels_path, const TokenizerOptions& options) {
  auto topics = open_input(topics_path);
  auto candidates = open_input(candidates_path);
  auto qrels = open_input(qrels_path);
  return parse_ranking_task(topics, candidates, qrels, options);
}

RankingTask ranking_task_from_pairs(const std::vector<DocumentPair>& pairs) {
  RankingTask task;
  std::set<std::string> seen_queries;
  for (const auto& pair : pairs) {
    if (seen_queries.insert(pair.query.id).second) task.queries.push_back(pair.query);
    task.documents.emplace(pair.candidate.id, pair.candidate);
    task.pools[pair.query.id].push_back(pair.candidate.id);
    task.qrels[pair.query.id][pair.candidate.id] = pair.label;
  }
  return task;
}

// ---------------------------------------------------------------------------
// Synthetic planted-subtopic corpus.

void validate(const SyntheticSpec& spec) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kSpecError, what); };
  auto probability = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  if (spec.topic_count < 2) fail("topic_count must be at least 2");
  if (spec.vocab_per_topic < 1) fail("vocab_per_topic must be positive");
  const auto [lo, hi] = spec.sentences_per_topic_range;
  if (lo < 1 || lo > hi) fail("sentences_per_topic_range must satisfy 1 <= min <= max");
  const auto [len_lo, len_hi] = spec.sentence_length_range;
  if (len_lo < 1 || len_lo > len_hi) fail("sentence_length_range must satisfy 1 <= min <= max");
  probability(spec.shared_main_topic_rate, "shared_main_topic_rate");
  probability(spec.negative_confusion_rate, "negative_confusion_rate");
  probability(spec.noise_rate, "noise_rate");
  probability(spec.event_word_rate, "event_word_rate");
  if (spec.noise_rate + spec.event_word_rate > 1.0) fail("noise_rate + event_word_rate exceeds 1");
  if (spec.events_per_topic < 2) fail("events_per_topic must be at least 2 to build conflicting events");
  if (spec.event_word_rate > 0.0 && spec.event_vocab < 1) fail("event_vocab must be positive");
  if (spec.noise_rate > 0.0 && spec.noise_vocab < 1) fail("noise_vocab must be positive");
  if (spec.pair_count < 1) fail("pair_count must be positive");
  if (spec.candidates_per_query < 1) fail("candidates_per_query must be positive");
}

namespace {

struct Block {
  int topic;
  std::size_t event;
  std::size_t size;
};

class SyntheticWriter {
 public:
  SyntheticWriter(const SyntheticSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  std::size_t block_size(bool main) {
    const auto [lo, hi] = spec_.sentences_per_topic_range;
    const std::size_t from = main ? (lo + hi + 1) / 2 : lo;
    return from + rng_.index(hi - from + 1);
  }

  std::size_t other_event(std::size_t event) {
    const std::size_t shift = 1 + rng_.index(spec_.events_per_topic - 1);
    return (event + shift) % spec_.events_per_topic;
  }

  // Up to `count` distinct topics outside `excluded`, preferring ones not in
  // `avoid`.
  std::vector<int> pick_topics(const std::set<int>& excluded, const std::set<int>& avoid,
                               std::size_t count) {
    std::vector<int> preferred, fallback;
    for (int t = 0; t < static_cast<int>(spec_.topic_count); ++t) {
      if (excluded.contains(t)) continue;
      (avoid.contains(t) ? fallback : preferred).push_back(t);
    }
    rng_.shuffle(preferred);
    rng_.shuffle(fallback);
    preferred.insert(preferred.end(), fallback.begin(), fallback.end());
    if (preferred.size() > count) preferred.resize(count);
    return preferred;
  }

  std::string sentence(int topic, std::size_t event) {
    const auto [len_lo, len_hi] = spec_.sentence_length_range;
    const std::size_t length = len_lo + rng_.index(len_hi - len_lo + 1);
    std::string text;
    for (std::size_t w = 0; w < length; ++w) {
      const double r = rng_.uniform();
      std::string word;
      if (r < spec_.noise_rate) {
        word = "n" + std::to_string(rng_.index(spec_.noise_vocab));
      } else if (r < spec_.noise_rate + spec_.event_word_rate) {
        word = "t" + std::to_string(topic) + "e" + std::to_string(event) + "x" +
               std::to_string(rng_.index(spec_.event_vocab));
      } else {
        word = "t" + std::to_string(topic) + "g" + std::to_string(rng_.index(spec_.vocab_per_topic));
      }
      if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      if (w > 0) text.push_back(' ');
      text += word;
    }
    text.push_back('.');
    return text;
  }

  std::pair<Document, std::vector<int>> document(std::string id, std::vector<Block> blocks) {
    rng_.shuffle(blocks);
    std::vector<std::string> sentences;
    std::vector<int> topics;
    for (const auto& block : blocks) {
      for (std::size_t s = 0; s < block.size; ++s) {
        sentences.push_back(sentence(block.topic, block.event));
        topics.push_back(block.topic);
      }
    }
    return {make_document(std::move(id), sentences), std::move(topics)};
  }

 private:
  const SyntheticSpec& spec_;
  Rng& rng_;
};

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  SyntheticWriter writer(spec, rng);
  SyntheticCorpus corpus;
  const std::size_t per_query = spec.candidates_per_query;
  const std::size_t query_count = (spec.pair_count + per_query - 1) / per_query;

  for (std::size_t qi = 0; qi < query_count; ++qi) {
    const int main_topic = static_cast<int>(rng.index(spec.topic_count));
    int comp_topic = static_cast<int>(rng.index(spec.topic_count - 1));
    if (comp_topic >= main_topic) ++comp_topic;
    const std::size_t main_event = rng.index(spec.events_per_topic);
    const std::size_t comp_event = rng.index(spec.events_per_topic);

    const std::set<int> core{main_topic, comp_topic};
    const auto query_distractors = writer.pick_topics(core, {}, spec.distractor_topics);
    const std::set<int> query_distractor_set(query_distractors.begin(), query_distractors.end());

    std::vector<Block> query_blocks{{main_topic, main_event, writer.block_size(true)},
                                    {comp_topic, comp_event, writer.block_size(false)}};
    for (int t : query_distractors) {
      query_blocks.push_back({t, rng.index(spec.events_per_topic), writer.block_size(false)});
    }
    auto [query, query_topics] = writer.document(spec.id_prefix + "q" + std::to_string(qi), query_blocks);

    for (std::size_t j = 0; j < per_query && corpus.pairs.size() < spec.pair_count; ++j) {
      const bool positive = per_query == 1 ? qi % 2 == 0 : j % 2 == 0;
      std::vector<Block> blocks;
      std::set<int> used = core;
      if (positive) {
        blocks.push_back({main_topic, main_event, writer.block_size(true)});
        blocks.push_back({comp_topic, comp_event, writer.block_size(false)});
      } else {
        const bool shared_event = rng.bernoulli(spec.shared_main_topic_rate);
        blocks.push_back({main_topic, shared_event ? main_event : writer.other_event(main_event),
                          writer.block_size(true)});
        const bool confusing = rng.bernoulli(spec.negative_confusion_rate);
        std::vector<int> replacement;
        if (!confusing) {
          std::set<int> excluded = core;
          excluded.insert(query_distractors.begin(), query_distractors.end());
          replacement = writer.pick_topics(excluded, {}, 1);
        }
        if (replacement.empty()) {
          blocks.push_back({comp_topic, writer.other_event(comp_event), writer.block_size(false)});
        } else {
          blocks.push_back({replacement[0], rng.index(spec.events_per_topic), writer.block_size(false)});
          used.insert(replacement[0]);
        }
      }
      for (int t : writer.pick_topics(used, query_distractor_set, spec.distractor_topics)) {
        blocks.push_back({t, rng.index(spec.events_per_topic), writer.block_size(false)});
      }
      auto [candidate, candidate_topics] =
          writer.document(spec.id_prefix + "q" + std::to_string(qi) + "c" + std::to_string(j), blocks);
      corpus.pairs.push_back({query, std::move(candidate), positive ? 1 : 0});
      corpus.topics.push_back({query_topics, std::move(candidate_topics)});
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------

void CorpusStats::add(const Document& document) {
  ++documents_;
  std::set<std::string> seen;
  for (const auto& sentence : document.sentences) {
    for (const auto& token : sentence.tokens) {
      ++collection_frequency_[token];
      ++total_tokens_;
      if (seen.insert(token).second) ++document_frequency_[token];
    }
  }
}

CorpusStats CorpusStats::from_pairs(const std::vector<DocumentPair>& pairs) {
  CorpusStats stats;
  std::set<std::string> seen;
  for (const auto& pair : pairs) {
    if (seen.insert(pair.query.id).second) stats.add(pair.query);
    if (seen.insert(pair.candidate.id).second) stats.add(pair.candidate);
  }
  return stats;
}

double CorpusStats::idf(const std::string& token) const {
  const auto it = document_frequency_.find(token);
  const double df = it == document_frequency_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((static_cast<double>(documents_) + 1.0) / (df + 1.0)) + 1.0;
}

double CorpusStats::background(const std::string& token) const {
  if (total_tokens_ == 0) return 0.0;
  const auto it = collection_frequency_.find(token);
  if (it == collection_frequency_.end()) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(total_tokens_);
}

std::vector<std::string> gather_tokens(const Document& document, const std::vector<std::size_t>& indices) {
  std::vector<std::string> out;
  for (std::size_t i : indices) {
    const auto& tokens = document.sentences.at(i).tokens;
    out.insert(out.end(), tokens.begin(), tokens.end());
  }
  return out;
}

std::vector<std::string> all_tokens(const Document& document) {
  std::vector<std::string> out;
  for (const auto& sentence : document.sentences) {
    out.insert(out.end(), sentence.tokens.begin(), sentence.tokens.end());
  }
  return out;
}

}  // namespace sst
