#include "sst/evalcli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sst {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Metrics

ClassificationReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                            double threshold) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kLengthMismatch, std::to_string(scores.size()) + " predictions for " +
                                                std::to_string(labels.size()) + " labels");
  }
  ClassificationReport r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] > 0;
    if (predicted && actual) ++r.tp;
    if (predicted && !actual) ++r.fp;
    if (!predicted && !actual) ++r.tn;
    if (!predicted && actual) ++r.fn;
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  r.accuracy = ratio(r.tp + r.tn, scores.size());
  r.precision = ratio(r.tp, r.tp + r.fp);
  r.recall = ratio(r.tp, r.tp + r.fn);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

double ndcg_at(const std::vector<int>& ranked_grades, std::vector<int> judged_grades, std::size_t k) {
  auto dcg = [k](const std::vector<int>& grades) {
    double sum = 0.0;
    for (std::size_t r = 0; r < std::min(k, grades.size()); ++r) {
      if (grades[r] > 0) sum += static_cast<double>(grades[r]) / std::log2(static_cast<double>(r) + 2.0);
    }
    return sum;
  };
  std::sort(judged_grades.begin(), judged_grades.end(), std::greater<>());
  const double ideal = dcg(judged_grades);
  return ideal > 0.0 ? dcg(ranked_grades) / ideal : 0.0;
}

RankingReport ndcg(const RunFile& run, const Qrels& qrels, const std::vector<std::size_t>& cutoffs) {
  std::map<std::string, std::vector<const RunEntry*>> by_query;
  for (const auto& entry : run) by_query[entry.qid].push_back(&entry);
  RankingReport report;
  for (std::size_t k : cutoffs) report.ndcg_at[k] = 0.0;
  if (by_query.empty()) return report;
  for (auto& [qid, entries] : by_query) {
    const auto judged = qrels.find(qid);
    if (judged == qrels.end()) throw Error(ErrorKind::kMissingQuery, "query " + qid + " has no judgments");
    std::stable_sort(entries.begin(), entries.end(), [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
    std::vector<int> ranked;
    for (const auto* e : entries) {
      const auto it = judged->second.find(e->docid);
      ranked.push_back(it == judged->second.end() ? 0 : it->second);
    }
    std::vector<int> grades;
    for (const auto& [doc, grade] : judged->second) grades.push_back(grade);
    for (std::size_t k : cutoffs) report.ndcg_at[k] += ndcg_at(ranked, grades, k);
  }
  for (auto& [k, value] : report.ndcg_at) value /= static_cast<double>(by_query.size());
  return report;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kLengthMismatch, "partitions differ in length");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, row_sum = 0.0, col_sum = 0.0;
  for (const auto& [key, count] : joint) index += pairs(count);
  for (const auto& [key, count] : rows) row_sum += pairs(count);
  for (const auto& [key, count] : cols) col_sum += pairs(count);
  const double expected = row_sum * col_sum / pairs(static_cast<double>(n));
  const double maximum = 0.5 * (row_sum + col_sum);
  if (maximum == expected) {
    // Both partitions are trivial in the same way iff they agree.
    return joint.size() == rows.size() && joint.size() == cols.size() ? 1.0 : 0.0;
  }
  return (index - expected) / (maximum - expected);
}

Document truncate_receptive_field(const Document& document, std::size_t limit) {
  if (limit < 1) throw Error(ErrorKind::kConfigError, "receptive field must be at least 1");
  Document out{document.id, {}};
  const std::size_t keep = std::min(limit, document.size());
  out.sentences.assign(document.sentences.begin(), document.sentences.begin() + static_cast<std::ptrdiff_t>(keep));
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& name, const Enum (&values)[N], const char* what) {
  for (Enum v : values) {
    if (name == to_string(v)) return v;
  }
  throw Error(ErrorKind::kConfigError, std::string("unknown ") + what + " '" + name + "'");
}

constexpr TaskKind kTasks[] = {TaskKind::kClassify, TaskKind::kRank};
constexpr ClusteringKind kClusterings[] = {ClusteringKind::kDirect, ClusteringKind::kAdaptive};
constexpr AggregationKind kAggregations[] = {AggregationKind::kTemporal, AggregationKind::kStatic,
                                             AggregationKind::kSpatial};

// Rejects keys of `patch` that the defaults do not have.
void check_keys(const json& patch, const json& defaults, const std::string& where) {
  if (!patch.is_object()) throw Error(ErrorKind::kConfigError, where + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    if (!defaults.contains(key)) throw Error(ErrorKind::kConfigError, "unknown config key '" + where + key + "'");
    if (defaults[key].is_object()) check_keys(value, defaults[key], where + key + ".");
  }
}

}  // namespace

const char* to_string(TaskKind kind) { return kind == TaskKind::kClassify ? "classify" : "rank"; }
const char* to_string(ClusteringKind kind) { return kind == ClusteringKind::kDirect ? "direct" : "adaptive"; }
const char* to_string(AggregationKind kind) {
  switch (kind) {
    case AggregationKind::kTemporal: return "temporal";
    case AggregationKind::kStatic: return "static";
    case AggregationKind::kSpatial: return "spatial";
  }
  return "unknown";
}

ordered_json to_json(const SyntheticSpec& s) {
  ordered_json j;
  j["topic_count"] = s.topic_count;
  j["vocab_per_topic"] = s.vocab_per_topic;
  j["sentences_per_topic_range"] = {s.sentences_per_topic_range.first, s.sentences_per_topic_range.second};
  j["shared_main_topic_rate"] = s.shared_main_topic_rate;
  j["negative_confusion_rate"] = s.negative_confusion_rate;
  j["seed"] = s.seed;
  j["pair_count"] = s.pair_count;
  j["candidates_per_query"] = s.candidates_per_query;
  j["events_per_topic"] = s.events_per_topic;
  j["event_vocab"] = s.event_vocab;
  j["noise_vocab"] = s.noise_vocab;
  j["noise_rate"] = s.noise_rate;
  j["event_word_rate"] = s.event_word_rate;
  j["sentence_length_range"] = {s.sentence_length_range.first, s.sentence_length_range.second};
  j["distractor_topics"] = s.distractor_topics;
  j["id_prefix"] = s.id_prefix;
  return j;
}

SyntheticSpec synthetic_spec_from_json(const json& patch) {
  try {
    json j = json(to_json(SyntheticSpec{}));
    check_keys(patch, j, "");
    j.merge_patch(patch);
    SyntheticSpec s;
    s.topic_count = j.at("topic_count").get<std::size_t>();
    s.vocab_per_topic = j.at("vocab_per_topic").get<std::size_t>();
    const auto range = j.at("sentences_per_topic_range").get<std::vector<std::size_t>>();
    const auto lengths = j.at("sentence_length_range").get<std::vector<std::size_t>>();
    if (range.size() != 2 || lengths.size() != 2) throw Error(ErrorKind::kSpecError, "ranges need two values");
    s.sentences_per_topic_range = {range[0], range[1]};
    s.sentence_length_range = {lengths[0], lengths[1]};
    s.shared_main_topic_rate = j.at("shared_main_topic_rate").get<double>();
    s.negative_confusion_rate = j.at("negative_confusion_rate").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.pair_count = j.at("pair_count").get<std::size_t>();
    s.candidates_per_query = j.at("candidates_per_query").get<std::size_t>();
    s.events_per_topic = j.at("events_per_topic").get<std::size_t>();
    s.event_vocab = j.at("event_vocab").get<std::size_t>();
    s.noise_vocab = j.at("noise_vocab").get<std::size_t>();
    s.noise_rate = j.at("noise_rate").get<double>();
    s.event_word_rate = j.at("event_word_rate").get<double>();
    s.distractor_topics = j.at("distractor_topics").get<std::size_t>();
    s.id_prefix = j.at("id_prefix").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kSpecError, std::string("synthetic spec: ") + e.what());
  }
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["task"] = to_string(c.task);
  j["receptive_field"] = c.receptive_field;
  j["expected_cluster_size"] = c.expected_cluster_size;
  j["inference_pool"] = c.inference_pool;
  j["sampler"] = to_string(c.sampler);
  j["clustering"] = to_string(c.clustering);
  j["aggregation"] = to_string(c.aggregation);
  j["lambda"] = c.lambda;
  j["k"] = c.k;
  j["token_budget"] = c.token_budget;
  j["epochs"] = c.epochs;
  j["seeds"] = c.seeds;
  j["threshold"] = c.threshold;
  j["ndcg_cutoffs"] = c.ndcg_cutoffs;
  j["matcher"] = {{"learning_rate", c.matcher.learning_rate},
                  {"batch_size", c.matcher.batch_size},
                  {"temperature", c.matcher.temperature},
                  {"negatives", c.matcher.negatives}};
  j["head"] = {{"learning_rate", c.head.learning_rate}, {"epochs", c.head.epochs},
               {"batch_size", c.head.batch_size},
               {"hidden", c.head.hidden},               {"max_clusters", c.head.max_clusters},
               {"keep_top", c.head.keep_top},           {"embedding_dim", c.head.embedding_dim},
               {"epsilon_js", c.head.epsilon_js},       {"enable_lp", c.head.enable_lp},
               {"enable_ln", c.head.enable_ln},         {"train_pairs", c.head.train_pairs}};
  j["strip_suffixes"] = c.strip_suffixes;
  j["data"] = {{"train_pairs", c.data.train_pairs},         {"test_pairs", c.data.test_pairs},
               {"train_topics", c.data.train_topics},       {"train_candidates", c.data.train_candidates},
               {"train_qrels", c.data.train_qrels},         {"test_topics", c.data.test_topics},
               {"test_candidates", c.data.test_candidates}, {"test_qrels", c.data.test_qrels}};
  j["synthetic"] = {{"train_pairs", c.synthetic.train_pairs},
                    {"test_pairs", c.synthetic.test_pairs},
                    {"spec", to_json(c.synthetic.spec)}};
  j["lambda_values"] = c.lambda_values;
  j["range_sizes"] = c.range_sizes;
  std::vector<std::string> samplers;
  for (auto s : c.range_samplers) samplers.emplace_back(to_string(s));
  j["range_samplers"] = samplers;
  j["range_epochs"] = c.range_epochs;
  j["mu"] = c.mu;
  j["write_timing"] = c.write_timing;
  return j;
}

ExperimentConfig config_from_json(const json& patch) {
  try {
    json j = json(to_json(ExperimentConfig{}));
    check_keys(patch, j, "");
    j.merge_patch(patch);
    ExperimentConfig c;
    c.task = parse_enum(j.at("task").get<std::string>(), kTasks, "task");
    c.receptive_field = j.at("receptive_field").get<std::size_t>();
    c.expected_cluster_size = j.at("expected_cluster_size").get<std::size_t>();
    c.inference_pool = j.at("inference_pool").get<std::size_t>();
    c.sampler = parse_sampler(j.at("sampler").get<std::string>());
    c.clustering = parse_enum(j.at("clustering").get<std::string>(), kClusterings, "clustering");
    c.aggregation = parse_enum(j.at("aggregation").get<std::string>(), kAggregations, "aggregation");
    c.lambda = j.at("lambda").get<double>();
    c.k = j.at("k").get<std::size_t>();
    c.token_budget = j.at("token_budget").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.threshold = j.at("threshold").get<double>();
    c.ndcg_cutoffs = j.at("ndcg_cutoffs").get<std::vector<std::size_t>>();
    const auto& m = j.at("matcher");
    c.matcher.learning_rate = m.at("learning_rate").get<double>();
    c.matcher.batch_size = m.at("batch_size").get<std::size_t>();
    c.matcher.temperature = m.at("temperature").get<double>();
    c.matcher.negatives = m.at("negatives").get<std::size_t>();
    const auto& h = j.at("head");
    c.head.learning_rate = h.at("learning_rate").get<double>();
    c.head.epochs = h.at("epochs").get<std::size_t>();
    c.head.batch_size = h.at("batch_size").get<std::size_t>();
    c.head.hidden = h.at("hidden").get<std::size_t>();
    c.head.max_clusters = h.at("max_clusters").get<std::size_t>();
    c.head.keep_top = h.at("keep_top").get<std::size_t>();
    c.head.embedding_dim = h.at("embedding_dim").get<std::size_t>();
    c.head.epsilon_js = h.at("epsilon_js").get<double>();
    c.head.enable_lp = h.at("enable_lp").get<bool>();
    c.head.enable_ln = h.at("enable_ln").get<bool>();
    c.head.train_pairs = h.at("train_pairs").get<std::size_t>();
    c.strip_suffixes = j.at("strip_suffixes").get<bool>();
    const auto& d = j.at("data");
    c.data.train_pairs = d.at("train_pairs").get<std::string>();
    c.data.test_pairs = d.at("test_pairs").get<std::string>();
    c.data.train_topics = d.at("train_topics").get<std::string>();
    c.data.train_candidates = d.at("train_candidates").get<std::string>();
    c.data.train_qrels = d.at("train_qrels").get<std::string>();
    c.data.test_topics = d.at("test_topics").get<std::string>();
    c.data.test_candidates = d.at("test_candidates").get<std::string>();
    c.data.test_qrels = d.at("test_qrels").get<std::string>();
    const auto& s = j.at("synthetic");
    c.synthetic.train_pairs = s.at("train_pairs").get<std::size_t>();
    c.synthetic.test_pairs = s.at("test_pairs").get<std::size_t>();
    c.synthetic.spec = synthetic_spec_from_json(s.at("spec"));
    c.lambda_values = j.at("lambda_values").get<std::vector<double>>();
    c.range_sizes = j.at("range_sizes").get<std::vector<std::size_t>>();
    c.range_samplers.clear();
    for (const auto& name : j.at("range_samplers").get<std::vector<std::string>>()) {
      c.range_samplers.push_back(parse_sampler(name));
    }
    c.range_epochs = j.at("range_epochs").get<std::size_t>();
    c.mu = j.at("mu").get<double>();
    c.write_timing = j.at("write_timing").get<bool>();
    validate(c);
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigError, std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open config " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfigError, "config " + path + ": " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kConfigError, what); };
  if (c.receptive_field < 1) fail("receptive_field must be at least 1");
  if (c.k < 1) fail("k must be at least 1");
  if (c.token_budget == 0 && c.receptive_field < c.k) fail("receptive_field must be at least k");
  if (c.expected_cluster_size < 1) fail("expected_cluster_size must be at least 1");
  if (c.inference_pool < 1) fail("inference_pool must be at least 1");
  if (c.epochs < 1) fail("epochs must be at least 1");
  if (!(c.lambda >= 0.0)) fail("lambda must be nonnegative");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) fail("threshold must lie in [0, 1]");
  if (!(c.matcher.learning_rate > 0.0)) fail("matcher.learning_rate must be positive");
  if (c.matcher.batch_size < 1) fail("matcher.batch_size must be at least 1");
  if (!(c.matcher.temperature > 0.0)) fail("matcher.temperature must be positive");
  if (c.matcher.negatives < 1) fail("matcher.negatives must be at least 1");
  if (!(c.head.learning_rate > 0.0)) fail("head.learning_rate must be positive");
  if (c.head.hidden < 1 || c.head.max_clusters < 1 || c.head.batch_size < 1) fail("head sizes must be positive");
  if (c.head.keep_top < 1) fail("head.keep_top must be at least 1");
  if (c.head.embedding_dim < 1) fail("head.embedding_dim must be positive");
  if (!(c.head.epsilon_js > 0.0)) fail("head.epsilon_js must be positive");
  if (c.synthetic.train_pairs < 1 || c.synthetic.test_pairs < 1) fail("synthetic splits must be non-empty");
  if (c.range_epochs < 1) fail("range_epochs must be at least 1");
  for (std::size_t r : c.range_sizes) {
    if (r < c.range_epochs) fail("every range size must be at least range_epochs");
  }
  if (!(c.mu >= 0.0)) fail("mu must be nonnegative");
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

std::vector<DocumentPair> task_pairs(const RankingTask& task) {
  std::vector<DocumentPair> pairs;
  for (const auto& query : task.queries) {
    const auto pool = task.pools.find(query.id);
    if (pool == task.pools.end()) continue;
    const auto judged = task.qrels.find(query.id);
    for (const auto& docid : pool->second) {
      int grade = 0;
      if (judged != task.qrels.end()) {
        if (const auto it = judged->second.find(docid); it != judged->second.end()) grade = it->second;
      }
      pairs.push_back({query, task.documents.at(docid), grade});
    }
  }
  return pairs;
}

void truncate_pairs(std::vector<DocumentPair>& pairs, std::vector<TopicMap>* topics, std::size_t limit) {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].query = truncate_receptive_field(pairs[i].query, limit);
    pairs[i].candidate = truncate_receptive_field(pairs[i].candidate, limit);
    if (topics != nullptr && i < topics->size()) {
      auto& t = (*topics)[i];
      t.query.resize(pairs[i].query.size());
      t.candidate.resize(pairs[i].candidate.size());
    }
  }
}

const SubtopicPartition& partition_at(const std::vector<SubtopicPartition>& partitions, std::size_t i) {
  static const SubtopicPartition kNone;
  return partitions.empty() ? kNone : partitions[i];
}

void add_pool_warnings(std::vector<std::string>& out, const ViewPool& pool) {
  out.insert(out.end(), pool.warnings.begin(), pool.warnings.end());
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  ExperimentData data;
  const TokenizerOptions tokenizer{cfg.strip_suffixes};
  const bool from_files = cfg.task == TaskKind::kClassify ? !cfg.data.train_pairs.empty()
                                                          : !cfg.data.train_topics.empty();
  if (from_files && cfg.task == TaskKind::kClassify) {
    data.train = load_pairs(cfg.data.train_pairs, tokenizer);
    data.test = load_pairs(cfg.data.test_pairs, tokenizer);
  } else if (from_files) {
    data.train = task_pairs(
        load_ranking_task(cfg.data.train_topics, cfg.data.train_candidates, cfg.data.train_qrels, tokenizer));
    data.test = task_pairs(
        load_ranking_task(cfg.data.test_topics, cfg.data.test_candidates, cfg.data.test_qrels, tokenizer));
  } else {
    SyntheticSpec train_spec = cfg.synthetic.spec;
    train_spec.seed = derive_seed(seed, "synthetic-train");
    train_spec.pair_count = cfg.synthetic.train_pairs;
    train_spec.id_prefix = "train-";
    SyntheticSpec test_spec = cfg.synthetic.spec;
    test_spec.seed = derive_seed(seed, "synthetic-test");
    test_spec.pair_count = cfg.synthetic.test_pairs;
    test_spec.id_prefix = "test-";
    auto train = generate_synthetic(train_spec);
    auto test = generate_synthetic(test_spec);
    data.train = std::move(train.pairs);
    data.train_topics = std::move(train.topics);
    data.test = std::move(test.pairs);
    data.test_topics = std::move(test.topics);
  }
  if (data.train.empty() || data.test.empty()) throw Error(ErrorKind::kConfigError, "a data split is empty");
  truncate_pairs(data.train, &data.train_topics, cfg.receptive_field);
  truncate_pairs(data.test, &data.test_topics, cfg.receptive_field);
  data.stats = CorpusStats::from_pairs(data.train);
  data.k = cfg.k;
  if (cfg.token_budget > 0) {
    std::set<std::string> seen;
    std::size_t sentences = 0;
    for (const auto& pair : data.train) {
      if (seen.insert(pair.query.id).second) sentences += pair.query.size();
      if (seen.insert(pair.candidate.id).second) sentences += pair.candidate.size();
    }
    data.k = view_size_for_budget(cfg.token_budget, static_cast<double>(data.stats.total_tokens()) /
                                                        static_cast<double>(std::max<std::size_t>(sentences, 1)));
  }
  return data;
}

Clustering cluster_data(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed) {
  Clustering out;
  if (cfg.sampler == SamplerKind::kRandom) return out;
  if (cfg.clustering == ClusteringKind::kDirect) {
    Diagnostics diag;
    auto run = [&](const std::vector<DocumentPair>& pairs, std::vector<SubtopicPartition>& dest) {
      dest.reserve(pairs.size());
      for (const auto& pair : pairs) {
        dest.push_back(cluster_direct(pair, cfg.expected_cluster_size, derive_seed(seed, "cluster:" + pair.id()), &diag));
      }
    };
    run(data.train, out.train);
    run(data.test, out.test);
    out.warnings = std::move(diag.warnings);
    return out;
  }

  const SentenceEncoder encoder(data.stats, {cfg.head.embedding_dim, derive_seed(seed, "encoder")});
  auto examples = [&](const std::vector<DocumentPair>& pairs) {
    std::vector<HeadExample> ex;
    ex.reserve(pairs.size());
    for (const auto& pair : pairs) {
      ex.push_back(make_head_example(pair, encoder, cfg.head.keep_top, cfg.expected_cluster_size,
                                     cfg.head.max_clusters));
    }
    return ex;
  };
  const auto train_examples = examples(data.train);
  const auto test_examples = examples(data.test);
  const AdaptiveLossConfig loss{cfg.lambda, cfg.head.epsilon_js, cfg.head.enable_lp, cfg.head.enable_ln};
  const std::uint64_t head_seed = derive_seed(seed, "head");

  std::vector<const HeadExample*> held_out_positives;
  for (const auto& ex : test_examples) {
    if (ex.label > 0) held_out_positives.push_back(&ex);
  }
  auto held_out_lp = [&](const ClusterHeadParams& params) {
    double sum = 0.0;
    for (const auto* ex : held_out_positives) {
      const auto b = assign_soft(ex->adjacency, ex->embeddings, params, ex->m);
      sum += loss_positive(b, ex->l_q, ex->l_d, loss.epsilon_js);
    }
    return held_out_positives.empty() ? 0.0 : sum / static_cast<double>(held_out_positives.size());
  };

  ClusterHeadParams params;
  if (!loss.enable_lp && !loss.enable_ln) {
    params = init_head(encoder.dim(), cfg.head.hidden, cfg.head.max_clusters, derive_seed(head_seed, "head-init"));
    params.frozen = true;
    out.warnings.push_back("both head losses disabled: clustering with the untrained head");
  } else {
    const std::size_t count = cfg.head.train_pairs == 0 ? train_examples.size()
                                                        : std::min(cfg.head.train_pairs, train_examples.size());
    const HeadTrainOptions options{cfg.head.learning_rate, cfg.head.epochs, cfg.head.hidden, cfg.head.max_clusters,
                                   cfg.head.batch_size};
    params = train_head(std::span<const HeadExample>(train_examples.data(), count), loss, options, head_seed,
                        [&](std::size_t, const ClusterHeadParams& p) { out.head_curve.push_back(held_out_lp(p)); });
  }
  for (const auto& ex : train_examples) out.train.push_back(cluster_adaptive(ex, params));
  for (const auto& ex : test_examples) out.test.push_back(cluster_adaptive(ex, params));
  out.head = std::move(params);
  return out;
}

double ExperimentResult::headline(const ExperimentConfig& cfg) const {
  if (cfg.task == TaskKind::kClassify) return classification.accuracy;
  if (ranking.ndcg_at.empty()) return 0.0;
  return ranking.ndcg_at.begin()->second;
}

namespace {

SentenceEncoder matcher_encoder(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed) {
  return SentenceEncoder(data.stats, {cfg.head.embedding_dim, derive_seed(seed, "encoder")});
}

std::vector<int> labels_of(const std::vector<DocumentPair>& pairs) {
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.label);
  return labels;
}

FeatureVector view_features(const DocumentPair& pair, const ViewPair& views, const CorpusStats& stats) {
  return featurize(view_tokens(pair.query, views.query), view_tokens(pair.candidate, views.candidate), stats);
}

ClassificationReport evaluate_classifier(const ExperimentConfig& cfg, const ExperimentData& data,
                                         const Clustering& clustering, const ClassifierParams& params,
                                         std::uint64_t seed, std::vector<std::pair<std::string, double>>* scores) {
  const InferenceConfig inference{cfg.inference_pool, Pooling::kMax, cfg.sampler, data.k};
  std::vector<double> values;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto s = infer_classify(data.test[i], partition_at(clustering.test, i), inference, params, data.stats, seed);
    values.push_back(s.value);
    if (scores != nullptr) scores->emplace_back(data.test[i].id(), s.value);
  }
  return classification_metrics(values, labels_of(data.test), cfg.threshold);
}

RankingReport evaluate_ranker(const ExperimentConfig& cfg, const ExperimentData& data, const Clustering& clustering,
                              const RankParams& params, const SentenceEncoder& encoder, std::uint64_t seed,
                              RunFile* run_out) {
  const InferenceConfig inference{cfg.inference_pool, Pooling::kMean, cfg.sampler, data.k};
  std::map<std::string, std::vector<std::size_t>> by_query;
  for (std::size_t i = 0; i < data.test.size(); ++i) by_query[data.test[i].query.id].push_back(i);
  RunFile run;
  Qrels qrels;
  for (const auto& [qid, members] : by_query) {
    std::vector<DocumentPair> candidates;
    std::vector<SubtopicPartition> partitions;
    for (std::size_t i : members) {
      candidates.push_back(data.test[i]);
      partitions.push_back(partition_at(clustering.test, i));
      qrels[qid][data.test[i].candidate.id] = data.test[i].label;
    }
    const auto ranked = infer_rank(candidates, partitions, inference, params, encoder, seed);
    run.insert(run.end(), ranked.begin(), ranked.end());
  }
  if (run_out != nullptr) *run_out = run;
  return ndcg(run, qrels, cfg.ndcg_cutoffs);
}

}  // namespace

TrainedMatcher train_matcher(const ExperimentConfig& cfg, const ExperimentData& data, const Clustering& clustering,
                             std::uint64_t seed, bool epoch_metrics) {
  TrainedMatcher out;
  out.warnings = clustering.warnings;
  const std::size_t k = data.k;
  const std::uint64_t matcher_seed = derive_seed(seed, "matcher");
  const std::size_t pool_size = cfg.aggregation == AggregationKind::kTemporal ? cfg.epochs
                                : cfg.aggregation == AggregationKind::kStatic ? 1
                                                                              : cfg.inference_pool;
  std::vector<ViewPool> pools;
  pools.reserve(data.train.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    pools.push_back(build_view_pool(data.train[i], partition_at(clustering.train, i), cfg.sampler, pool_size, k, seed));
    add_pool_warnings(out.warnings, pools.back());
  }

  if (cfg.task == TaskKind::kRank) {
    if (cfg.aggregation == AggregationKind::kSpatial) {
      throw Error(ErrorKind::kConfigError, "spatial aggregation is only available for classification");
    }
    const auto encoder = matcher_encoder(cfg, data, seed);
    EpochCallback<RankParams> on_epoch = [&](std::size_t epoch, double loss, const RankParams& p) {
      const double metric = epoch_metrics ? evaluate_ranker(cfg, data, clustering, p, encoder, seed, nullptr)
                                                .ndcg_at.begin()
                                                ->second
                                          : 0.0;
      out.curve.push_back({epoch, loss, metric});
    };
    TrainResult<RankParams> trained;
    if (cfg.aggregation == AggregationKind::kTemporal) {
      trained = temporal_train_rank(data.train, pools, cfg.epochs, encoder, cfg.matcher, matcher_seed, on_epoch);
    } else {
      std::vector<ViewPair> views;
      for (const auto& pool : pools) views.push_back(pool.entries.front());
      trained = static_train_rank(data.train, views, cfg.epochs, encoder, cfg.matcher, matcher_seed, on_epoch);
    }
    out.ranker = std::move(trained.params);
    return out;
  }

  if (cfg.aggregation == AggregationKind::kSpatial) {
    std::vector<AttentionExample> examples;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      AttentionExample ex{{}, data.train[i].label};
      for (const auto& views : pools[i].entries) ex.views.push_back(view_features(data.train[i], views, data.stats));
      examples.push_back(std::move(ex));
    }
    auto trained = train_attention_pool(examples, cfg.epochs, cfg.matcher, matcher_seed);
    for (std::size_t e = 0; e < trained.loss_curve.size(); ++e) out.curve.push_back({e + 1, trained.loss_curve[e], 0.0});
    out.attention = std::move(trained.params);
    return out;
  }

  EpochCallback<ClassifierParams> on_epoch = [&](std::size_t epoch, double loss, const ClassifierParams& p) {
    const double metric =
        epoch_metrics ? evaluate_classifier(cfg, data, clustering, p, seed, nullptr).accuracy : 0.0;
    out.curve.push_back({epoch, loss, metric});
  };
  TrainResult<ClassifierParams> trained;
  if (cfg.aggregation == AggregationKind::kTemporal) {
    trained = temporal_train_classify(data.train, pools, cfg.epochs, data.stats, cfg.matcher, matcher_seed, on_epoch);
  } else {
    std::vector<ViewPair> views;
    for (const auto& pool : pools) views.push_back(pool.entries.front());
    trained = static_train_classify(data.train, views, cfg.epochs, data.stats, cfg.matcher, matcher_seed, on_epoch);
  }
  out.classifier = trained.params;
  return out;
}

ExperimentResult evaluate_matcher(const ExperimentConfig& cfg, const ExperimentData& data,
                                  const Clustering& clustering, const TrainedMatcher& matcher, std::uint64_t seed) {
  ExperimentResult result;
  result.seed = seed;
  result.warnings = matcher.warnings;
  result.curve = matcher.curve;
  result.classifier = matcher.classifier;
  result.ranker = matcher.ranker;
  result.attention = matcher.attention;
  if (matcher.ranker) {
    if (cfg.task != TaskKind::kRank) throw Error(ErrorKind::kConfigError, "ranker parameters need the rank task");
    result.ranking =
        evaluate_ranker(cfg, data, clustering, *matcher.ranker, matcher_encoder(cfg, data, seed), seed, &result.run);
  } else if (matcher.attention) {
    if (cfg.task != TaskKind::kClassify) throw Error(ErrorKind::kConfigError, "attention pooling needs the classify task");
    std::vector<double> values;
    for (std::size_t i = 0; i < data.test.size(); ++i) {
      const auto pool = build_view_pool(data.test[i], partition_at(clustering.test, i), cfg.sampler, cfg.inference_pool,
                                        data.k, seed, "infer");
      std::vector<FeatureVector> views;
      for (const auto& v : pool.entries) views.push_back(view_features(data.test[i], v, data.stats));
      values.push_back(attention_pool_score(views, *matcher.attention));
      result.scores.emplace_back(data.test[i].id(), values.back());
    }
    result.classification = classification_metrics(values, labels_of(data.test), cfg.threshold);
  } else if (matcher.classifier) {
    if (cfg.task != TaskKind::kClassify) throw Error(ErrorKind::kConfigError, "classifier parameters need the classify task");
    result.classification = evaluate_classifier(cfg, data, clustering, *matcher.classifier, seed, &result.scores);
  } else {
    throw Error(ErrorKind::kConfigError, "no matcher parameters");
  }
  return result;
}

ExperimentResult train_and_evaluate(const ExperimentConfig& cfg, const ExperimentData& data,
                                    const Clustering& clustering, std::uint64_t seed, bool epoch_metrics) {
  return evaluate_matcher(cfg, data, clustering, train_matcher(cfg, data, clustering, seed, epoch_metrics), seed);
}

std::string matcher_to_json(const TrainedMatcher& matcher) {
  if (matcher.classifier) return classifier_to_json(*matcher.classifier);
  if (matcher.ranker) return ranker_to_json(*matcher.ranker);
  if (!matcher.attention) throw Error(ErrorKind::kConfigError, "no matcher parameters");
  ordered_json j;
  j["kind"] = "attention_pool";
  j["weights"] = matcher.attention->scorer.weights;
  j["offset"] = matcher.attention->scorer.offset;
  j["scale"] = matcher.attention->scorer.scale;
  j["beta"] = matcher.attention->beta;
  return j.dump(1);
}

TrainedMatcher matcher_from_json(const std::string& text) {
  std::string kind;
  try {
    kind = json::parse(text).at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("matcher json: ") + e.what());
  }
  TrainedMatcher m;
  if (kind == "classifier") {
    m.classifier = classifier_from_json(text);
  } else if (kind == "ranker") {
    m.ranker = ranker_from_json(text);
  } else if (kind == "attention_pool") {
    const auto j = json::parse(text);
    ordered_json scorer = j;
    scorer["kind"] = "classifier";
    AttentionPoolParams p;
    p.scorer = classifier_from_json(scorer.dump());
    try {
      p.beta = j.at("beta").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParseError, std::string("matcher json: ") + e.what());
    }
    m.attention = p;
  } else {
    throw Error(ErrorKind::kParseError, "unknown matcher kind '" + kind + "'");
  }
  return m;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path.string());
  out << text;
}

ordered_json classification_json(const ClassificationReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["tn"] = r.tn;
  j["fn"] = r.fn;
  return j;
}

}  // namespace

ordered_json report_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  ordered_json j;
  j["seed"] = result.seed;
  j["task"] = to_string(cfg.task);
  j["sampler"] = to_string(cfg.sampler);
  j["clustering"] = to_string(cfg.clustering);
  j["aggregation"] = to_string(cfg.aggregation);
  j["inference_pool"] = cfg.inference_pool;
  j["lambda"] = cfg.lambda;
  if (cfg.task == TaskKind::kClassify) {
    j["classification"] = classification_json(result.classification);
  } else {
    ordered_json ndcg_json;
    for (const auto& [k, v] : result.ranking.ndcg_at) ndcg_json["ndcg@" + std::to_string(k)] = v;
    j["ranking"] = ndcg_json;
  }
  j["metric"] = result.headline(cfg);
  j["warnings"] = result.warnings.size();
  return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  validate(cfg);
  auto stage = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("[") + name + "] " + e.what(), e.line());
    }
  };
  Stopwatch clock;
  const auto data = stage("load", [&] { return prepare_data(cfg, seed); });
  const double load_time = clock.seconds();
  const auto clustering = stage("cluster", [&] { return cluster_data(cfg, data, seed); });
  const double cluster_time = clock.seconds() - load_time;
  auto result = stage("train", [&] { return train_and_evaluate(cfg, data, clustering, seed, !out_dir.empty()); });
  const double train_time = clock.seconds() - load_time - cluster_time;
  result.timing = {{"load", load_time}, {"cluster", cluster_time}, {"train_and_infer", train_time}};
  if (out_dir.empty()) return result;

  stage("write", [&] {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    ordered_json config = to_json(cfg);
    config["seed"] = seed;
    write_text(dir / "config.json", config.dump(2) + "\n");
    TrainedMatcher matcher{result.classifier, result.ranker, result.attention, {}, {}};
    write_text(dir / "params.json", matcher_to_json(matcher) + "\n");
    if (clustering.head) write_text(dir / "head.json", head_to_json(*clustering.head) + "\n");
    if (cfg.task == TaskKind::kClassify) {
      std::ostringstream csv;
      csv << "pair_id,label,score,prediction\n";
      for (std::size_t i = 0; i < result.scores.size(); ++i) {
        csv << result.scores[i].first << ',' << data.test[i].label << ',' << format_double(result.scores[i].second)
            << ',' << (result.scores[i].second >= cfg.threshold ? 1 : 0) << '\n';
      }
      write_text(dir / "predictions.csv", csv.str());
    } else {
      std::ostringstream run;
      write_run(run, result.run);
      write_text(dir / "run.txt", run.str());
    }
    write_text(dir / "report.json", report_json(cfg, result).dump(2) + "\n");
    std::ostringstream curve;
    curve << "epoch,loss,metric\n";
    for (const auto& r : result.curve) curve << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.metric) << '\n';
    write_text(dir / "curve.csv", curve.str());
    if (!clustering.head_curve.empty()) {
      std::ostringstream head_curve;
      head_curve << "epoch,heldout_lp\n";
      for (std::size_t e = 0; e < clustering.head_curve.size(); ++e) {
        head_curve << e + 1 << ',' << format_double(clustering.head_curve[e]) << '\n';
      }
      write_text(dir / "head_curve.csv", head_curve.str());
    }
    if (cfg.write_timing) {
      std::ostringstream timing;
      timing << "stage,seconds\n";
      for (const auto& [name, seconds] : result.timing) timing << name << ',' << format_double(seconds) << '\n';
      write_text(dir / "timing.csv", timing.str());
    }
    return 0;
  });
  return result;
}

SweepReport lambda_sweep(const ExperimentConfig& cfg, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds) {
  if (values.size() < 2) throw Error(ErrorKind::kConfigError, "a lambda sweep needs at least two values");
  if (seeds.empty()) throw Error(ErrorKind::kConfigError, "a lambda sweep needs at least one seed");
  SweepReport report;
  std::vector<double> sums(values.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.clustering = ClusteringKind::kAdaptive;
    const auto data = prepare_data(run_cfg, seed);
    for (std::size_t v = 0; v < values.size(); ++v) {
      run_cfg.lambda = values[v];
      const auto clustering = cluster_data(run_cfg, data, seed);
      const auto result = train_and_evaluate(run_cfg, data, clustering, seed);
      report.rows.push_back({values[v], seed, result.headline(run_cfg)});
      sums[v] += report.rows.back().metric;
    }
  }
  double lo = 0.0, hi = 0.0;
  for (std::size_t v = 0; v < values.size(); ++v) {
    const double mean = sums[v] / static_cast<double>(seeds.size());
    report.means.emplace_back(values[v], mean);
    lo = v == 0 ? mean : std::min(lo, mean);
    hi = v == 0 ? mean : std::max(hi, mean);
  }
  report.spread = hi - lo;
  return report;
}

std::vector<RangeRow> analyze_ranges(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.task != TaskKind::kClassify) throw Error(ErrorKind::kConfigError, "range analysis runs on classification");
  if (cfg.range_sizes.empty()) throw Error(ErrorKind::kConfigError, "range_sizes is empty");
  const auto data = prepare_data(cfg, seed);
  const std::size_t largest = *std::max_element(cfg.range_sizes.begin(), cfg.range_sizes.end());
  std::vector<RangeRow> rows;
  for (SamplerKind sampler : cfg.range_samplers) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.sampler = sampler;
    run_cfg.epochs = cfg.range_epochs;
    const auto clustering = cluster_data(run_cfg, data, seed);
    std::vector<ViewPool> pools;
    std::vector<std::vector<std::size_t>> orders;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      pools.push_back(build_view_pool(data.train[i], partition_at(clustering.train, i), sampler, largest, data.k, seed,
                                      "range"));
      orders.push_back(ql_order(data.train[i], pools.back(), data.stats, cfg.mu));
    }
    auto train_eval = [&](const std::vector<ViewPool>& schedule) {
      const auto trained = temporal_train_classify(data.train, schedule, cfg.range_epochs, data.stats, cfg.matcher,
                                                   derive_seed(seed, "matcher"));
      return evaluate_classifier(run_cfg, data, clustering, trained.params, seed, nullptr).accuracy;
    };

    std::vector<ViewPool> original;
    for (const auto& pool : pools) {
      ViewPool head{pool.pair_id, {}, {}};
      head.entries.assign(pool.entries.begin(), pool.entries.begin() + static_cast<std::ptrdiff_t>(cfg.range_epochs));
      original.push_back(std::move(head));
    }
    rows.push_back({sampler, 0, train_eval(original)});

    for (std::size_t range : cfg.range_sizes) {
      std::vector<ViewPool> schedule;
      for (std::size_t i = 0; i < pools.size(); ++i) {
        ViewPool top{pools[i].pair_id, {}, {}};
        for (std::size_t r = 0; r < range; ++r) top.entries.push_back(pools[i].entries[orders[i][r]]);
        schedule.push_back(range_schedule(data.train[i], top, {range, cfg.range_epochs, cfg.mu}, data.stats, seed).pool);
      }
      rows.push_back({sampler, range, train_eval(schedule)});
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const SweepReport& report) {
  out << "lambda,metric\n";
  for (const auto& [lambda, metric] : report.means) out << format_double(lambda) << ',' << format_double(metric) << '\n';
}

void write_ranges_csv(std::ostream& out, const std::vector<RangeRow>& rows) {
  out << "sampler,range,metric\n";
  for (const auto& r : rows) out << to_string(r.sampler) << ',' << r.range << ',' << format_double(r.metric) << '\n';
}

}  // namespace sst
