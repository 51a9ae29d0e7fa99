#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sst/aggregate.hpp"
#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/matcher.hpp"
#include "sst/sampling.hpp"
#include "sst/subtopic.hpp"

namespace sst {

// ---------------------------------------------------------------------------
// Metrics

struct ClassificationReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

// score >= threshold predicts positive. Undefined ratios are 0.
ClassificationReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                            double threshold = 0.5);

struct RankingReport {
  // cutoff -> mean NDCG over the run's queries.
  std::map<std::size_t, double> ndcg_at;
};

// NDCG@k of one ranked list of grades against the judged grades of the
// query, linear gain and log2(rank + 1) discount. 0 without relevant docs.
double ndcg_at(const std::vector<int>& ranked_grades, std::vector<int> judged_grades, std::size_t k);

// Entries are ordered per query by rank. Throws kMissingQuery when a run
// query has no judgments.
RankingReport ndcg(const RunFile& run, const Qrels& qrels, const std::vector<std::size_t>& cutoffs);

// Adjusted Rand index. Two identical partitions score 1 even when the index
// is otherwise undefined (a single cluster, or all singletons).
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Keeps the first `limit` sentences.
Document truncate_receptive_field(const Document& document, std::size_t limit);

// ---------------------------------------------------------------------------
// Configuration

enum class TaskKind { kClassify, kRank };
enum class ClusteringKind { kDirect, kAdaptive };
enum class AggregationKind { kTemporal, kStatic, kSpatial };

struct HeadConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::size_t hidden = kDefaultHeadHidden;
  std::size_t max_clusters = kDefaultMaxClusters;
  std::size_t keep_top = kDefaultKeepTop;
  std::size_t embedding_dim = 64;
  double epsilon_js = 1e-6;
  bool enable_lp = true;
  bool enable_ln = true;
  // Pairs used to train the head; 0 means the whole training set.
  std::size_t train_pairs = 0;
};

struct DataConfig {
  // Classification: pairs files. Ranking: topics / candidates / qrels.
  std::string train_pairs;
  std::string test_pairs;
  std::string train_topics;
  std::string train_candidates;
  std::string train_qrels;
  std::string test_topics;
  std::string test_candidates;
  std::string test_qrels;
};

struct SyntheticConfig {
  std::size_t train_pairs = 2000;
  std::size_t test_pairs = 500;
  SyntheticSpec spec;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::kClassify;
  std::size_t receptive_field = 40;
  std::size_t expected_cluster_size = kDefaultClusterSize;
  std::size_t inference_pool = 3;
  SamplerKind sampler = SamplerKind::kSoft;
  ClusteringKind clustering = ClusteringKind::kDirect;
  AggregationKind aggregation = AggregationKind::kTemporal;
  double lambda = 1.0;
  // View size in sentences; a positive token_budget overrides it with
  // floor(budget / mean training sentence length).
  std::size_t k = kDefaultViewSize;
  std::size_t token_budget = 0;
  std::size_t epochs = 10;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double threshold = 0.5;
  std::vector<std::size_t> ndcg_cutoffs{10, 20};
  MatcherTrainOptions matcher{0.05, 16, kDefaultTemperature, kDefaultNegatives};
  HeadConfig head;
  bool strip_suffixes = false;
  // Synthetic data is used whenever `data` names no files.
  DataConfig data;
  SyntheticConfig synthetic;
  std::vector<double> lambda_values{0.1, 1.0, 10.0};
  std::vector<std::size_t> range_sizes{10, 20, 30, 40};
  std::vector<SamplerKind> range_samplers{SamplerKind::kUniform, SamplerKind::kSoft};
  std::size_t range_epochs = 10;
  double mu = kDefaultDirichletMu;
  // Per-stage wall-clock timings are not reproducible, so they are only
  // written when asked for.
  bool write_timing = false;
};

// Checks ranges; throws kConfigError.
void validate(const ExperimentConfig& cfg);

nlohmann::ordered_json to_json(const ExperimentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

nlohmann::ordered_json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

const char* to_string(TaskKind kind);
const char* to_string(ClusteringKind kind);
const char* to_string(AggregationKind kind);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentData {
  std::vector<DocumentPair> train;
  std::vector<DocumentPair> test;
  // Ground truth topics when the data is synthetic.
  std::vector<TopicMap> train_topics;
  std::vector<TopicMap> test_topics;
  CorpusStats stats;  // training documents only
  std::size_t k = kDefaultViewSize;
};

// Loads (or generates) and truncates both splits.
ExperimentData prepare_data(const ExperimentConfig& cfg, std::uint64_t seed);

struct Clustering {
  std::vector<SubtopicPartition> train;
  std::vector<SubtopicPartition> test;
  std::optional<ClusterHeadParams> head;
  std::vector<double> head_curve;  // mean held-out L_p after each head epoch
  std::vector<std::string> warnings;
};

// Partitions every pair with the configured clustering variant. With the
// random sampler nothing is clustered and both lists stay empty.
Clustering cluster_data(const ExperimentConfig& cfg, const ExperimentData& data, std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double metric = 0.0;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  ClassificationReport classification;
  RankingReport ranking;
  std::vector<EpochRecord> curve;
  std::vector<std::string> warnings;
  // Per-pair predictions (classification) or the run (ranking).
  std::vector<std::pair<std::string, double>> scores;
  RunFile run;
  std::optional<ClassifierParams> classifier;
  std::optional<RankParams> ranker;
  std::optional<AttentionPoolParams> attention;
  std::vector<std::pair<std::string, double>> timing;

  // Accuracy for classification, NDCG at the first cutoff for ranking.
  double headline(const ExperimentConfig& cfg) const;
};

// Exactly one of the parameter sets is filled.
struct TrainedMatcher {
  std::optional<ClassifierParams> classifier;
  std::optional<RankParams> ranker;
  std::optional<AttentionPoolParams> attention;
  std::vector<EpochRecord> curve;
  std::vector<std::string> warnings;
};

// Trains on the clustered training split. `epoch_metrics` adds held-out
// evaluation after every epoch.
TrainedMatcher train_matcher(const ExperimentConfig& cfg, const ExperimentData& data, const Clustering& clustering,
                             std::uint64_t seed, bool epoch_metrics = false);

// Aggregation inference and metrics on the test split.
ExperimentResult evaluate_matcher(const ExperimentConfig& cfg, const ExperimentData& data,
                                  const Clustering& clustering, const TrainedMatcher& matcher, std::uint64_t seed);

std::string matcher_to_json(const TrainedMatcher& matcher);
TrainedMatcher matcher_from_json(const std::string& text);

// train_matcher followed by evaluate_matcher.
ExperimentResult train_and_evaluate(const ExperimentConfig& cfg, const ExperimentData& data,
                                    const Clustering& clustering, std::uint64_t seed, bool epoch_metrics = false);

// Whole pipeline for one seed. When `out_dir` is non-empty, writes
// config.json, params.json, head.json (adaptive), predictions.csv or
// run.txt, report.json, curve.csv and, if enabled, timing.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir = {});

struct SweepRow {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double metric = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  // lambda -> mean metric over seeds, in sweep order.
  std::vector<std::pair<double, double>> means;
  double spread = 0.0;
};

// Adaptive clustering per lambda with every seed reused across lambdas.
SweepReport lambda_sweep(const ExperimentConfig& cfg, const std::vector<double>& values,
                         const std::vector<std::uint64_t>& seeds);

struct RangeRow {
  SamplerKind sampler = SamplerKind::kUniform;
  // 0 for the original (unsorted) pool order.
  std::size_t range = 0;
  double metric = 0.0;
};

// For each sampler: a pool of max(range_sizes) views per training pair,
// QL-sorted; for every range R the top R views are split into range_epochs
// bins and the matcher is retrained on the resulting schedule. A row with
// range 0 trains on the first range_epochs pool entries in sampled order.
std::vector<RangeRow> analyze_ranges(const ExperimentConfig& cfg, std::uint64_t seed);

void write_sweep_csv(std::ostream& out, const SweepReport& report);
void write_ranges_csv(std::ostream& out, const std::vector<RangeRow>& rows);
nlohmann::ordered_json report_json(const ExperimentConfig& cfg, const ExperimentResult& result);

}  // namespace sst
