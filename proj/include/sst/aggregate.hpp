#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/matcher.hpp"
#include "sst/sampling.hpp"
#include "sst/simgraph.hpp"
#include "sst/subtopic.hpp"

namespace sst {

struct MatcherTrainOptions {
  double learning_rate = kDefaultMatcherLearningRate;
  // Classification examples per gradient step.
  std::size_t batch_size = 16;
  double temperature = kDefaultTemperature;
  // Ranking items are grouped negatives + 1 at a time; each item sees the
  // other items' candidate views as negatives.
  std::size_t negatives = kDefaultNegatives;
};

template <typename Params>
struct TrainResult {
  Params params;
  // Mean per-example loss of each epoch, measured before each update.
  std::vector<double> loss_curve;
};

template <typename Params>
using EpochCallback = std::function<void(std::size_t epoch, double loss, const Params&)>;

// Pair order for epoch t: a shuffle of 0..n-1 from derive_seed(seed, "epoch-order", t).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Epoch t trains on entry t of every pool. pools[i] belongs to pairs[i];
// every pool must hold `epochs` entries (kPoolLengthMismatch otherwise).
TrainResult<ClassifierParams> temporal_train_classify(const std::vector<DocumentPair>& pairs,
                                                      const std::vector<ViewPool>& pools, std::size_t epochs,
                                                      const CorpusStats& stats, const MatcherTrainOptions& options,
                                                      std::uint64_t seed,
                                                      const EpochCallback<ClassifierParams>& on_epoch = {});

// The same view of every pair in every epoch.
TrainResult<ClassifierParams> static_train_classify(const std::vector<DocumentPair>& pairs,
                                                    const std::vector<ViewPair>& views, std::size_t epochs,
                                                    const CorpusStats& stats, const MatcherTrainOptions& options,
                                                    std::uint64_t seed,
                                                    const EpochCallback<ClassifierParams>& on_epoch = {});

// Ranking counterpart: pairs with a positive label are the training items,
// and views of other queries' items in the same batch are the negatives.
TrainResult<RankParams> temporal_train_rank(const std::vector<DocumentPair>& pairs, const std::vector<ViewPool>& pools,
                                            std::size_t epochs, const SentenceEncoder& encoder,
                                            const MatcherTrainOptions& options, std::uint64_t seed,
                                            const EpochCallback<RankParams>& on_epoch = {});

TrainResult<RankParams> static_train_rank(const std::vector<DocumentPair>& pairs, const std::vector<ViewPair>& views,
                                          std::size_t epochs, const SentenceEncoder& encoder,
                                          const MatcherTrainOptions& options, std::uint64_t seed,
                                          const EpochCallback<RankParams>& on_epoch = {});

enum class Pooling { kMax, kMean };

struct InferenceConfig {
  std::size_t n = 3;
  Pooling pooling = Pooling::kMax;
  SamplerKind sampler = SamplerKind::kSoft;
  std::size_t k = kDefaultViewSize;
};

// Max or mean of the component scores. Throws kEmptyView on no scores.
double pool_scores(std::span<const double> scores, Pooling pooling);

struct PooledScore {
  double value = 0.0;
  std::vector<double> components;
};

// Scores a fresh n-view pool drawn from the "infer" stream and keeps the
// maximum. Requires cfg.pooling == kMax.
PooledScore infer_classify(const DocumentPair& pair, const SubtopicPartition& partition, const InferenceConfig& cfg,
                           const ClassifierParams& params, const CorpusStats& stats, std::uint64_t seed);

// Mean of n view-pair scores. Requires cfg.pooling == kMean.
PooledScore infer_rank_pair(const DocumentPair& pair, const SubtopicPartition& partition, const InferenceConfig& cfg,
                            const RankParams& params, const SentenceEncoder& encoder, std::uint64_t seed);

// Sorts by score descending, doc id ascending on ties, and numbers ranks
// from 1.
RunFile rank_candidates(const std::string& qid, std::vector<std::pair<std::string, double>> scores,
                        const std::string& tag);

// candidates[i] pairs the query with one candidate; partitions[i] belongs
// to it.
RunFile infer_rank(const std::vector<DocumentPair>& candidates, const std::vector<SubtopicPartition>& partitions,
                   const InferenceConfig& cfg, const RankParams& params, const SentenceEncoder& encoder,
                   std::uint64_t seed, const std::string& tag = "sst");

inline constexpr double kDefaultDirichletMu = 100.0;
inline constexpr double kBackgroundFloor = 1e-12;

// Dirichlet-smoothed query likelihood of the view under the document:
// sum_w c(w, view) ln((c(w, doc) + mu p(w|C)) / (|doc| + mu)). With mu = 0
// a view word missing from the document yields -infinity. With mu > 0 a word
// unseen in the collection is floored at kBackgroundFloor and reported.
double ql_similarity(const std::vector<std::string>& view, const std::vector<std::string>& document,
                     const CorpusStats& stats, double mu = kDefaultDirichletMu, Diagnostics* diag = nullptr);

// QL of the query view against the query plus that of the candidate view
// against the candidate.
double view_pair_ql(const DocumentPair& pair, const ViewPair& views, const CorpusStats& stats, double mu,
                    Diagnostics* diag = nullptr);

struct RangeScheduleSpec {
  std::size_t pool_size = 40;
  std::size_t epochs = 10;
  double mu = kDefaultDirichletMu;
};

struct RangeSchedule {
  ViewPool pool;
  // 0-based QL rank of each scheduled view.
  std::vector<std::size_t> ranks;
};

// Pool entries ordered by QL, highest first (stable, so equal scores keep
// pool order).
std::vector<std::size_t> ql_order(const DocumentPair& pair, const ViewPool& pool, const CorpusStats& stats, double mu);

// Sorts the pool by QL, splits ranks [0, pool_size) into `epochs` contiguous
// bins [t P / E, (t + 1) P / E) and draws one view uniformly from each bin.
RangeSchedule range_schedule(const DocumentPair& pair, const ViewPool& pool, const RangeScheduleSpec& spec,
                             const CorpusStats& stats, std::uint64_t seed);

// Spatial aggregation baseline: each view gets the logit z_i = w . f_i, the
// pair score is sigmoid(sum_i a_i z_i) with a = softmax(beta z).
struct AttentionPoolParams {
  ClassifierParams scorer;
  double beta = 0.0;

  bool operator==(const AttentionPoolParams&) const = default;
};

struct AttentionExample {
  std::vector<FeatureVector> views;
  int label = 0;
};

double attention_pool_score(const std::vector<FeatureVector>& views, const AttentionPoolParams& params);

// Mean binary cross-entropy over the batch; `grad_w` and `grad_beta`
// receive the gradient when given.
double attention_pool_loss(std::span<const AttentionExample> batch, const AttentionPoolParams& params,
                           std::array<double, kFeatureCount>* grad_w = nullptr, double* grad_beta = nullptr);

// Every epoch sees all views of every pair at once.
TrainResult<AttentionPoolParams> train_attention_pool(const std::vector<AttentionExample>& examples,
                                                      std::size_t epochs, const MatcherTrainOptions& options,
                                                      std::uint64_t seed);

}  // namespace sst
