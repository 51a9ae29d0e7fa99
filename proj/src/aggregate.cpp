#include "sst/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace sst {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "epoch-order", epoch));
  rng.shuffle(order);
  return order;
}

namespace {

void check_pools(std::size_t pairs, const std::vector<ViewPool>& pools, std::size_t epochs) {
  if (pools.size() != pairs) {
    throw Error(ErrorKind::kPoolLengthMismatch, std::to_string(pools.size()) + " pools for " +
                                                    std::to_string(pairs) + " pairs");
  }
  for (const auto& pool : pools) {
    if (pool.size() != epochs) {
      throw Error(ErrorKind::kPoolLengthMismatch, "pool of " + pool.pair_id + " has " +
                                                      std::to_string(pool.size()) + " entries for " +
                                                      std::to_string(epochs) + " epochs");
    }
  }
}

void check_options(const MatcherTrainOptions& options) {
  if (options.batch_size < 1) throw Error(ErrorKind::kConfigError, "batch size must be at least 1");
  if (!(options.learning_rate > 0.0)) throw Error(ErrorKind::kConfigError, "learning rate must be positive");
}

template <typename ViewAt>
TrainResult<ClassifierParams> train_classify(const std::vector<DocumentPair>& pairs, std::size_t epochs,
                                             ViewAt view_at, const CorpusStats& stats,
                                             const MatcherTrainOptions& options, std::uint64_t seed,
                                             const EpochCallback<ClassifierParams>& on_epoch) {
  check_options(options);
  TrainResult<ClassifierParams> result;
  auto features_of = [&](std::size_t i, std::size_t t) {
    const ViewPair& views = view_at(i, t);
    const auto& pair = pairs[i];
    return featurize(view_tokens(pair.query, views.query), view_tokens(pair.candidate, views.candidate), stats);
  };
  if (epochs > 0) {
    std::vector<FeatureVector> first;
    first.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) first.push_back(features_of(i, 0));
    fit_standardizer(first, result.params);
  }
  std::vector<ClassifyExample> batch;
  batch.reserve(options.batch_size);
  for (std::size_t t = 0; t < epochs; ++t) {
    double total = 0.0;
    auto flush = [&] {
      if (batch.empty()) return;
      total += train_step_classify(batch, result.params, options.learning_rate) * static_cast<double>(batch.size());
      batch.clear();
    };
    for (std::size_t i : epoch_order(pairs.size(), seed, t)) {
      batch.push_back({features_of(i, t), pairs[i].label});
      if (batch.size() == options.batch_size) flush();
    }
    flush();
    result.loss_curve.push_back(pairs.empty() ? 0.0 : total / static_cast<double>(pairs.size()));
    if (on_epoch) on_epoch(t + 1, result.loss_curve.back(), result.params);
  }
  return result;
}

template <typename ViewAt>
TrainResult<RankParams> train_rank(const std::vector<DocumentPair>& pairs, std::size_t epochs, ViewAt view_at,
                                   const SentenceEncoder& encoder, const MatcherTrainOptions& options,
                                   std::uint64_t seed, const EpochCallback<RankParams>& on_epoch) {
  check_options(options);
  if (!(options.temperature > 0.0)) throw Error(ErrorKind::kConfigError, "temperature must be positive");
  std::vector<std::size_t> items;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].label > 0) items.push_back(i);
  }
  if (items.empty()) throw Error(ErrorKind::kNoPositivePairs, "ranking training needs relevant pairs");
  const std::size_t group = options.negatives + 1;

  TrainResult<RankParams> result{init_rank_params(encoder.dim()), {}};
  for (std::size_t t = 0; t < epochs; ++t) {
    const auto order = epoch_order(items.size(), seed, t);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += group) {
      const std::size_t end = std::min(order.size(), start + group);
      std::vector<std::vector<double>> queries, docs;
      for (std::size_t g = start; g < end; ++g) {
        const auto& pair = pairs[items[order[g]]];
        const ViewPair& views = view_at(items[order[g]], t);
        queries.push_back(embed_view(view_tokens(pair.query, views.query), encoder));
        docs.push_back(embed_view(view_tokens(pair.candidate, views.candidate), encoder));
      }
      for (std::size_t g = start; g < end; ++g) {
        const auto& qid = pairs[items[order[g]]].query.id;
        std::vector<std::vector<double>> negatives;
        for (std::size_t h = start; h < end; ++h) {
          if (h != g && pairs[items[order[h]]].query.id != qid) negatives.push_back(docs[h - start]);
        }
        if (negatives.empty()) continue;
        total += train_step_rank(queries[g - start], docs[g - start], negatives, result.params, options.temperature,
                                 options.learning_rate);
        ++steps;
      }
    }
    result.loss_curve.push_back(steps == 0 ? 0.0 : total / static_cast<double>(steps));
    if (on_epoch) on_epoch(t + 1, result.loss_curve.back(), result.params);
  }
  return result;
}

}  // namespace

TrainResult<ClassifierParams> temporal_train_classify(const std::vector<DocumentPair>& pairs,
                                                      const std::vector<ViewPool>& pools, std::size_t epochs,
                                                      const CorpusStats& stats, const MatcherTrainOptions& options,
                                                      std::uint64_t seed,
                                                      const EpochCallback<ClassifierParams>& on_epoch) {
  check_pools(pairs.size(), pools, epochs);
  return train_classify(
      pairs, epochs, [&](std::size_t i, std::size_t t) -> const ViewPair& { return pools[i].entries[t]; }, stats,
      options, seed, on_epoch);
}

TrainResult<ClassifierParams> static_train_classify(const std::vector<DocumentPair>& pairs,
                                                    const std::vector<ViewPair>& views, std::size_t epochs,
                                                    const CorpusStats& stats, const MatcherTrainOptions& options,
                                                    std::uint64_t seed,
                                                    const EpochCallback<ClassifierParams>& on_epoch) {
  if (views.size() != pairs.size()) throw Error(ErrorKind::kLengthMismatch, "one view per pair is required");
  return train_classify(
      pairs, epochs, [&](std::size_t i, std::size_t) -> const ViewPair& { return views[i]; }, stats, options, seed,
      on_epoch);
}

TrainResult<RankParams> temporal_train_rank(const std::vector<DocumentPair>& pairs, const std::vector<ViewPool>& pools,
                                            std::size_t epochs, const SentenceEncoder& encoder,
                                            const MatcherTrainOptions& options, std::uint64_t seed,
                                            const EpochCallback<RankParams>& on_epoch) {
  check_pools(pairs.size(), pools, epochs);
  return train_rank(
      pairs, epochs, [&](std::size_t i, std::size_t t) -> const ViewPair& { return pools[i].entries[t]; }, encoder,
      options, seed, on_epoch);
}

TrainResult<RankParams> static_train_rank(const std::vector<DocumentPair>& pairs, const std::vector<ViewPair>& views,
                                          std::size_t epochs, const SentenceEncoder& encoder,
                                          const MatcherTrainOptions& options, std::uint64_t seed,
                                          const EpochCallback<RankParams>& on_epoch) {
  if (views.size() != pairs.size()) throw Error(ErrorKind::kLengthMismatch, "one view per pair is required");
  return train_rank(
      pairs, epochs, [&](std::size_t i, std::size_t) -> const ViewPair& { return views[i]; }, encoder, options, seed,
      on_epoch);
}

double pool_scores(std::span<const double> scores, Pooling pooling) {
  if (scores.empty()) throw Error(ErrorKind::kEmptyView, "no view scores to pool");
  if (pooling == Pooling::kMax) return *std::max_element(scores.begin(), scores.end());
  // Summed in sorted order so the mean does not depend on pool order.
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double s : sorted) sum += s;
  return sum / static_cast<double>(sorted.size());
}

PooledScore infer_classify(const DocumentPair& pair, const SubtopicPartition& partition, const InferenceConfig& cfg,
                           const ClassifierParams& params, const CorpusStats& stats, std::uint64_t seed) {
  if (cfg.pooling != Pooling::kMax) throw Error(ErrorKind::kConfigError, "classification pools by max");
  const auto pool = build_view_pool(pair, partition, cfg.sampler, cfg.n, cfg.k, seed, "infer");
  PooledScore out;
  for (const auto& views : pool.entries) {
    const auto f = featurize(view_tokens(pair.query, views.query), view_tokens(pair.candidate, views.candidate), stats);
    out.components.push_back(score_classify(f, params).value);
  }
  out.value = pool_scores(out.components, cfg.pooling);
  return out;
}

PooledScore infer_rank_pair(const DocumentPair& pair, const SubtopicPartition& partition, const InferenceConfig& cfg,
                            const RankParams& params, const SentenceEncoder& encoder, std::uint64_t seed) {
  if (cfg.pooling != Pooling::kMean) throw Error(ErrorKind::kConfigError, "ranking pools by mean");
  const auto pool = build_view_pool(pair, partition, cfg.sampler, cfg.n, cfg.k, seed, "infer");
  PooledScore out;
  for (const auto& views : pool.entries) {
    const auto q = embed_view(view_tokens(pair.query, views.query), encoder);
    const auto d = embed_view(view_tokens(pair.candidate, views.candidate), encoder);
    out.components.push_back(score_rank(q, d, params).value);
  }
  out.value = pool_scores(out.components, cfg.pooling);
  return out;
}

RunFile rank_candidates(const std::string& qid, std::vector<std::pair<std::string, double>> scores,
                        const std::string& tag) {
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RunFile run;
  for (std::size_t r = 0; r < scores.size(); ++r) run.push_back({qid, scores[r].first, r + 1, scores[r].second, tag});
  return run;
}

RunFile infer_rank(const std::vector<DocumentPair>& candidates, const std::vector<SubtopicPartition>& partitions,
                   const InferenceConfig& cfg, const RankParams& params, const SentenceEncoder& encoder,
                   std::uint64_t seed, const std::string& tag) {
  if (partitions.size() != candidates.size()) {
    throw Error(ErrorKind::kLengthMismatch, "one partition per candidate is required");
  }
  if (candidates.empty()) return {};
  std::vector<std::pair<std::string, double>> scores;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.emplace_back(candidates[i].candidate.id,
                        infer_rank_pair(candidates[i], partitions[i], cfg, params, encoder, seed).value);
  }
  return rank_candidates(candidates.front().query.id, std::move(scores), tag);
}

double ql_similarity(const std::vector<std::string>& view, const std::vector<std::string>& document,
                     const CorpusStats& stats, double mu, Diagnostics* diag) {
  if (!(mu >= 0.0)) throw Error(ErrorKind::kConfigError, "mu must be nonnegative");
  if (document.empty()) throw Error(ErrorKind::kEmptyDocument, "query likelihood needs a non-empty document");
  std::map<std::string, double> doc_counts, view_counts;
  for (const auto& w : document) doc_counts[w] += 1.0;
  for (const auto& w : view) view_counts[w] += 1.0;
  const double length = static_cast<double>(document.size());
  double score = 0.0;
  for (const auto& [word, count] : view_counts) {
    const auto it = doc_counts.find(word);
    const double in_doc = it == doc_counts.end() ? 0.0 : it->second;
    if (mu == 0.0) {
      if (in_doc == 0.0) return -std::numeric_limits<double>::infinity();
      score += count * std::log(in_doc / length);
      continue;
    }
    double background = stats.background(word);
    if (in_doc == 0.0 && background <= 0.0) {
      warn(diag, "ZeroBackground: '" + word + "' has no collection probability");
      background = kBackgroundFloor;
    }
    score += count * std::log((in_doc + mu * background) / (length + mu));
  }
  return score;
}

double view_pair_ql(const DocumentPair& pair, const ViewPair& views, const CorpusStats& stats, double mu,
                    Diagnostics* diag) {
  return ql_similarity(view_tokens(pair.query, views.query), all_tokens(pair.query), stats, mu, diag) +
         ql_similarity(view_tokens(pair.candidate, views.candidate), all_tokens(pair.candidate), stats, mu, diag);
}

std::vector<std::size_t> ql_order(const DocumentPair& pair, const ViewPool& pool, const CorpusStats& stats, double mu) {
  std::vector<double> scores;
  scores.reserve(pool.size());
  for (const auto& views : pool.entries) scores.push_back(view_pair_ql(pair, views, stats, mu));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

RangeSchedule range_schedule(const DocumentPair& pair, const ViewPool& pool, const RangeScheduleSpec& spec,
                             const CorpusStats& stats, std::uint64_t seed) {
  if (spec.epochs < 1 || spec.epochs > spec.pool_size) {
    throw Error(ErrorKind::kConfigError, "range schedule needs 1 <= epochs <= pool_size");
  }
  if (pool.size() != spec.pool_size) {
    throw Error(ErrorKind::kPoolLengthMismatch, "pool of " + pool.pair_id + " has " + std::to_string(pool.size()) +
                                                    " entries, expected " + std::to_string(spec.pool_size));
  }
  const auto order = ql_order(pair, pool, stats, spec.mu);
  Rng rng(derive_seed(derive_seed(seed, "range"), pool.pair_id));
  RangeSchedule out;
  out.pool.pair_id = pool.pair_id;
  out.pool.warnings = pool.warnings;
  const std::size_t p = spec.pool_size;
  const std::size_t e = spec.epochs;
  for (std::size_t t = 0; t < e; ++t) {
    const std::size_t lo = t * p / e;
    const std::size_t hi = (t + 1) * p / e;
    const std::size_t rank = lo + rng.index(hi - lo);
    out.ranks.push_back(rank);
    out.pool.entries.push_back(pool.entries[order[rank]]);
  }
  return out;
}

namespace {

struct AttentionForward {
  std::vector<double> logits;
  std::vector<double> weights;
  double pooled = 0.0;
};

AttentionForward attention_forward(const std::vector<FeatureVector>& views, const AttentionPoolParams& params) {
  if (views.empty()) throw Error(ErrorKind::kEmptyView, "attention pooling needs at least one view");
  AttentionForward f;
  for (const auto& v : views) f.logits.push_back(dot(params.scorer.weights, standardize(v, params.scorer)));
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (double z : f.logits) max_scaled = std::max(max_scaled, params.beta * z);
  double total = 0.0;
  for (double z : f.logits) {
    f.weights.push_back(std::exp(params.beta * z - max_scaled));
    total += f.weights.back();
  }
  for (std::size_t i = 0; i < f.weights.size(); ++i) {
    f.weights[i] /= total;
    f.pooled += f.weights[i] * f.logits[i];
  }
  return f;
}

}  // namespace

double attention_pool_score(const std::vector<FeatureVector>& views, const AttentionPoolParams& params) {
  return sigmoid(attention_forward(views, params).pooled);
}

double attention_pool_loss(std::span<const AttentionExample> batch, const AttentionPoolParams& params,
                           std::array<double, kFeatureCount>* grad_w, double* grad_beta) {
  if (grad_w != nullptr) grad_w->fill(0.0);
  if (grad_beta != nullptr) *grad_beta = 0.0;
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    const auto f = attention_forward(ex.views, params);
    const double y = ex.label > 0 ? 1.0 : 0.0;
    const double z = f.pooled;
    loss += y * (z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z))) +
            (1.0 - y) * (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)));
    const double d_pooled = scale * (sigmoid(z) - y);
    for (std::size_t i = 0; i < ex.views.size(); ++i) {
      const double centered = f.logits[i] - z;
      if (grad_w != nullptr) {
        const double d_logit = d_pooled * f.weights[i] * (1.0 + params.beta * centered);
        const auto x = standardize(ex.views[i], params.scorer);
        for (std::size_t k = 0; k < kFeatureCount; ++k) (*grad_w)[k] += d_logit * x[k];
      }
      if (grad_beta != nullptr) *grad_beta += d_pooled * f.weights[i] * f.logits[i] * centered;
    }
  }
  return loss * scale;
}

TrainResult<AttentionPoolParams> train_attention_pool(const std::vector<AttentionExample>& examples,
                                                      std::size_t epochs, const MatcherTrainOptions& options,
                                                      std::uint64_t seed) {
  check_options(options);
  TrainResult<AttentionPoolParams> result;
  std::vector<FeatureVector> all_views;
  for (const auto& ex : examples) all_views.insert(all_views.end(), ex.views.begin(), ex.views.end());
  fit_standardizer(all_views, result.params.scorer);
  std::vector<AttentionExample> batch;
  for (std::size_t t = 0; t < epochs; ++t) {
    double total = 0.0;
    auto flush = [&] {
      if (batch.empty()) return;
      std::array<double, kFeatureCount> grad_w{};
      double grad_beta = 0.0;
      total += attention_pool_loss(batch, result.params, &grad_w, &grad_beta) * static_cast<double>(batch.size());
      for (std::size_t k = 0; k < kFeatureCount; ++k) result.params.scorer.weights[k] -= options.learning_rate * grad_w[k];
      result.params.beta -= options.learning_rate * grad_beta;
      batch.clear();
    };
    for (std::size_t i : epoch_order(examples.size(), seed, t)) {
      batch.push_back(examples[i]);
      if (batch.size() == options.batch_size) flush();
    }
    flush();
    result.loss_curve.push_back(examples.empty() ? 0.0 : total / static_cast<double>(examples.size()));
  }
  return result;
}

}  // namespace sst
