#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/simgraph.hpp"

namespace sst {

inline constexpr std::size_t kFeatureCount = 6;

// overlap count, overlap / (ln|q| + ln|d|), TF-IDF cosine, Jaccard,
// min/max length ratio, bias.
using FeatureVector = std::array<double, kFeatureCount>;

enum Feature : std::size_t {
  kOverlapCount = 0,
  kNormalizedOverlap = 1,
  kTfidfCosine = 2,
  kJaccard = 3,
  kLengthRatio = 4,
  kBias = 5,
};

// Throws kEmptyView when either side has no tokens.
FeatureVector featurize(const std::vector<std::string>& query_tokens, const std::vector<std::string>& doc_tokens,
                        const CorpusStats& stats);

struct MatchScore {
  double value = 0.0;
  // Sigmoid-mapped into [0, 1].
  bool calibrated = false;
};

// Score: sigmoid(w . ((f - offset) / scale)). The default standardizer is
// the identity; training fits it to the first epoch's features.
struct ClassifierParams {
  std::array<double, kFeatureCount> weights{};
  std::array<double, kFeatureCount> offset{};
  std::array<double, kFeatureCount> scale{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  bool operator==(const ClassifierParams&) const = default;
};

// Per-feature mean and standard deviation (1 where the spread is zero); the
// bias feature is left untouched.
void fit_standardizer(std::span<const FeatureVector> features, ClassifierParams& params);

FeatureVector standardize(const FeatureVector& features, const ClassifierParams& params);

double sigmoid(double z);

MatchScore score_classify(const FeatureVector& features, const ClassifierParams& params);

struct ClassifyExample {
  FeatureVector features{};
  int label = 0;
};

// Mean binary cross-entropy; `grad`, when given, receives dL/dw (the
// standardizer is fixed).
double classify_loss(std::span<const ClassifyExample> batch, const ClassifierParams& params,
                     std::array<double, kFeatureCount>* grad = nullptr);

// One gradient-descent step. Returns the loss before the update.
double train_step_classify(std::span<const ClassifyExample> batch, ClassifierParams& params, double learning_rate);

struct RankParams {
  Matrix projection;  // dim x dim

  bool operator==(const RankParams&) const = default;
};

RankParams init_rank_params(std::size_t dim);

// Throws kEmptyView for a view without tokens.
std::vector<double> embed_view(const std::vector<std::string>& tokens, const SentenceEncoder& encoder);

// (P e_q) . (P e_d).
MatchScore score_rank(std::span<const double> query, std::span<const double> doc, const RankParams& params);

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr std::size_t kDefaultNegatives = 7;
// Matcher learning rate used when nothing else is configured.
inline constexpr double kDefaultMatcherLearningRate = 1e-5;

// -ln softmax of the positive among {positive} + negatives at temperature
// tau. `grad`, when given, receives dL/dP.
double rank_loss(std::span<const double> query, std::span<const double> positive,
                 const std::vector<std::vector<double>>& negatives, const RankParams& params, double temperature,
                 Matrix* grad = nullptr);

// Returns the loss before the update.
double train_step_rank(std::span<const double> query, std::span<const double> positive,
                       const std::vector<std::vector<double>>& negatives, RankParams& params, double temperature,
                       double learning_rate);

std::string classifier_to_json(const ClassifierParams& params);
ClassifierParams classifier_from_json(const std::string& text);
std::string ranker_to_json(const RankParams& params);
RankParams ranker_from_json(const std::string& text);

}  // namespace sst
