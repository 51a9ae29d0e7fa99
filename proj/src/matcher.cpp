#include "sst/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

namespace sst {

FeatureVector featurize(const std::vector<std::string>& query_tokens, const std::vector<std::string>& doc_tokens,
                        const CorpusStats& stats) {
  if (query_tokens.empty() || doc_tokens.empty()) throw Error(ErrorKind::kEmptyView, "view has no tokens");
  std::map<std::string, double> q_counts, d_counts;
  for (const auto& t : query_tokens) q_counts[t] += 1.0;
  for (const auto& t : doc_tokens) d_counts[t] += 1.0;

  double shared = 0.0;
  double dot_product = 0.0;
  for (const auto& [word, count] : q_counts) {
    const auto it = d_counts.find(word);
    if (it == d_counts.end()) continue;
    shared += 1.0;
    const double idf = stats.idf(word);
    dot_product += count * idf * it->second * idf;
  }
  auto norm = [&](const std::map<std::string, double>& counts) {
    double sum = 0.0;
    for (const auto& [word, count] : counts) {
      const double w = count * stats.idf(word);
      sum += w * w;
    }
    return std::sqrt(sum);
  };
  const double union_size = static_cast<double>(q_counts.size() + d_counts.size()) - shared;
  const double lq = static_cast<double>(query_tokens.size());
  const double ld = static_cast<double>(doc_tokens.size());

  FeatureVector f{};
  f[kOverlapCount] = shared;
  f[kNormalizedOverlap] = shared / std::max(std::log(lq) + std::log(ld), kDenominatorFloor);
  f[kTfidfCosine] = dot_product / (norm(q_counts) * norm(d_counts));
  f[kJaccard] = shared / union_size;
  f[kLengthRatio] = std::min(lq, ld) / std::max(lq, ld);
  f[kBias] = 1.0;
  return f;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void fit_standardizer(std::span<const FeatureVector> features, ClassifierParams& params) {
  params.offset.fill(0.0);
  params.scale.fill(1.0);
  if (features.empty()) return;
  const double n = static_cast<double>(features.size());
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    if (k == kBias) continue;
    double mean = 0.0;
    for (const auto& f : features) mean += f[k];
    mean /= n;
    double variance = 0.0;
    for (const auto& f : features) variance += (f[k] - mean) * (f[k] - mean);
    const double sd = std::sqrt(variance / n);
    params.offset[k] = mean;
    params.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
}

FeatureVector standardize(const FeatureVector& features, const ClassifierParams& params) {
  FeatureVector out{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) out[k] = (features[k] - params.offset[k]) / params.scale[k];
  return out;
}

MatchScore score_classify(const FeatureVector& features, const ClassifierParams& params) {
  return {sigmoid(dot(params.weights, standardize(features, params))), true};
}

namespace {

// ln(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double classify_loss(std::span<const ClassifyExample> batch, const ClassifierParams& params,
                     std::array<double, kFeatureCount>* grad) {
  if (grad != nullptr) grad->fill(0.0);
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    const auto x = standardize(ex.features, params);
    const double z = dot(params.weights, x);
    const double y = ex.label > 0 ? 1.0 : 0.0;
    // -y ln s(z) - (1 - y) ln(1 - s(z))
    loss += y * softplus(-z) + (1.0 - y) * softplus(z);
    if (grad != nullptr) {
      const double residual = sigmoid(z) - y;
      for (std::size_t i = 0; i < kFeatureCount; ++i) (*grad)[i] += scale * residual * x[i];
    }
  }
  return loss * scale;
}

double train_step_classify(std::span<const ClassifyExample> batch, ClassifierParams& params, double learning_rate) {
  std::array<double, kFeatureCount> grad{};
  const double loss = classify_loss(batch, params, &grad);
  for (std::size_t i = 0; i < kFeatureCount; ++i) params.weights[i] -= learning_rate * grad[i];
  return loss;
}

RankParams init_rank_params(std::size_t dim) { return {Matrix::identity(dim)}; }

std::vector<double> embed_view(const std::vector<std::string>& tokens, const SentenceEncoder& encoder) {
  if (tokens.empty()) throw Error(ErrorKind::kEmptyView, "view has no tokens");
  return encoder.encode(tokens);
}

namespace {

std::vector<double> project(const Matrix& p, std::span<const double> x) {
  if (p.cols() != x.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedding width " + std::to_string(x.size()) +
                                                   " != projection width " + std::to_string(p.cols()));
  }
  std::vector<double> out(p.rows(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) out[i] = dot(p.row(i), x);
  return out;
}

}  // namespace

MatchScore score_rank(std::span<const double> query, std::span<const double> doc, const RankParams& params) {
  return {dot(project(params.projection, query), project(params.projection, doc)), false};
}

double rank_loss(std::span<const double> query, std::span<const double> positive,
                 const std::vector<std::vector<double>>& negatives, const RankParams& params, double temperature,
                 Matrix* grad) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::kConfigError, "temperature must be positive");
  if (negatives.empty()) throw Error(ErrorKind::kConfigError, "InfoNCE needs at least one negative");
  const Matrix& p = params.projection;
  const auto pq = project(p, query);
  std::vector<std::span<const double>> docs{positive};
  for (const auto& n : negatives) docs.emplace_back(n);
  std::vector<std::vector<double>> pd;
  std::vector<double> logits;
  for (const auto& d : docs) {
    pd.push_back(project(p, d));
    logits.push_back(dot(pq, pd.back()) / temperature);
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double l : logits) total += std::exp(l - max_logit);
  const double log_total = max_logit + std::log(total);
  const double loss = log_total - logits[0];

  if (grad != nullptr) {
    *grad = Matrix(p.rows(), p.cols());
    // d s_j / dP = (P q) d_j^T + (P d_j) q^T
    for (std::size_t j = 0; j < docs.size(); ++j) {
      const double d_score = (std::exp(logits[j] - log_total) - (j == 0 ? 1.0 : 0.0)) / temperature;
      for (std::size_t r = 0; r < p.rows(); ++r) {
        for (std::size_t c = 0; c < p.cols(); ++c) {
          (*grad)(r, c) += d_score * (pq[r] * docs[j][c] + pd[j][r] * query[c]);
        }
      }
    }
  }
  return loss;
}

double train_step_rank(std::span<const double> query, std::span<const double> positive,
                       const std::vector<std::vector<double>>& negatives, RankParams& params, double temperature,
                       double learning_rate) {
  Matrix grad;
  const double loss = rank_loss(query, positive, negatives, params, temperature, &grad);
  for (std::size_t i = 0; i < grad.data().size(); ++i) {
    params.projection.data()[i] -= learning_rate * grad.data()[i];
  }
  return loss;
}

std::string classifier_to_json(const ClassifierParams& params) {
  nlohmann::ordered_json j;
  j["kind"] = "classifier";
  j["features"] = {"overlap", "normalized_overlap", "tfidf_cosine", "jaccard", "length_ratio", "bias"};
  j["weights"] = params.weights;
  j["offset"] = params.offset;
  j["scale"] = params.scale;
  return j.dump(1);
}

ClassifierParams classifier_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind") != "classifier") throw Error(ErrorKind::kParseError, "not a classifier file");
    ClassifierParams p;
    auto read = [&](const char* key, std::array<double, kFeatureCount>& dest) {
      if (!j.contains(key)) return;
      const auto values = j.at(key).get<std::vector<double>>();
      if (values.size() != kFeatureCount) {
        throw Error(ErrorKind::kDimensionMismatch, std::string("classifier ") + key + " needs 6 values");
      }
      std::copy(values.begin(), values.end(), dest.begin());
    };
    if (!j.contains("weights")) throw Error(ErrorKind::kParseError, "classifier file has no weights");
    read("weights", p.weights);
    read("offset", p.offset);
    read("scale", p.scale);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("classifier json: ") + e.what());
  }
}

std::string ranker_to_json(const RankParams& params) {
  nlohmann::ordered_json j;
  j["kind"] = "ranker";
  j["dim"] = params.projection.rows();
  j["projection"] = params.projection.data();
  return j.dump(1);
}

RankParams ranker_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind") != "ranker") throw Error(ErrorKind::kParseError, "not a ranker file");
    const auto dim = j.at("dim").get<std::size_t>();
    RankParams p{Matrix(dim, dim)};
    p.projection.data() = j.at("projection").get<std::vector<double>>();
    if (p.projection.data().size() != dim * dim) {
      throw Error(ErrorKind::kDimensionMismatch, "projection size disagrees with dim");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("ranker json: ") + e.what());
  }
}

}  // namespace sst
