#include "sst/subtopic.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <limits>

#include "json.hpp"
#include "sst/linalg.hpp"

namespace sst {

namespace {

std::vector<std::vector<std::size_t>> side_clusters(const SubtopicPartition& p, std::size_t begin,
                                                    std::size_t end) {
  std::vector<std::vector<std::size_t>> out(p.m);
  for (std::size_t i = begin; i < end; ++i) {
    out[static_cast<std::size_t>(p.assignment[i])].push_back(i - begin);
  }
  return out;
}

std::vector<std::size_t> sizes_of(const std::vector<std::vector<std::size_t>>& clusters) {
  std::vector<std::size_t> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.size());
  return out;
}

}  // namespace

std::vector<std::vector<std::size_t>> SubtopicPartition::query_clusters() const {
  return side_clusters(*this, 0, split);
}

std::vector<std::vector<std::size_t>> SubtopicPartition::candidate_clusters() const {
  return side_clusters(*this, split, assignment.size());
}

std::vector<std::size_t> SubtopicPartition::query_sizes() const { return sizes_of(query_clusters()); }
std::vector<std::size_t> SubtopicPartition::candidate_sizes() const {
  return sizes_of(candidate_clusters());
}

SubtopicPartition compact_partition(const std::vector<int>& raw_assignment, std::size_t split) {
  std::vector<int> ids(raw_assignment);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  SubtopicPartition p;
  p.m = ids.size();
  p.split = split;
  p.assignment.reserve(raw_assignment.size());
  for (int raw : raw_assignment) {
    p.assignment.push_back(static_cast<int>(std::lower_bound(ids.begin(), ids.end(), raw) - ids.begin()));
  }
  return p;
}

void write_partitions_jsonl(std::ostream& out, const std::vector<std::string>& pair_ids,
                            const std::vector<SubtopicPartition>& partitions) {
  if (pair_ids.size() != partitions.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "one pair id per partition expected");
  }
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    nlohmann::ordered_json j;
    j["pair_id"] = pair_ids[i];
    j["split"] = partitions[i].split;
    j["m"] = partitions[i].m;
    j["assignment"] = partitions[i].assignment;
    out << j.dump() << '\n';
  }
}

std::vector<std::pair<std::string, SubtopicPartition>> parse_partitions_jsonl(std::istream& in) {
  std::vector<std::pair<std::string, SubtopicPartition>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto assignment = j.at("assignment").get<std::vector<int>>();
      const auto split = j.at("split").get<std::size_t>();
      if (split > assignment.size()) throw Error(ErrorKind::kParseError, "split beyond assignment", line_no);
      auto p = compact_partition(assignment, split);
      if (p.assignment != assignment || p.m != j.at("m").get<std::size_t>()) {
        throw Error(ErrorKind::kParseError, "cluster ids are not compact", line_no);
      }
      out.emplace_back(j.at("pair_id").get<std::string>(), std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParseError, std::string("partition json: ") + e.what(), line_no);
    }
  }
  return out;
}

std::size_t choose_cluster_count(std::size_t l_q, std::size_t l_d, std::size_t expected_cluster_size) {
  if (expected_cluster_size < 1) throw Error(ErrorKind::kConfigError, "expected cluster size must be positive");
  const std::size_t n = l_q + l_d;
  const auto rounded = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) / static_cast<double>(expected_cluster_size)));
  return std::min(std::max<std::size_t>(2, rounded), n);
}

SubtopicPartition spectral_cluster(const SimilarityMatrix& a, std::size_t m, std::uint64_t seed,
                                   Diagnostics* diag) {
  const std::size_t n = a.size();
  if (n == 0) return compact_partition({}, a.split);
  if (m < 1) throw Error(ErrorKind::kConfigError, "cluster count must be positive");
  m = std::min(m, n);

  const bool all_zero = std::all_of(a.values.data().begin(), a.values.data().end(),
                                    [](double v) { return v == 0.0; });
  if (all_zero) {
    warn(diag, "SingularGraph: similarity matrix is all zeros");
    std::vector<int> raw(n, 0);
    if (n <= m) {
      for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<int>(i);
    }
    return compact_partition(raw, a.split);
  }
  if (m == 1) return compact_partition(std::vector<int>(n, 0), a.split);

  Matrix adjacency = a.values;
  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < n; ++j) degree += adjacency(i, j);
    if (degree <= 0.0) {
      adjacency(i, i) = 1.0;
      degree = 1.0;
    }
    inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  Matrix laplacian(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      laplacian(i, j) = (i == j ? 1.0 : 0.0) - inv_sqrt_degree[i] * adjacency(i, j) * inv_sqrt_degree[j];
    }
  }
  // Keep the Laplacian exactly symmetric for the solver.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) laplacian(j, i) = laplacian(i, j);
  }

  const auto eigen = jacobi_eigen(laplacian, 1e-10);
  Matrix embedding(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      embedding(i, k) = eigen.vectors(i, k);
      norm += embedding(i, k) * embedding(i, k);
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (std::size_t k = 0; k < m; ++k) embedding(i, k) /= norm;
    }
  }
  const auto clusters = kmeans(embedding, m, seed);
  return compact_partition(clusters.labels, a.split);
}

SubtopicPartition cluster_direct(const DocumentPair& pair, std::size_t expected_cluster_size,
                                 std::uint64_t seed, Diagnostics* diag) {
  const auto a = lexical_similarity(pair, diag);
  const auto m = choose_cluster_count(pair.query.size(), pair.candidate.size(), expected_cluster_size);
  return spectral_cluster(a, m, seed, diag);
}

// ---------------------------------------------------------------------------

ClusterHeadParams init_head(std::size_t in_dim, std::size_t hidden, std::size_t max_clusters,
                            std::uint64_t seed) {
  if (in_dim == 0 || hidden == 0 || max_clusters == 0) {
    throw Error(ErrorKind::kConfigError, "cluster head dimensions must be positive");
  }
  Rng rng(seed);
  ClusterHeadParams p;
  p.transform = Matrix(hidden, in_dim);
  // Embedding rows are unit vectors, so unit-variance weights give O(1)
  // transformed features.
  for (double& w : p.transform.data()) w = rng.normal();
  const double attention_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.attend_self.resize(hidden);
  p.attend_neighbor.resize(hidden);
  for (double& w : p.attend_self) w = attention_scale * rng.normal();
  for (double& w : p.attend_neighbor) w = attention_scale * rng.normal();
  p.projection = Matrix(hidden, max_clusters);
  for (double& w : p.projection.data()) w = 2.0 * attention_scale * rng.normal();
  return p;
}

namespace {

bool is_neighbor(const SimilarityMatrix& adjacency, std::size_t i, std::size_t j) {
  return i == j || adjacency(i, j) > 0.0;
}

void check_head_inputs(const SimilarityMatrix& adjacency, const Matrix& embeddings,
                       const ClusterHeadParams& params, std::size_t m) {
  if (embeddings.cols() != params.in_dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "embedding width " + std::to_string(embeddings.cols()) +
                                                   " != head input width " + std::to_string(params.in_dim()));
  }
  if (adjacency.size() != embeddings.rows() || adjacency.values.cols() != embeddings.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "adjacency and embeddings disagree on sentence count");
  }
  if (m < 1 || m > params.max_clusters()) {
    throw Error(ErrorKind::kDimensionMismatch, "cluster count " + std::to_string(m) + " outside [1, " +
                                                   std::to_string(params.max_clusters()) + "]");
  }
}

}  // namespace

HeadForward head_forward(const SimilarityMatrix& adjacency, const Matrix& embeddings,
                         const ClusterHeadParams& params, std::size_t m) {
  check_head_inputs(adjacency, embeddings, params, m);
  const std::size_t n = embeddings.rows();
  const std::size_t h = params.hidden();
  const std::size_t in = params.in_dim();
  HeadForward f;
  f.m = m;
  f.transformed = Matrix(n, h);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < h; ++k) {
      double sum = 0.0;
      for (std::size_t d = 0; d < in; ++d) sum += params.transform(k, d) * embeddings(j, d);
      f.transformed(j, k) = sum;
    }
  }
  std::vector<double> self_score(n), neighbor_score(n);
  for (std::size_t j = 0; j < n; ++j) {
    self_score[j] = dot(params.attend_self, f.transformed.row(j));
    neighbor_score[j] = dot(params.attend_neighbor, f.transformed.row(j));
  }
  f.pre_scores = Matrix(n, n);
  f.attention = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_neighbor(adjacency, i, j)) continue;
      const double pre = self_score[i] + neighbor_score[j];
      f.pre_scores(i, j) = pre;
      max_score = std::max(max_score, pre > 0.0 ? pre : kLeakySlope * pre);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_neighbor(adjacency, i, j)) continue;
      const double pre = f.pre_scores(i, j);
      const double score = pre > 0.0 ? pre : kLeakySlope * pre;
      f.attention(i, j) = std::exp(score - max_score);
      total += f.attention(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) f.attention(i, j) /= total;
  }
  f.hidden = Matrix(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double alpha = f.attention(i, j);
      if (alpha == 0.0) continue;
      for (std::size_t k = 0; k < h; ++k) f.hidden(i, k) += alpha * f.transformed(j, k);
    }
    for (std::size_t k = 0; k < h; ++k) f.hidden(i, k) = std::tanh(f.hidden(i, k));
  }
  f.assignment = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) {
      double logit = 0.0;
      for (std::size_t k = 0; k < h; ++k) logit += f.hidden(i, k) * params.projection(k, c);
      f.assignment(i, c) = logit;
      max_logit = std::max(max_logit, logit);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      f.assignment(i, c) = std::exp(f.assignment(i, c) - max_logit);
      total += f.assignment(i, c);
    }
    for (std::size_t c = 0; c < m; ++c) f.assignment(i, c) /= total;
  }
  return f;
}

Matrix assign_soft(const SimilarityMatrix& adjacency, const Matrix& embeddings, const ClusterHeadParams& params,
                   std::size_t m) {
  return head_forward(adjacency, embeddings, params, m).assignment;
}

HeadGradient HeadGradient::zeros_like(const ClusterHeadParams& params) {
  return {Matrix(params.hidden(), params.in_dim()), std::vector<double>(params.hidden(), 0.0),
          std::vector<double>(params.hidden(), 0.0), Matrix(params.hidden(), params.max_clusters())};
}

void HeadGradient::scale(double factor) {
  for (double& v : transform.data()) v *= factor;
  for (double& v : attend_self) v *= factor;
  for (double& v : attend_neighbor) v *= factor;
  for (double& v : projection.data()) v *= factor;
}

void head_backward(const HeadForward& f, const SimilarityMatrix& adjacency, const Matrix& embeddings,
                   const ClusterHeadParams& params, const Matrix& d_assignment, HeadGradient& grad) {
  const std::size_t n = embeddings.rows();
  const std::size_t h = params.hidden();
  const std::size_t in = params.in_dim();
  const std::size_t m = f.m;

  Matrix d_hidden(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    double weighted = 0.0;
    for (std::size_t c = 0; c < m; ++c) weighted += d_assignment(i, c) * f.assignment(i, c);
    for (std::size_t c = 0; c < m; ++c) {
      const double d_logit = f.assignment(i, c) * (d_assignment(i, c) - weighted);
      for (std::size_t k = 0; k < h; ++k) {
        grad.projection(k, c) += f.hidden(i, k) * d_logit;
        d_hidden(i, k) += params.projection(k, c) * d_logit;
      }
    }
  }
  // Through tanh.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < h; ++k) d_hidden(i, k) *= 1.0 - f.hidden(i, k) * f.hidden(i, k);
  }

  Matrix d_transformed(n, h);
  std::vector<double> d_self(n, 0.0), d_neighbor(n, 0.0);
  std::vector<double> d_alpha(n);
  for (std::size_t i = 0; i < n; ++i) {
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_neighbor(adjacency, i, j)) continue;
      d_alpha[j] = dot(d_hidden.row(i), f.transformed.row(j));
      weighted += f.attention(i, j) * d_alpha[j];
      for (std::size_t k = 0; k < h; ++k) d_transformed(j, k) += f.attention(i, j) * d_hidden(i, k);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_neighbor(adjacency, i, j)) continue;
      const double d_score = f.attention(i, j) * (d_alpha[j] - weighted);
      const double d_pre = d_score * (f.pre_scores(i, j) > 0.0 ? 1.0 : kLeakySlope);
      d_self[i] += d_pre;
      d_neighbor[j] += d_pre;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < h; ++k) {
      grad.attend_self[k] += d_self[j] * f.transformed(j, k);
      grad.attend_neighbor[k] += d_neighbor[j] * f.transformed(j, k);
      d_transformed(j, k) += d_self[j] * params.attend_self[k] + d_neighbor[j] * params.attend_neighbor[k];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < h; ++k) {
      const double g = d_transformed(j, k);
      if (g == 0.0) continue;
      for (std::size_t d = 0; d < in; ++d) grad.transform(k, d) += g * embeddings(j, d);
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

std::size_t row_argmax(const Matrix& b, std::size_t i) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < b.cols(); ++c) {
    if (b(i, c) > b(i, best)) best = c;
  }
  return best;
}

struct Pooled {
  std::vector<double> raw;  // summed max-pooled rows
  double total = 0.0;
  std::vector<double> distribution;
};

Pooled pool_rows(const Matrix& b, std::size_t begin, std::size_t end, double epsilon) {
  const std::size_t m = b.cols();
  Pooled p;
  p.raw.assign(m, 0.0);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t c = row_argmax(b, i);
    p.raw[c] += b(i, c);
  }
  for (double v : p.raw) p.total += v;
  p.distribution.resize(m);
  const double denominator = 1.0 + static_cast<double>(m) * epsilon;
  for (std::size_t c = 0; c < m; ++c) p.distribution[c] = (p.raw[c] / p.total + epsilon) / denominator;
  return p;
}

// dL/dB for rows [begin, end) given dL/dp of the pooled distribution.
void pool_backward(const Matrix& b, std::size_t begin, std::size_t end, double epsilon, const Pooled& p,
                   const std::vector<double>& d_distribution, Matrix& grad) {
  const std::size_t m = b.cols();
  const double denominator = 1.0 + static_cast<double>(m) * epsilon;
  std::vector<double> d_ratio(m);
  double weighted = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    d_ratio[c] = d_distribution[c] / denominator;
    weighted += d_ratio[c] * p.raw[c] / p.total;
  }
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t c = row_argmax(b, i);
    grad(i, c) += (d_ratio[c] - weighted) / p.total;
  }
}

}  // namespace

std::vector<double> pooled_distribution(const Matrix& b, std::size_t begin, std::size_t end, double epsilon) {
  if (begin >= end || end > b.rows()) throw Error(ErrorKind::kDimensionMismatch, "empty or invalid row range");
  return pool_rows(b, begin, end, epsilon).distribution;
}

double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sum += 0.5 * (p[i] * std::log(p[i] / q[i]) + q[i] * std::log(q[i] / p[i]));
  }
  return sum;
}

double loss_positive(const Matrix& b, std::size_t l_q, std::size_t l_d, double epsilon, Matrix* grad) {
  if (l_q == 0 || l_d == 0 || l_q + l_d != b.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "l_q + l_d must equal the row count with both positive");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kConfigError, "epsilon_js must be positive");
  const auto pq = pool_rows(b, 0, l_q, epsilon);
  const auto pd = pool_rows(b, l_q, l_q + l_d, epsilon);
  const double loss = symmetric_kl(pq.distribution, pd.distribution);
  if (grad != nullptr) {
    if (grad->rows() != b.rows() || grad->cols() != b.cols()) *grad = Matrix(b.rows(), b.cols());
    const std::size_t m = b.cols();
    std::vector<double> dq(m), dd(m);
    for (std::size_t c = 0; c < m; ++c) {
      const double p = pq.distribution[c];
      const double q = pd.distribution[c];
      dq[c] = 0.5 * (std::log(p / q) + 1.0 - q / p);
      dd[c] = 0.5 * (std::log(q / p) + 1.0 - p / q);
    }
    pool_backward(b, 0, l_q, epsilon, pq, dq, *grad);
    pool_backward(b, l_q, l_q + l_d, epsilon, pd, dd, *grad);
  }
  return loss;
}

double loss_negative(const Matrix& b, Matrix* grad) {
  const std::size_t n = b.rows();
  const std::size_t m = b.cols();
  Matrix gram(m, m);
  for (std::size_t x = 0; x < m; ++x) {
    for (std::size_t y = x; y < m; ++y) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += b(i, x) * b(i, y);
      gram(x, y) = sum - (x == y ? 1.0 : 0.0);
      gram(y, x) = gram(x, y);
    }
  }
  double squared = 0.0;
  for (double v : gram.data()) squared += v * v;
  const double loss = std::sqrt(squared);
  if (grad != nullptr) {
    *grad = Matrix(n, m);
    if (loss > 0.0) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < m; ++c) {
          double sum = 0.0;
          for (std::size_t k = 0; k < m; ++k) sum += b(i, k) * gram(k, c);
          (*grad)(i, c) = 2.0 * sum / loss;
        }
      }
    }
  }
  return loss;
}

HeadExample make_head_example(const DocumentPair& pair, const SentenceEncoder& encoder, std::size_t keep_top,
                              std::size_t expected_cluster_size, std::size_t max_clusters) {
  HeadExample ex;
  ex.l_q = pair.query.size();
  ex.l_d = pair.candidate.size();
  ex.embeddings = encoder.encode_all(combined_tokens(pair));
  ex.adjacency = normalize_sparsify(dot_similarity(ex.embeddings, ex.l_q), keep_top);
  ex.m = std::min(choose_cluster_count(ex.l_q, ex.l_d, expected_cluster_size), max_clusters);
  ex.label = pair.label;
  return ex;
}

double head_loss(const HeadExample& example, const ClusterHeadParams& params, const AdaptiveLossConfig& config,
                 HeadGradient* grad) {
  const bool positive = example.label > 0;
  if ((positive && !config.enable_lp) || (!positive && !config.enable_ln)) return 0.0;
  const auto forward = head_forward(example.adjacency, example.embeddings, params, example.m);
  Matrix d_assignment;
  double loss = 0.0;
  if (positive) {
    loss = loss_positive(forward.assignment, example.l_q, example.l_d, config.epsilon_js,
                         grad != nullptr ? &d_assignment : nullptr);
  } else {
    loss = config.lambda * loss_negative(forward.assignment, grad != nullptr ? &d_assignment : nullptr);
    for (double& v : d_assignment.data()) v *= config.lambda;
  }
  if (grad != nullptr) head_backward(forward, example.adjacency, example.embeddings, params, d_assignment, *grad);
  return loss;
}

void apply_gradient(ClusterHeadParams& params, const HeadGradient& grad, double learning_rate) {
  if (params.frozen) throw Error(ErrorKind::kConfigError, "cluster head is frozen");
  for (std::size_t i = 0; i < params.transform.data().size(); ++i) {
    params.transform.data()[i] -= learning_rate * grad.transform.data()[i];
  }
  for (std::size_t k = 0; k < params.hidden(); ++k) {
    params.attend_self[k] -= learning_rate * grad.attend_self[k];
    params.attend_neighbor[k] -= learning_rate * grad.attend_neighbor[k];
  }
  for (std::size_t i = 0; i < params.projection.data().size(); ++i) {
    params.projection.data()[i] -= learning_rate * grad.projection.data()[i];
  }
}

ClusterHeadParams train_head(std::span<const HeadExample> examples, const AdaptiveLossConfig& config,
                             const HeadTrainOptions& options, std::uint64_t seed, const HeadEpochCallback& on_epoch) {
  if (!config.enable_lp && !config.enable_ln) {
    throw Error(ErrorKind::kNoLossEnabled, "both L_p and L_n are disabled");
  }
  if (!(config.lambda >= 0.0)) throw Error(ErrorKind::kConfigError, "lambda must be nonnegative");
  if (!(config.epsilon_js > 0.0)) throw Error(ErrorKind::kConfigError, "epsilon_js must be positive");
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].label > 0 ? positives : negatives).push_back(i);
  }
  if (config.enable_lp && positives.empty()) {
    throw Error(ErrorKind::kNoPositivePairs, "L_p is enabled but there are no positive pairs");
  }
  if (config.enable_ln && negatives.empty()) {
    throw Error(ErrorKind::kNoNegativePairs, "L_n is enabled but there are no negative pairs");
  }
  std::vector<const std::vector<std::size_t>*> classes;
  if (config.enable_lp) classes.push_back(&positives);
  if (config.enable_ln) classes.push_back(&negatives);

  auto params = init_head(examples.front().embeddings.cols(), options.hidden, options.max_clusters,
                          derive_seed(seed, "head-init"));
  Rng rng(derive_seed(seed, "head-train"));
  if (options.batch_size == 0) throw Error(ErrorKind::kConfigError, "head batch size must be positive");
  const std::size_t batch = options.batch_size;
  const std::size_t steps =
      options.steps_per_epoch > 0 ? options.steps_per_epoch : std::max<std::size_t>(1, (examples.size() + batch - 1) / batch);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t step = 0; step < steps; ++step) {
      auto grad = HeadGradient::zeros_like(params);
      for (std::size_t k = 0; k < batch; ++k) {
        const auto& members = *classes[(step * batch + k) % classes.size()];
        head_loss(examples[members[rng.index(members.size())]], params, config, &grad);
      }
      grad.scale(1.0 / static_cast<double>(batch));
      apply_gradient(params, grad, options.learning_rate);
    }
    if (on_epoch) on_epoch(epoch + 1, params);
  }
  params.frozen = true;
  return params;
}

SubtopicPartition harden(const Matrix& b, std::size_t split) {
  std::vector<int> raw(b.rows());
  for (std::size_t i = 0; i < b.rows(); ++i) raw[i] = static_cast<int>(row_argmax(b, i));
  return compact_partition(raw, split);
}

SubtopicPartition cluster_adaptive(const HeadExample& example, const ClusterHeadParams& params) {
  return harden(assign_soft(example.adjacency, example.embeddings, params, example.m), example.l_q);
}

// ---------------------------------------------------------------------------

std::string head_to_json(const ClusterHeadParams& params) {
  nlohmann::json j;
  j["kind"] = "cluster_head";
  j["in_dim"] = params.in_dim();
  j["hidden"] = params.hidden();
  j["max_clusters"] = params.max_clusters();
  j["frozen"] = params.frozen;
  j["transform"] = params.transform.data();
  j["attend_self"] = params.attend_self;
  j["attend_neighbor"] = params.attend_neighbor;
  j["projection"] = params.projection.data();
  return j.dump(1);
}

ClusterHeadParams head_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("kind") != "cluster_head") throw Error(ErrorKind::kParseError, "not a cluster head file");
    const auto in = j.at("in_dim").get<std::size_t>();
    const auto hidden = j.at("hidden").get<std::size_t>();
    const auto max_clusters = j.at("max_clusters").get<std::size_t>();
    ClusterHeadParams p;
    p.transform = Matrix(hidden, in);
    p.transform.data() = j.at("transform").get<std::vector<double>>();
    p.attend_self = j.at("attend_self").get<std::vector<double>>();
    p.attend_neighbor = j.at("attend_neighbor").get<std::vector<double>>();
    p.projection = Matrix(hidden, max_clusters);
    p.projection.data() = j.at("projection").get<std::vector<double>>();
    p.frozen = j.at("frozen").get<bool>();
    if (p.transform.data().size() != hidden * in || p.attend_self.size() != hidden ||
        p.attend_neighbor.size() != hidden || p.projection.data().size() != hidden * max_clusters) {
      throw Error(ErrorKind::kDimensionMismatch, "cluster head arrays disagree with the shape header");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("cluster head json: ") + e.what());
  }
}

}  // namespace sst
