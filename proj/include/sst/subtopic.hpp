#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/simgraph.hpp"

namespace sst {

// Hard clustering of the combined sentence set. Ids are compact: every id in
// [0, m) has at least one sentence.
struct SubtopicPartition {
  std::size_t m = 0;
  std::vector<int> assignment;
  // Number of query sentences; assignment[split + j] is candidate sentence j.
  std::size_t split = 0;

  std::size_t query_length() const { return split; }
  std::size_t candidate_length() const { return assignment.size() - split; }

  // Per cluster, member sentence indices local to each document (ascending).
  std::vector<std::vector<std::size_t>> query_clusters() const;
  std::vector<std::vector<std::size_t>> candidate_clusters() const;
  std::vector<std::size_t> query_sizes() const;
  std::vector<std::size_t> candidate_sizes() const;

  bool operator==(const SubtopicPartition&) const = default;
};

// Drops unused ids and renumbers the rest in increasing order.
SubtopicPartition compact_partition(const std::vector<int>& raw_assignment, std::size_t split);

// JSONL, one {pair_id, split, m, assignment} object per line.
void write_partitions_jsonl(std::ostream& out, const std::vector<std::string>& pair_ids,
                            const std::vector<SubtopicPartition>& partitions);
// Checks that ids are compact; throws kParseError with the line number.
std::vector<std::pair<std::string, SubtopicPartition>> parse_partitions_jsonl(std::istream& in);

inline constexpr std::size_t kDefaultClusterSize = 6;

// max(2, round(n / expected_cluster_size)), capped at n = l_q + l_d.
std::size_t choose_cluster_count(std::size_t l_q, std::size_t l_d,
                                 std::size_t expected_cluster_size = kDefaultClusterSize);

// Normalized-Laplacian spectral clustering: the m smallest eigenvectors of
// I - D^{-1/2} A D^{-1/2} (unit self-loop on zero-degree rows), row
// normalized, then k-means++ with 10 restarts. An all-zero A is reported as
// SingularGraph: the pair becomes one cluster, unless n <= m in which case
// every (isolated) sentence is its own cluster.
SubtopicPartition spectral_cluster(const SimilarityMatrix& a, std::size_t m, std::uint64_t seed,
                                   Diagnostics* diag = nullptr);

// Lexical similarity + spectral clustering with m from choose_cluster_count.
SubtopicPartition cluster_direct(const DocumentPair& pair, std::size_t expected_cluster_size,
                                 std::uint64_t seed, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------------------
// Adaptive clustering head: one graph-attention layer followed by a softmax
// over the first m of m_max output columns.

struct ClusterHeadParams {
  Matrix transform;                       // hidden x in_dim
  std::vector<double> attend_self;        // hidden
  std::vector<double> attend_neighbor;    // hidden
  Matrix projection;                      // hidden x m_max
  bool frozen = false;

  std::size_t in_dim() const { return transform.cols(); }
  std::size_t hidden() const { return transform.rows(); }
  std::size_t max_clusters() const { return projection.cols(); }

  bool operator==(const ClusterHeadParams&) const = default;
};

inline constexpr std::size_t kDefaultHeadHidden = 16;
inline constexpr std::size_t kDefaultMaxClusters = 16;
inline constexpr double kLeakySlope = 0.2;

ClusterHeadParams init_head(std::size_t in_dim, std::size_t hidden, std::size_t max_clusters,
                            std::uint64_t seed);

// Intermediate values of one forward pass, kept for the backward pass.
struct HeadForward {
  Matrix transformed;   // n x hidden, z_j = W e_j
  Matrix pre_scores;    // n x n, a_self.z_i + a_neighbor.z_j (masked entries unused)
  Matrix attention;     // n x n, masked softmax per row
  Matrix hidden;        // n x hidden, tanh(sum_j alpha_ij z_j)
  Matrix assignment;    // n x m, B
  std::size_t m = 0;
};

// Neighbors of i are j with adjacency(i, j) > 0, plus i itself.
HeadForward head_forward(const SimilarityMatrix& adjacency, const Matrix& embeddings,
                         const ClusterHeadParams& params, std::size_t m);

Matrix assign_soft(const SimilarityMatrix& adjacency, const Matrix& embeddings,
                   const ClusterHeadParams& params, std::size_t m);

struct HeadGradient {
  Matrix transform;
  std::vector<double> attend_self;
  std::vector<double> attend_neighbor;
  Matrix projection;

  static HeadGradient zeros_like(const ClusterHeadParams& params);
  void scale(double factor);
};

// Accumulates dL/dparams into `grad` given dL/dB.
void head_backward(const HeadForward& forward, const SimilarityMatrix& adjacency, const Matrix& embeddings,
                   const ClusterHeadParams& params, const Matrix& d_assignment, HeadGradient& grad);

// Max-pooled cluster distribution of rows [begin, end): each row keeps its
// maximum at its argmax (first on ties), rows are summed, the sum is
// normalized, epsilon is added to every component and it is renormalized.
std::vector<double> pooled_distribution(const Matrix& b, std::size_t begin, std::size_t end, double epsilon);

// 1/2 * sum_i (p_i ln(p_i/q_i) + q_i ln(q_i/p_i)).
double symmetric_kl(std::span<const double> p, std::span<const double> q);

// Positive-pair loss. When `grad` is non-null it receives dL/dB.
double loss_positive(const Matrix& b, std::size_t l_q, std::size_t l_d, double epsilon, Matrix* grad = nullptr);

// ||B^T B - I||_F. When `grad` is non-null it receives dL/dB.
double loss_negative(const Matrix& b, Matrix* grad = nullptr);

struct AdaptiveLossConfig {
  double lambda = 1.0;
  double epsilon_js = 1e-6;
  bool enable_lp = true;
  bool enable_ln = true;
};

struct HeadTrainOptions {
  double learning_rate = 1e-3;
  std::size_t epochs = 5;
  std::size_t hidden = kDefaultHeadHidden;
  std::size_t max_clusters = kDefaultMaxClusters;
  // Pairs per update, split evenly across the enabled classes.
  std::size_t batch_size = 16;
  // Updates per epoch; 0 means enough batches to cover the examples once.
  std::size_t steps_per_epoch = 0;
};

// Everything the head needs for one pair.
struct HeadExample {
  SimilarityMatrix adjacency;  // normalized and sparsified
  Matrix embeddings;
  std::size_t l_q = 0;
  std::size_t l_d = 0;
  std::size_t m = 0;
  int label = 0;
};

HeadExample make_head_example(const DocumentPair& pair, const SentenceEncoder& encoder,
                              std::size_t keep_top = kDefaultKeepTop,
                              std::size_t expected_cluster_size = kDefaultClusterSize,
                              std::size_t max_clusters = kDefaultMaxClusters);

// L_p for positive examples, lambda * L_n for negative ones (subject to the
// enable switches). Accumulates the gradient when `grad` is non-null.
double head_loss(const HeadExample& example, const ClusterHeadParams& params, const AdaptiveLossConfig& config,
                 HeadGradient* grad = nullptr);

// params -= learning_rate * grad. Throws kConfigError on frozen params.
void apply_gradient(ClusterHeadParams& params, const HeadGradient& grad, double learning_rate);

using HeadEpochCallback = std::function<void(std::size_t epoch, const ClusterHeadParams&)>;

// One pair per gradient step, classes alternating so positives and
// negatives are balanced. Returns frozen params.
ClusterHeadParams train_head(std::span<const HeadExample> examples, const AdaptiveLossConfig& config,
                             const HeadTrainOptions& options, std::uint64_t seed,
                             const HeadEpochCallback& on_epoch = {});

// argmax per row, ties to the lowest id, then compacted.
SubtopicPartition harden(const Matrix& b, std::size_t split);

SubtopicPartition cluster_adaptive(const HeadExample& example, const ClusterHeadParams& params);

std::string head_to_json(const ClusterHeadParams& params);
ClusterHeadParams head_from_json(const std::string& text);

}  // namespace sst
