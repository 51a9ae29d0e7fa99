#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/subtopic.hpp"

namespace sst {

// Cluster-selection probabilities; one entry per cluster.
using SamplingDistribution = std::vector<double>;

struct View {
  std::string doc_id;
  // Ascending document positions.
  std::vector<std::size_t> indices;
  std::size_t k_target = 0;

  bool operator==(const View&) const = default;
};

struct ViewPair {
  View query;
  View candidate;

  bool operator==(const ViewPair&) const = default;
};

struct ViewPool {
  std::string pair_id;
  std::vector<ViewPair> entries;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
};

enum class SamplerKind { kUniform, kHard, kSoft, kRandom, kNegative };

const char* to_string(SamplerKind kind);
// Throws kConfigError on unknown names.
SamplerKind parse_sampler(std::string_view name);

// Roulette-wheel draw of k sentences. Each draw picks a cluster from `probs`
// restricted to clusters that still have sentences left, then one of that
// cluster's remaining sentences uniformly. Stops early when every cluster
// with positive probability is exhausted. Returns indices in draw order;
// `drawn_clusters`, when given, receives the cluster of each draw.
std::vector<std::size_t> roulette_select(const std::vector<std::vector<std::size_t>>& clusters, std::size_t k,
                                         std::span<const double> probs, Rng& rng,
                                         std::vector<std::size_t>* drawn_clusters = nullptr);

// 1/m' over the m' clusters with a member on this side, 0 elsewhere.
SamplingDistribution uniform_distribution(const std::vector<std::size_t>& side_sizes);

struct SoftDistributions {
  SamplingDistribution alignment;  // P^a
  SamplingDistribution query;      // Q^q
  SamplingDistribution candidate;  // Q^d
};

// Throws kNoAlignedCluster when no cluster holds sentences of both documents.
SoftDistributions soft_distributions(const SubtopicPartition& partition);

// argmax_i min(|c_i^q|, |c_i^d|), lowest index on ties.
std::size_t primary_cluster(const SubtopicPartition& partition);

// Clusters with min(|c_i^q|, |c_i^d|) > 0 by ascending min size (lowest
// index on ties), followed by the remaining clusters by index.
std::vector<std::size_t> ascending_cluster_order(const SubtopicPartition& partition);

ViewPair sample_uniform(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng);
ViewPair sample_hard(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng);
ViewPair sample_soft(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng);
ViewPair sample_negative(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng);
// Contiguous window of min(k, len) sentences at a uniform start.
View sample_random(const Document& document, std::size_t k, Rng& rng);

ViewPair sample_views(SamplerKind kind, const DocumentPair& pair, const SubtopicPartition& partition,
                      std::size_t k, Rng& rng);

// `pool_size` view pairs from the stream derive_seed(derive_seed(seed,
// stream), pair id). The random sampler ignores `partition`. Soft sampling
// on a pair without an aligned cluster falls back to uniform and records a
// warning.
ViewPool build_view_pool(const DocumentPair& pair, const SubtopicPartition& partition, SamplerKind kind,
                         std::size_t pool_size, std::size_t k, std::uint64_t seed,
                         std::string_view stream = "train");

inline constexpr std::size_t kDefaultViewSize = 8;

// floor(budget / mean sentence length), at least 1.
std::size_t view_size_for_budget(std::size_t token_budget, double mean_sentence_tokens);

std::vector<std::string> view_tokens(const Document& document, const View& view);
std::string view_text(const Document& document, const View& view);

// One JSON object per entry: {pair_id, epoch, q_indices, d_indices}.
void write_view_pool_jsonl(std::ostream& out, const ViewPool& pool);

}  // namespace sst
