#include "sst/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "json.hpp"

namespace sst {

const char* to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kUniform: return "uniform";
    case SamplerKind::kHard: return "hard";
    case SamplerKind::kSoft: return "soft";
    case SamplerKind::kRandom: return "random";
    case SamplerKind::kNegative: return "negative";
  }
  return "unknown";
}

SamplerKind parse_sampler(std::string_view name) {
  for (auto kind : {SamplerKind::kUniform, SamplerKind::kHard, SamplerKind::kSoft, SamplerKind::kRandom,
                    SamplerKind::kNegative}) {
    if (name == to_string(kind)) return kind;
  }
  throw Error(ErrorKind::kConfigError, "unknown sampler '" + std::string(name) + "'");
}

std::vector<std::size_t> roulette_select(const std::vector<std::vector<std::size_t>>& clusters, std::size_t k,
                                         std::span<const double> probs, Rng& rng,
                                         std::vector<std::size_t>* drawn_clusters) {
  if (probs.size() != clusters.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "distribution has " + std::to_string(probs.size()) +
                                                   " entries for " + std::to_string(clusters.size()) + " clusters");
  }
  const bool any = std::any_of(clusters.begin(), clusters.end(), [](const auto& c) { return !c.empty(); });
  if (!any) throw Error(ErrorKind::kEmptyClusters, "no cluster has any sentence");

  std::vector<std::vector<std::size_t>> remaining = clusters;
  std::vector<std::size_t> out;
  if (drawn_clusters != nullptr) drawn_clusters->clear();
  while (out.size() < k) {
    double total = 0.0;
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      if (!remaining[c].empty() && probs[c] > 0.0) total += probs[c];
    }
    if (total <= 0.0) break;
    double target = rng.uniform() * total;
    std::size_t chosen = remaining.size();
    for (std::size_t c = 0; c < remaining.size(); ++c) {
      if (remaining[c].empty() || !(probs[c] > 0.0)) continue;
      chosen = c;
      target -= probs[c];
      if (target < 0.0) break;
    }
    auto& members = remaining[chosen];
    const std::size_t pick = rng.index(members.size());
    out.push_back(members[pick]);
    members[pick] = members.back();
    members.pop_back();
    if (drawn_clusters != nullptr) drawn_clusters->push_back(chosen);
  }
  return out;
}

SamplingDistribution uniform_distribution(const std::vector<std::size_t>& side_sizes) {
  const auto present = static_cast<std::size_t>(
      std::count_if(side_sizes.begin(), side_sizes.end(), [](std::size_t s) { return s > 0; }));
  SamplingDistribution p(side_sizes.size(), 0.0);
  if (present == 0) return p;
  for (std::size_t i = 0; i < side_sizes.size(); ++i) {
    if (side_sizes[i] > 0) p[i] = 1.0 / static_cast<double>(present);
  }
  return p;
}

SoftDistributions soft_distributions(const SubtopicPartition& partition) {
  const auto q = partition.query_sizes();
  const auto d = partition.candidate_sizes();
  const std::size_t m = partition.m;
  SoftDistributions out;
  out.alignment.assign(m, 0.0);
  double min_total = 0.0;
  for (std::size_t i = 0; i < m; ++i) min_total += static_cast<double>(std::min(q[i], d[i]));
  if (min_total <= 0.0) {
    throw Error(ErrorKind::kNoAlignedCluster, "no cluster holds sentences from both documents");
  }
  for (std::size_t i = 0; i < m; ++i) out.alignment[i] = static_cast<double>(std::min(q[i], d[i])) / min_total;

  auto side = [&](const std::vector<std::size_t>& sizes, std::size_t length) {
    SamplingDistribution weighted(m, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      weighted[i] = out.alignment[i] * (static_cast<double>(sizes[i]) / static_cast<double>(length));
      total += weighted[i];
    }
    for (double& v : weighted) v /= total;
    return weighted;
  };
  out.query = side(q, partition.query_length());
  out.candidate = side(d, partition.candidate_length());
  return out;
}

std::size_t primary_cluster(const SubtopicPartition& partition) {
  const auto q = partition.query_sizes();
  const auto d = partition.candidate_sizes();
  std::size_t best = 0;
  for (std::size_t i = 1; i < partition.m; ++i) {
    if (std::min(q[i], d[i]) > std::min(q[best], d[best])) best = i;
  }
  return best;
}

std::vector<std::size_t> ascending_cluster_order(const SubtopicPartition& partition) {
  const auto q = partition.query_sizes();
  const auto d = partition.candidate_sizes();
  std::vector<std::size_t> aligned, rest;
  for (std::size_t i = 0; i < partition.m; ++i) (std::min(q[i], d[i]) > 0 ? aligned : rest).push_back(i);
  std::stable_sort(aligned.begin(), aligned.end(),
                   [&](std::size_t x, std::size_t y) { return std::min(q[x], d[x]) < std::min(q[y], d[y]); });
  aligned.insert(aligned.end(), rest.begin(), rest.end());
  return aligned;
}

namespace {

View make_view(const Document& document, std::vector<std::size_t> indices, std::size_t k) {
  std::sort(indices.begin(), indices.end());
  return {document.id, std::move(indices), k};
}

void check_partition(const DocumentPair& pair, const SubtopicPartition& partition) {
  if (partition.query_length() != pair.query.size() || partition.candidate_length() != pair.candidate.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "partition does not match pair " + pair.id());
  }
  if (partition.m == 0) throw Error(ErrorKind::kEmptyClusters, "partition has no clusters");
}

// Takes sentences from the clusters in the given order, each cluster drained
// (without replacement, uniformly) before moving on to the next.
std::vector<std::size_t> cascade(const std::vector<std::vector<std::size_t>>& clusters,
                                 const std::vector<std::size_t>& order, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  for (std::size_t c : order) {
    if (out.size() >= k) break;
    std::vector<std::size_t> members = clusters[c];
    while (out.size() < k && !members.empty()) {
      const std::size_t pick = rng.index(members.size());
      out.push_back(members[pick]);
      members[pick] = members.back();
      members.pop_back();
    }
  }
  return out;
}

std::vector<std::size_t> hard_side(const std::vector<std::vector<std::size_t>>& clusters, std::size_t primary,
                                   std::size_t k, Rng& rng) {
  auto out = cascade(clusters, {primary}, k, rng);
  if (out.size() >= k) return out;
  std::vector<std::vector<std::size_t>> others = clusters;
  others[primary].clear();
  std::vector<std::size_t> sizes;
  for (const auto& c : others) sizes.push_back(c.size());
  const auto probs = uniform_distribution(sizes);
  if (std::none_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; })) return out;
  const auto fill = roulette_select(others, k - out.size(), probs, rng);
  out.insert(out.end(), fill.begin(), fill.end());
  return out;
}

}  // namespace

ViewPair sample_uniform(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng) {
  check_partition(pair, partition);
  const auto qc = partition.query_clusters();
  const auto dc = partition.candidate_clusters();
  auto q = roulette_select(qc, k, uniform_distribution(partition.query_sizes()), rng);
  auto d = roulette_select(dc, k, uniform_distribution(partition.candidate_sizes()), rng);
  return {make_view(pair.query, std::move(q), k), make_view(pair.candidate, std::move(d), k)};
}

ViewPair sample_hard(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng) {
  check_partition(pair, partition);
  const std::size_t primary = primary_cluster(partition);
  auto q = hard_side(partition.query_clusters(), primary, k, rng);
  auto d = hard_side(partition.candidate_clusters(), primary, k, rng);
  return {make_view(pair.query, std::move(q), k), make_view(pair.candidate, std::move(d), k)};
}

ViewPair sample_soft(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng) {
  check_partition(pair, partition);
  const auto dist = soft_distributions(partition);
  auto q = roulette_select(partition.query_clusters(), k, dist.query, rng);
  auto d = roulette_select(partition.candidate_clusters(), k, dist.candidate, rng);
  return {make_view(pair.query, std::move(q), k), make_view(pair.candidate, std::move(d), k)};
}

ViewPair sample_negative(const DocumentPair& pair, const SubtopicPartition& partition, std::size_t k, Rng& rng) {
  check_partition(pair, partition);
  const auto order = ascending_cluster_order(partition);
  auto q = cascade(partition.query_clusters(), order, k, rng);
  auto d = cascade(partition.candidate_clusters(), order, k, rng);
  return {make_view(pair.query, std::move(q), k), make_view(pair.candidate, std::move(d), k)};
}

View sample_random(const Document& document, std::size_t k, Rng& rng) {
  if (document.size() == 0) throw Error(ErrorKind::kEmptyDocument, "cannot sample from an empty document");
  const std::size_t width = std::min(k, document.size());
  const std::size_t start = rng.index(document.size() - width + 1);
  std::vector<std::size_t> indices(width);
  std::iota(indices.begin(), indices.end(), start);
  return {document.id, std::move(indices), k};
}

ViewPair sample_views(SamplerKind kind, const DocumentPair& pair, const SubtopicPartition& partition,
                      std::size_t k, Rng& rng) {
  switch (kind) {
    case SamplerKind::kUniform: return sample_uniform(pair, partition, k, rng);
    case SamplerKind::kHard: return sample_hard(pair, partition, k, rng);
    case SamplerKind::kSoft: return sample_soft(pair, partition, k, rng);
    case SamplerKind::kNegative: return sample_negative(pair, partition, k, rng);
    case SamplerKind::kRandom: {
      auto q = sample_random(pair.query, k, rng);
      auto d = sample_random(pair.candidate, k, rng);
      return {std::move(q), std::move(d)};
    }
  }
  throw Error(ErrorKind::kConfigError, "unknown sampler");
}

ViewPool build_view_pool(const DocumentPair& pair, const SubtopicPartition& partition, SamplerKind kind,
                         std::size_t pool_size, std::size_t k, std::uint64_t seed, std::string_view stream) {
  if (pool_size < 1) throw Error(ErrorKind::kConfigError, "pool size must be at least 1");
  if (k < 1) throw Error(ErrorKind::kConfigError, "view size must be at least 1");
  ViewPool pool;
  pool.pair_id = pair.id();
  Rng rng(derive_seed(derive_seed(seed, stream), pool.pair_id));
  if (kind == SamplerKind::kSoft) {
    try {
      soft_distributions(partition);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNoAlignedCluster) throw;
      pool.warnings.push_back("NoAlignedCluster: pair " + pool.pair_id + " sampled uniformly");
      kind = SamplerKind::kUniform;
    }
  }
  pool.entries.reserve(pool_size);
  for (std::size_t t = 0; t < pool_size; ++t) pool.entries.push_back(sample_views(kind, pair, partition, k, rng));
  return pool;
}

std::size_t view_size_for_budget(std::size_t token_budget, double mean_sentence_tokens) {
  if (!(mean_sentence_tokens > 0.0)) throw Error(ErrorKind::kConfigError, "mean sentence length must be positive");
  const auto k = static_cast<std::size_t>(static_cast<double>(token_budget) / mean_sentence_tokens);
  return std::max<std::size_t>(1, k);
}

std::vector<std::string> view_tokens(const Document& document, const View& view) {
  return gather_tokens(document, view.indices);
}

std::string view_text(const Document& document, const View& view) {
  std::string out;
  for (std::size_t i : view.indices) {
    if (!out.empty()) out += ' ';
    out += document.sentences.at(i).text;
  }
  return out;
}

void write_view_pool_jsonl(std::ostream& out, const ViewPool& pool) {
  for (std::size_t t = 0; t < pool.entries.size(); ++t) {
    nlohmann::ordered_json j;
    j["pair_id"] = pool.pair_id;
    j["epoch"] = t;
    j["q_indices"] = pool.entries[t].query.indices;
    j["d_indices"] = pool.entries[t].candidate.indices;
    out << j.dump() << '\n';
  }
}

}  // namespace sst
