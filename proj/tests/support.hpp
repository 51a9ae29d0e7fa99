#pragma once

// Builders and numeric helpers shared by the unit tests and the acceptance
// runner.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"
#include "sst/subtopic.hpp"

namespace sst::testing {

// A document whose sentence i is "w<i> x<i>" so sentences are distinct.
inline Document numbered_document(const std::string& id, std::size_t length) {
  std::vector<std::string> sentences;
  for (std::size_t i = 0; i < length; ++i) {
    sentences.push_back("w" + std::to_string(i) + " x" + std::to_string(i) + ".");
  }
  return make_document(id, sentences);
}

// Pair and partition from per-sentence cluster ids of each side.
struct PlantedPair {
  DocumentPair pair;
  SubtopicPartition partition;
};

inline PlantedPair planted(const std::vector<int>& query_ids, const std::vector<int>& cand_ids,
                           const std::string& id = "p") {
  PlantedPair p;
  p.pair.query = numbered_document(id + "-q", query_ids.size());
  p.pair.candidate = numbered_document(id + "-d", cand_ids.size());
  p.pair.label = 1;
  std::vector<int> all = query_ids;
  all.insert(all.end(), cand_ids.begin(), cand_ids.end());
  p.partition.assignment = all;
  p.partition.split = query_ids.size();
  p.partition.m = static_cast<std::size_t>(*std::max_element(all.begin(), all.end()) + 1);
  return p;
}

// Query side gets sizes_q[i] sentences of cluster i, candidate side sizes_d[i].
inline PlantedPair planted_sizes(const std::vector<std::size_t>& sizes_q, const std::vector<std::size_t>& sizes_d,
                                 const std::string& id = "p") {
  std::vector<int> q, d;
  for (std::size_t c = 0; c < sizes_q.size(); ++c) q.insert(q.end(), sizes_q[c], static_cast<int>(c));
  for (std::size_t c = 0; c < sizes_d.size(); ++c) d.insert(d.end(), sizes_d[c], static_cast<int>(c));
  return planted(q, d, id);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = scale * rng.normal();
  return m;
}

// Rows are softmax of Gaussian logits.
inline Matrix random_stochastic(std::size_t rows, std::size_t cols, Rng& rng, double temperature = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += (m(i, j) = std::exp(rng.normal() / temperature));
    for (std::size_t j = 0; j < cols; ++j) m(i, j) /= sum;
  }
  return m;
}

// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Largest relative error between `analytic` and central differences of `f`
// over every coordinate of `x` (restored afterwards).
inline double max_fd_error(std::vector<double>& x, const std::vector<double>& analytic,
                           const std::function<double()>& f, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

inline std::vector<int> concat(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace sst::testing
