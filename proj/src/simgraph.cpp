#include "sst/simgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace sst {

std::vector<TokenList> combined_tokens(const DocumentPair& pair) {
  std::vector<TokenList> out;
  out.reserve(pair.query.size() + pair.candidate.size());
  for (const auto& s : pair.query.sentences) out.push_back(s.tokens);
  for (const auto& s : pair.candidate.sentences) out.push_back(s.tokens);
  return out;
}

SimilarityMatrix lexical_similarity(const std::vector<TokenList>& sentences, std::size_t split,
                                    Diagnostics* diag) {
  const std::size_t n = sentences.size();
  // Intern words so overlaps are merges over sorted id lists.
  std::unordered_map<std::string, int> ids;
  std::vector<std::vector<int>> types(n);
  std::vector<double> log_length(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& token : sentences[i]) {
      const auto [it, inserted] = ids.emplace(token, static_cast<int>(ids.size()));
      types[i].push_back(it->second);
    }
    std::sort(types[i].begin(), types[i].end());
    types[i].erase(std::unique(types[i].begin(), types[i].end()), types[i].end());
    if (sentences[i].size() <= 1) {
      warn(diag, "DegenerateSentence: sentence " + std::to_string(i) + " has " +
                     std::to_string(sentences[i].size()) + " token(s)");
    }
    log_length[i] = sentences[i].empty() ? 0.0 : std::log(static_cast<double>(sentences[i].size()));
  }

  SimilarityMatrix a{Matrix(n, n), split};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::size_t shared = 0;
      auto x = types[i].begin();
      auto y = types[j].begin();
      while (x != types[i].end() && y != types[j].end()) {
        if (*x < *y) {
          ++x;
        } else if (*y < *x) {
          ++y;
        } else {
          ++shared;
          ++x;
          ++y;
        }
      }
      if (shared == 0) continue;
      const double denominator = std::max(log_length[i] + log_length[j], kDenominatorFloor);
      const double value = static_cast<double>(shared) / denominator;
      a.values(i, j) = value;
      a.values(j, i) = value;
    }
  }
  return a;
}

SimilarityMatrix lexical_similarity(const DocumentPair& pair, Diagnostics* diag) {
  return lexical_similarity(combined_tokens(pair), pair.query.size(), diag);
}

SentenceEncoder::SentenceEncoder(const CorpusStats& stats, EncoderConfig config)
    : stats_(&stats), config_(config) {
  if (stats.vocabulary_size() == 0) {
    throw Error(ErrorKind::kEmptyVocabulary, "corpus statistics contain no tokens");
  }
  if (config_.dim == 0) throw Error(ErrorKind::kConfigError, "embedding dim must be positive");
}

std::vector<double> SentenceEncoder::encode(const TokenList& tokens) const {
  std::vector<std::string> words = tokens;
  std::sort(words.begin(), words.end());
  std::vector<double> out(config_.dim, 0.0);
  for (std::size_t i = 0; i < words.size();) {
    std::size_t j = i;
    while (j < words.size() && words[j] == words[i]) ++j;
    const double weight = static_cast<double>(j - i) * stats_->idf(words[i]);
    Rng projection(derive_seed(config_.seed, words[i]));
    for (double& v : out) v += weight * projection.normal();
    i = j;
  }
  const double norm = std::sqrt(dot(out, out));
  if (norm > 0.0) {
    for (double& v : out) v /= norm;
  }
  return out;
}

Matrix SentenceEncoder::encode_all(const std::vector<TokenList>& sentences) const {
  Matrix out(sentences.size(), config_.dim);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto row = encode(sentences[i]);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

Matrix embed_sentences(const std::vector<TokenList>& sentences, const CorpusStats& stats,
                       const EncoderConfig& config) {
  return SentenceEncoder(stats, config).encode_all(sentences);
}

SimilarityMatrix dot_similarity(const Matrix& embeddings, std::size_t split) {
  const std::size_t n = embeddings.rows();
  SimilarityMatrix a{Matrix(n, n), split};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double value = std::max(0.0, dot(embeddings.row(i), embeddings.row(j)));
      a.values(i, j) = value;
      a.values(j, i) = value;
    }
  }
  return a;
}

SimilarityMatrix normalize_sparsify(const SimilarityMatrix& a, std::size_t keep_top) {
  if (keep_top < 1) throw Error(ErrorKind::kConfigError, "keep_top must be at least 1");
  const std::size_t n = a.size();
  Matrix kept(n, n);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && a(i, j) > 0.0) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(i, x) > a(i, y); });
    if (order.size() > keep_top) order.resize(keep_top);
    for (std::size_t j : order) kept(i, j) = a(i, j);
  }
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym(i, j) = std::max(kept(i, j), kept(j, i));
  }
  std::vector<double> degree(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) degree[i] += sym(i, j);
    if (degree[i] <= 0.0) {
      sym(i, i) = 1.0;
      degree[i] = 1.0;
    }
  }
  SimilarityMatrix out{Matrix(n, n), a.split};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (sym(i, j) != 0.0) {
        out.values(i, j) = sym(i, j) / (std::sqrt(degree[i]) * std::sqrt(degree[j]));
      }
    }
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const SimilarityMatrix& a) {
  out << a.size() << ',' << a.split << '\n';
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (j > 0) out << ',';
      out << format_double(a(i, j));
    }
    out << '\n';
  }
}

}  // namespace sst
