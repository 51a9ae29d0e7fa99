#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sst/common.hpp"
#include "sst/corpus.hpp"

namespace sst {

// Symmetric nonnegative similarity over the combined sentence set of a pair:
// rows [0, split) are query sentences, rows [split, n) candidate sentences.
struct SimilarityMatrix {
  Matrix values;
  std::size_t split = 0;

  std::size_t size() const { return values.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

using TokenList = std::vector<std::string>;

// Query sentences followed by candidate sentences.
std::vector<TokenList> combined_tokens(const DocumentPair& pair);

inline constexpr double kDenominatorFloor = 1e-9;

// TextRank overlap: shared distinct word types over ln|s_i| + ln|s_j|, with
// |s| the token count. Sentences of at most one token floor the
// denominator at kDenominatorFloor and are reported as degenerate.
SimilarityMatrix lexical_similarity(const std::vector<TokenList>& sentences, std::size_t split,
                                    Diagnostics* diag = nullptr);
SimilarityMatrix lexical_similarity(const DocumentPair& pair, Diagnostics* diag = nullptr);

struct EncoderConfig {
  std::size_t dim = 64;
  std::uint64_t seed = 0;
};

// Desk-scale sentence encoder: TF-IDF bag of words through a seeded
// Gaussian random projection, L2-normalized. Each word's projection row is
// generated from (seed, word), so the result does not depend on vocabulary
// order. Token lists with no tokens encode to the zero vector.
class SentenceEncoder {
 public:
  // Throws kEmptyVocabulary when `stats` saw no tokens.
  SentenceEncoder(const CorpusStats& stats, EncoderConfig config = {});

  std::size_t dim() const { return config_.dim; }
  std::vector<double> encode(const TokenList& tokens) const;
  Matrix encode_all(const std::vector<TokenList>& sentences) const;

 private:
  const CorpusStats* stats_;
  EncoderConfig config_;
};

// One row per sentence, in the given order.
Matrix embed_sentences(const std::vector<TokenList>& sentences, const CorpusStats& stats,
                       const EncoderConfig& config = {});

// A_ij = max(0, e_i . e_j) with a zero diagonal.
SimilarityMatrix dot_similarity(const Matrix& embeddings, std::size_t split);

inline constexpr std::size_t kDefaultKeepTop = 10;

// Per-row top-`keep_top` sparsification (ties to the lower index),
// symmetrized by max, then D^{-1/2} A D^{-1/2}. Rows left without any edge
// get a unit self-loop first.
SimilarityMatrix normalize_sparsify(const SimilarityMatrix& a, std::size_t keep_top = kDefaultKeepTop);

// Header line `n,l_q`, then n comma-separated rows.
void write_matrix_csv(std::ostream& out, const SimilarityMatrix& a);

}  // namespace sst
