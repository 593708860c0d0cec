#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rlrec/corpus.hpp"

namespace rlrec {

/// Lucene-style BM25 parameters.
struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  /// Throws ConfigError unless k1 >= 0 and 0 <= b <= 1.
  void validate() const;
};

struct Posting {
  std::uint32_t doc;
  std::uint32_t tf;
};

/// Postings over title + body. Immutable after construction and safe to
/// share across threads.
class InvertedIndex {
 public:
  /// Throws Error on an empty corpus.
  explicit InvertedIndex(const Corpus& corpus);

  std::size_t num_docs() const { return doc_lengths_.size(); }
  std::size_t num_terms() const { return postings_.size(); }
  double avgdl() const { return avgdl_; }
  std::uint32_t doc_length(std::size_t doc) const { return doc_lengths_.at(doc); }
  std::span<const Posting> postings(TokenId term) const;
  std::size_t df(TokenId term) const { return postings(term).size(); }
  /// Term frequency of `term` in `doc` (binary search over the postings).
  std::uint32_t tf(TokenId term, std::size_t doc) const;

  /// ln(1 + (N - df + 0.5) / (df + 0.5)).
  double idf(TokenId term) const;

  /// Text snapshot: stats plus postings. The corpus file remains the source
  /// of truth; the snapshot is for inspection.
  void write_snapshot(std::ostream& out) const;

 private:
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  double avgdl_ = 0.0;
};

inline InvertedIndex build_index(const Corpus& corpus) { return InvertedIndex(corpus); }

/// Saturated, length-normalized term weight without the (k1 + 1) factor.
inline double bm25_term_weight(double idf, double tf, double dl, double avgdl,
                               const Bm25Params& params) {
  return idf * tf / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl));
}

/// Sum over query tokens (with multiplicity) of the term weight. Token ids
/// outside the index contribute 0.
double bm25_score(const InvertedIndex& index, const Bm25Params& params,
                  std::span<const TokenId> query, std::size_t doc);

struct ScoredDoc {
  std::size_t doc;
  double score;
};

/// Descending by score, ties by ascending doc ordinal; only positive scores.
using RankedList = std::vector<ScoredDoc>;

RankedList retrieve(const InvertedIndex& index, const Bm25Params& params,
                    std::span<const TokenId> query, std::size_t k);

/// Item ids of a ranked list, in rank order.
std::vector<std::string> ranked_ids(const Corpus& corpus, const RankedList& list);

}  // namespace rlrec
