#include "rlrec/retrieval.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "rlrec/error.hpp"

namespace rlrec {

void Bm25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw ConfigError("bm25.k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25.b must lie in [0, 1]");
}

InvertedIndex::InvertedIndex(const Corpus& corpus) {
  if (corpus.size() == 0) throw Error("cannot index an empty corpus");
  postings_.resize(corpus.vocabulary().size());
  doc_lengths_.reserve(corpus.size());
  std::uint64_t total = 0;
  std::vector<std::uint32_t> counts(corpus.vocabulary().size(), 0);
  std::vector<TokenId> touched;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    auto tokens = corpus.tokens(d);
    for (TokenId t : tokens) {
      if (counts[static_cast<std::size_t>(t)]++ == 0) touched.push_back(t);
    }
    std::sort(touched.begin(), touched.end());
    for (TokenId t : touched) {
      postings_[static_cast<std::size_t>(t)].push_back({static_cast<std::uint32_t>(d), counts[static_cast<std::size_t>(t)]});
      counts[static_cast<std::size_t>(t)] = 0;
    }
    touched.clear();
    doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total += tokens.size();
  }
  avgdl_ = static_cast<double>(total) / static_cast<double>(corpus.size());
}

std::span<const Posting> InvertedIndex::postings(TokenId term) const {
  if (term < 0 || static_cast<std::size_t>(term) >= postings_.size()) return {};
  return postings_[static_cast<std::size_t>(term)];
}

std::uint32_t InvertedIndex::tf(TokenId term, std::size_t doc) const {
  auto list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), doc,
                             [](const Posting& p, std::size_t d) { return p.doc < d; });
  if (it == list.end() || it->doc != doc) return 0;
  return it->tf;
}

double InvertedIndex::idf(TokenId term) const {
  const double n = static_cast<double>(num_docs());
  const double df_t = static_cast<double>(df(term));
  return std::log(1.0 + (n - df_t + 0.5) / (df_t + 0.5));
}

void InvertedIndex::write_snapshot(std::ostream& out) const {
  out << "rlrec-index 1\n";
  out << "docs " << num_docs() << " terms " << num_terms() << " avgdl " << avgdl_ << '\n';
  out << "lengths";
  for (auto len : doc_lengths_) out << ' ' << len;
  out << '\n';
  for (std::size_t t = 0; t < postings_.size(); ++t) {
    out << t << ':';
    for (const auto& p : postings_[t]) out << ' ' << p.doc << ',' << p.tf;
    out << '\n';
  }
}

double bm25_score(const InvertedIndex& index, const Bm25Params& params,
                  std::span<const TokenId> query, std::size_t doc) {
  double score = 0.0;
  const double dl = index.doc_length(doc);
  for (TokenId t : query) {
    const std::uint32_t tf = index.tf(t, doc);
    if (tf == 0) continue;
    score += bm25_term_weight(index.idf(t), tf, dl, index.avgdl(), params);
  }
  return score;
}

RankedList retrieve(const InvertedIndex& index, const Bm25Params& params,
                    std::span<const TokenId> query, std::size_t k) {
  // Term-at-a-time accumulation in query order, so each document's sum is
  // formed in the same order as bm25_score.
  std::vector<double> acc(index.num_docs(), 0.0);
  for (TokenId t : query) {
    auto list = index.postings(t);
    if (list.empty()) continue;
    const double idf = index.idf(t);
    for (const Posting& p : list) {
      acc[p.doc] += bm25_term_weight(idf, p.tf, index.doc_length(p.doc), index.avgdl(), params);
    }
  }
  RankedList hits;
  for (std::size_t d = 0; d < acc.size(); ++d) {
    if (acc[d] > 0.0) hits.push_back({d, acc[d]});
  }
  auto before = [](const ScoredDoc& a, const ScoredDoc& b) {
    return a.score > b.score || (a.score == b.score && a.doc < b.doc);
  };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), before);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), before);
  }
  return hits;
}

std::vector<std::string> ranked_ids(const Corpus& corpus, const RankedList& list) {
  std::vector<std::string> ids;
  ids.reserve(list.size());
  for (const auto& hit : list) ids.push_back(corpus.document(hit.doc).id);
  return ids;
}

}  // namespace rlrec
