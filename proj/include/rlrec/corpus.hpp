#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace rlrec {

using TokenId = int;

/// Lowercases and splits on maximal runs of non-alphanumeric characters.
/// No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

struct Document {
  std::string id;
  std::string title;
  std::string body;
  std::optional<std::string> category;
};

/// Dense token-id assignment in first-occurrence order.
class Vocabulary {
 public:
  TokenId intern(const std::string& token);
  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the ordered token list; stored in policy checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// The item pool. Immutable after construction.
class Corpus {
 public:
  /// Validates ids and titles, tokenizes title + body, builds the vocabulary.
  explicit Corpus(std::vector<Document> documents);

  std::size_t size() const { return documents_.size(); }
  const Document& document(std::size_t ordinal) const { return documents_.at(ordinal); }
  const std::vector<Document>& documents() const { return documents_; }

  /// Token ids of title followed by body.
  std::span<const TokenId> tokens(std::size_t ordinal) const { return tokens_.at(ordinal); }
  std::span<const TokenId> title_tokens(std::size_t ordinal) const;

  std::optional<std::size_t> ordinal(std::string_view id) const;
  const Vocabulary& vocabulary() const { return vocabulary_; }

  /// Maps raw tokens to ids, dropping tokens outside the vocabulary.
  std::vector<TokenId> encode(std::span<const std::string> tokens) const;

 private:
  std::vector<Document> documents_;
  std::vector<std::vector<TokenId>> tokens_;
  std::vector<std::size_t> title_lengths_;
  std::unordered_map<std::string, std::size_t> ordinals_;
  Vocabulary vocabulary_;
};

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

enum class TaskKind { product_search, seq_rec, rerank };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct RerankPayload {
  std::string query;
  std::vector<std::string> candidates;
};

using StatePayload = std::variant<std::string, std::vector<std::string>, RerankPayload>;

struct StateRecord {
  std::string id;
  TaskKind kind = TaskKind::product_search;
  StatePayload payload;

  const std::string& query() const;                      // product_search
  const std::vector<std::string>& history() const;       // seq_rec
  const RerankPayload& rerank() const;                    // rerank
};

struct Target {
  std::string item_id;
  double gain = 0.0;
};

/// State records and their graded ground-truth items. Immutable after load.
class RelevanceDict {
 public:
  RelevanceDict() = default;

  /// Validates every record against the corpus; throws IngestError.
  void add(StateRecord state, std::vector<Target> targets, const Corpus& corpus);

  std::size_t size() const { return states_.size(); }
  const StateRecord& state(std::size_t index) const { return states_.at(index); }
  std::span<const Target> targets(std::size_t index) const { return targets_.at(index); }

  std::optional<std::size_t> find(std::string_view state_id) const;
  /// Throws UnknownStateError.
  std::size_t index_of(std::string_view state_id) const;

 private:
  std::vector<StateRecord> states_;
  std::vector<std::vector<Target>> targets_;
  std::unordered_map<std::string, std::size_t> index_;
};

RelevanceDict parse_relevance(std::istream& in, const Corpus& corpus);
RelevanceDict load_relevance(const std::filesystem::path& path, const Corpus& corpus);
void write_relevance(const RelevanceDict& relevance, std::ostream& out);

}  // namespace rlrec
