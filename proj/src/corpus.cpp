#include "rlrec/corpus.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "rlrec/error.hpp"

namespace rlrec {

using json = nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

TokenId Vocabulary::intern(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char c : t) feed(static_cast<unsigned char>(c));
    feed(0);
  }
  return h;
}

Corpus::Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
  tokens_.reserve(documents_.size());
  title_lengths_.reserve(documents_.size());
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const Document& doc = documents_[i];
    if (doc.id.empty()) throw IngestError("document " + std::to_string(i) + " has an empty id");
    if (!ordinals_.emplace(doc.id, i).second) throw IngestError("duplicate document id: " + doc.id);
    auto title = tokenize(doc.title);
    if (title.empty()) throw IngestError("document " + doc.id + " has no title tokens");
    auto body = tokenize(doc.body);
    std::vector<TokenId> ids;
    ids.reserve(title.size() + body.size());
    for (const auto& t : title) ids.push_back(vocabulary_.intern(t));
    for (const auto& t : body) ids.push_back(vocabulary_.intern(t));
    title_lengths_.push_back(title.size());
    tokens_.push_back(std::move(ids));
  }
}

std::span<const TokenId> Corpus::title_tokens(std::size_t ordinal) const {
  return std::span<const TokenId>(tokens_.at(ordinal)).first(title_lengths_[ordinal]);
}

std::optional<std::size_t> Corpus::ordinal(std::string_view id) const {
  auto it = ordinals_.find(std::string(id));
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Corpus::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (auto id = vocabulary_.find(t)) out.push_back(*id);
  }
  return out;
}

namespace {

std::string line_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

const json& require(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) throw IngestError(line_error(line_no, std::string("missing field '") + key + "'"));
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line_no) {
  const json& v = require(obj, key, line_no);
  if (!v.is_string()) throw IngestError(line_error(line_no, std::string("field '") + key + "' must be a string"));
  return v.get<std::string>();
}

bool blank(const std::string& line) {
  for (char c : line) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

template <typename Fn>
void for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(line_error(line_no, std::string("malformed JSON: ") + e.what()));
    }
    if (!obj.is_object()) throw IngestError(line_error(line_no, "expected a JSON object"));
    fn(obj, line_no);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return in;
}

}  // namespace

Corpus parse_corpus(std::istream& in) {
  std::vector<Document> docs;
  for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
    Document doc;
    doc.id = require_string(obj, "id", line_no);
    doc.title = require_string(obj, "title", line_no);
    if (auto it = obj.find("body"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw IngestError(line_error(line_no, "field 'body' must be a string"));
      doc.body = it->get<std::string>();
    }
    if (auto it = obj.find("category"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw IngestError(line_error(line_no, "field 'category' must be a string or null"));
      doc.category = it->get<std::string>();
    }
    if (tokenize(doc.title).empty()) throw IngestError(line_error(line_no, "title has no tokens"));
    docs.push_back(std::move(doc));
  });
  return Corpus(std::move(docs));
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& doc : corpus.documents()) {
    json obj = {{"id", doc.id}, {"title", doc.title}, {"body", doc.body}};
    obj["category"] = doc.category ? json(*doc.category) : json(nullptr);
    out << obj.dump() << '\n';
  }
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::product_search: return "product_search";
    case TaskKind::seq_rec: return "seq_rec";
    case TaskKind::rerank: return "rerank";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "product_search") return TaskKind::product_search;
  if (text == "seq_rec") return TaskKind::seq_rec;
  if (text == "rerank") return TaskKind::rerank;
  throw ConfigError("unknown task kind: " + std::string(text));
}

const std::string& StateRecord::query() const {
  if (kind == TaskKind::rerank) return std::get<RerankPayload>(payload).query;
  return std::get<std::string>(payload);
}

const std::vector<std::string>& StateRecord::history() const {
  return std::get<std::vector<std::string>>(payload);
}

const RerankPayload& StateRecord::rerank() const { return std::get<RerankPayload>(payload); }

void RelevanceDict::add(StateRecord state, std::vector<Target> targets, const Corpus& corpus) {
  if (state.id.empty()) throw IngestError("state with empty id");
  if (index_.count(state.id)) throw IngestError("duplicate state id: " + state.id);
  auto require_item = [&](const std::string& item) {
    if (!corpus.ordinal(item)) throw IngestError("state " + state.id + " references unknown item: " + item);
  };
  switch (state.kind) {
    case TaskKind::product_search:
      if (!std::holds_alternative<std::string>(state.payload))
        throw IngestError("state " + state.id + ": product_search payload must be a string");
      break;
    case TaskKind::seq_rec: {
      const auto* hist = std::get_if<std::vector<std::string>>(&state.payload);
      if (!hist) throw IngestError("state " + state.id + ": seq_rec payload must be a list of item ids");
      if (hist->empty()) throw IngestError("state " + state.id + ": empty history");
      for (const auto& item : *hist) require_item(item);
      break;
    }
    case TaskKind::rerank: {
      const auto* rr = std::get_if<RerankPayload>(&state.payload);
      if (!rr) throw IngestError("state " + state.id + ": rerank payload must be {query, candidates}");
      if (rr->candidates.size() < 2) throw IngestError("state " + state.id + ": rerank needs at least 2 candidates");
      std::unordered_map<std::string, int> seen;
      for (const auto& item : rr->candidates) {
        require_item(item);
        if (seen[item]++) throw IngestError("state " + state.id + ": duplicate candidate " + item);
      }
      break;
    }
  }
  bool any_positive = false;
  for (const auto& t : targets) {
    require_item(t.item_id);
    if (!std::isfinite(t.gain)) throw IngestError("state " + state.id + ": non-finite gain for " + t.item_id);
    if (t.gain < 0.0) throw IngestError("state " + state.id + ": negative gain for " + t.item_id);
    any_positive = any_positive || t.gain > 0.0;
  }
  if (!any_positive) throw IngestError("state " + state.id + ": no target with positive gain");
  index_.emplace(state.id, states_.size());
  states_.push_back(std::move(state));
  targets_.push_back(std::move(targets));
}

std::optional<std::size_t> RelevanceDict::find(std::string_view state_id) const {
  auto it = index_.find(std::string(state_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t RelevanceDict::index_of(std::string_view state_id) const {
  if (auto i = find(state_id)) return *i;
  throw UnknownStateError(std::string(state_id));
}

RelevanceDict parse_relevance(std::istream& in, const Corpus& corpus) {
  RelevanceDict dict;
  for_each_json_line(in, [&](const json& obj, std::size_t line_no) {
    StateRecord state;
    state.id = require_string(obj, "state_id", line_no);
    try {
      state.kind = parse_task_kind(require_string(obj, "task", line_no));
    } catch (const ConfigError& e) {
      throw IngestError(line_error(line_no, e.what()));
    }
    const json& payload = require(obj, "payload", line_no);
    try {
      switch (state.kind) {
        case TaskKind::product_search:
          if (!payload.is_string()) throw IngestError("payload must be a string");
          state.payload = payload.get<std::string>();
          break;
        case TaskKind::seq_rec:
          if (!payload.is_array()) throw IngestError("payload must be a list of item ids");
          state.payload = payload.get<std::vector<std::string>>();
          break;
        case TaskKind::rerank: {
          if (!payload.is_object()) throw IngestError("payload must be {query, candidates}");
          RerankPayload rr;
          rr.query = payload.at("query").get<std::string>();
          rr.candidates = payload.at("candidates").get<std::vector<std::string>>();
          state.payload = std::move(rr);
          break;
        }
      }
      std::vector<Target> targets;
      const json& list = require(obj, "targets", line_no);
      if (!list.is_array()) throw IngestError("targets must be a list");
      for (const auto& t : list) {
        const json& gain = t.at("gain");
        if (!gain.is_number()) throw IngestError("gain must be a number");
        targets.push_back({t.at("item_id").get<std::string>(), gain.get<double>()});
      }
      dict.add(std::move(state), std::move(targets), corpus);
    } catch (const json::exception& e) {
      throw IngestError(line_error(line_no, e.what()));
    } catch (const IngestError& e) {
      throw IngestError(line_error(line_no, e.what()));
    }
  });
  return dict;
}

RelevanceDict load_relevance(const std::filesystem::path& path, const Corpus& corpus) {
  auto in = open_input(path);
  return parse_relevance(in, corpus);
}

void write_relevance(const RelevanceDict& relevance, std::ostream& out) {
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    const StateRecord& s = relevance.state(i);
    json obj = {{"state_id", s.id}, {"task", std::string(to_string(s.kind))}};
    switch (s.kind) {
      case TaskKind::product_search: obj["payload"] = s.query(); break;
      case TaskKind::seq_rec: obj["payload"] = s.history(); break;
      case TaskKind::rerank:
        obj["payload"] = {{"query", s.rerank().query}, {"candidates", s.rerank().candidates}};
        break;
    }
    json targets = json::array();
    for (const auto& t : relevance.targets(i)) targets.push_back({{"item_id", t.item_id}, {"gain", t.gain}});
    obj["targets"] = std::move(targets);
    out << obj.dump() << '\n';
  }
}

}  // namespace rlrec
