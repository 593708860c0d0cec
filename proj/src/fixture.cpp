#include "rlrec/fixture.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "rlrec/envs.hpp"
#include "rlrec/error.hpp"
#include "rlrec/random.hpp"

namespace rlrec {

FixtureParams FixtureParams::defaults(TaskKind kind) {
  FixtureParams p;
  p.kind = kind;
  if (kind == TaskKind::rerank) {
    p.train_states = 20;
    p.valid_states = 0;
    p.test_states = 0;
  }
  return p;
}

void FixtureParams::validate() const {
  if (topics < 1) throw ConfigError("fixture needs at least one topic");
  if (vocab < 4 * topics + 1) throw ConfigError("vocab must be at least 4 * topics + 1");
  if (targets_per_topic < 1) throw ConfigError("targets per topic must be >= 1");
  if (docs < topics * (targets_per_topic + 1))
    throw ConfigError("docs must leave at least one decoy per topic");
  if (train_states < 1) throw ConfigError("fixture needs at least one training state");
  if (max_query_length < 2) throw ConfigError("max query length must be >= 2");
  if (kind == TaskKind::rerank) {
    if (slots < 2) throw ConfigError("rerank slots must be >= 2");
    if (static_cast<std::size_t>(slots) > docs / topics) throw ConfigError("rerank slots exceed documents per topic");
    if (targets_per_topic < 2) throw ConfigError("rerank fixtures need at least 2 targets per topic");
  }
}

namespace {

std::vector<std::string> make_words(std::size_t n, Rng& rng) {
  static constexpr std::string_view consonants = "bdfgklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w;
    const std::size_t syllables = 2 + rng.index(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.index(consonants.size())];
      w += vowels[rng.index(vowels.size())];
    }
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string perm_text(const std::vector<int>& perm) {
  std::string out = "perm:";
  for (std::size_t i = 0; i < perm.size(); ++i) out += (i ? "," : "") + std::to_string(perm[i]);
  return out;
}

struct Topic {
  std::string surface[2];
  std::string planted[2];
  std::vector<std::string> target_ids;
  std::vector<std::string> decoy_ids;
};

}  // namespace

Corpus Fixture::corpus() const { return Corpus(documents); }

RelevanceDict Fixture::relevance(const Corpus& c) const {
  RelevanceDict rel;
  for (std::size_t i = 0; i < states.size(); ++i) rel.add(states[i], targets[i], c);
  return rel;
}

Fixture generate_fixture(const FixtureParams& params) {
  params.validate();
  Rng rng = Rng::derive(params.seed, 0xf1);
  const std::size_t T = params.topics;

  std::vector<std::string> words = make_words(params.vocab, rng);
  std::vector<Topic> topics(T);
  for (std::size_t k = 0; k < T; ++k) {
    topics[k].surface[0] = words[4 * k];
    topics[k].surface[1] = words[4 * k + 1];
    topics[k].planted[0] = words[4 * k + 2];
    topics[k].planted[1] = words[4 * k + 3];
  }
  const std::vector<std::string> fillers(words.begin() + static_cast<std::ptrdiff_t>(4 * T), words.end());
  std::size_t filler_cursor = 0;
  auto next_filler = [&] { return fillers[filler_cursor++ % fillers.size()]; };
  auto any_filler = [&] { return fillers[rng.index(fillers.size())]; };

  // Documents are built per topic, then shuffled so ordinals carry no signal.
  struct Draft {
    Document doc;
    std::size_t topic;
    bool target;
  };
  std::vector<Draft> drafts;
  for (std::size_t k = 0; k < T; ++k) {
    for (std::size_t j = 0; j < params.targets_per_topic; ++j) {
      const std::string title = join({topics[k].planted[0], topics[k].planted[1], next_filler()});
      drafts.push_back({{"", title, join({any_filler(), any_filler()}), "c" + std::to_string(k)}, k, true});
    }
  }
  const std::size_t decoys = params.docs - T * params.targets_per_topic;
  for (std::size_t j = 0; j < decoys; ++j) {
    const std::size_t k = j % T;
    const std::size_t nth = j / T;
    std::vector<std::string> title{topics[k].surface[nth % 2]};
    if (nth == 0 || rng.uniform() < 0.4) title.push_back(topics[k].surface[(nth + 1) % 2]);
    title.push_back(next_filler());
    drafts.push_back({{"", join(title), join({any_filler(), any_filler()}), "c" + std::to_string(k)}, k, false});
  }
  shuffle(drafts, rng);
  Fixture fx;
  for (std::size_t i = 0; i < drafts.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "d%03zu", i);
    drafts[i].doc.id = id;
    auto& topic = topics[drafts[i].topic];
    (drafts[i].target ? topic.target_ids : topic.decoy_ids).push_back(id);
    fx.documents.push_back(drafts[i].doc);
  }
  const Corpus corpus(fx.documents);
  const InvertedIndex index(corpus);
  const Bm25Params bm25;

  const std::size_t n_states = params.train_states + params.valid_states + params.test_states;
  for (std::size_t i = 0; i < n_states; ++i) {
    const std::size_t k = i % T;
    const Topic& topic = topics[k];
    // Each state of a topic gets its own filler while fillers last.
    const std::string filler = fillers[(i / T * 7 + k * 3) % fillers.size()];
    const std::string raw_query = join({topic.surface[0], topic.surface[1], filler});
    StateRecord state;
    char id[32];
    std::snprintf(id, sizeof id, "s%03zu", i);
    state.id = id;
    state.kind = params.kind;
    std::vector<Target> targets;
    std::vector<TeacherOutput> teacher;
    std::string planted, raw;
    switch (params.kind) {
      case TaskKind::product_search: {
        state.payload = raw_query;
        for (const auto& t : topic.target_ids) targets.push_back({t, 1.0});
        planted = join({topic.planted[0], topic.planted[1]});
        raw = raw_query;
        teacher = {{raw_query, 0.6}, {join({topic.surface[0], topic.planted[0]}), 0.25}, {topic.planted[1], 0.15}};
        break;
      }
      case TaskKind::seq_rec: {
        std::vector<std::string> history;
        const std::size_t len = 3 + rng.index(10);
        for (std::size_t h = 0; h < len; ++h) history.push_back(topic.decoy_ids[rng.index(topic.decoy_ids.size())]);
        raw = corpus.document(*corpus.ordinal(history.back())).title;
        state.payload = std::move(history);
        for (const auto& t : topic.target_ids) targets.push_back({t, 1.0});
        planted = join({topic.planted[0], topic.planted[1]});
        teacher = {{join({topic.surface[0], topic.surface[1]}), 0.6},
                   {join({topic.surface[0], topic.planted[0]}), 0.25},
                   {topic.planted[1], 0.15}};
        break;
      }
      case TaskKind::rerank: {
        const std::vector<TokenId> q = corpus.encode(std::vector<std::string>{topic.surface[0], topic.planted[0], topic.planted[1]});
        const RankedList hits = retrieve(index, bm25, q, static_cast<std::size_t>(params.slots));
        if (hits.size() != static_cast<std::size_t>(params.slots)) throw Error("rerank fixture: too few candidates");
        std::vector<std::string> candidates = ranked_ids(corpus, hits);
        std::vector<int> target_slots;
        for (int s = 1; s < params.slots; ++s) {
          const auto& c = candidates[static_cast<std::size_t>(s)];
          if (std::find(topic.target_ids.begin(), topic.target_ids.end(), c) != topic.target_ids.end())
            target_slots.push_back(s);
        }
        if (target_slots.empty()) throw Error("rerank fixture: no target below the first slot");
        const int target = target_slots[rng.index(target_slots.size())];
        targets.push_back({candidates[static_cast<std::size_t>(target)], 1.0});
        state.payload = RerankPayload{raw_query, candidates};
        std::vector<int> identity(static_cast<std::size_t>(params.slots));
        std::iota(identity.begin(), identity.end(), 0);
        std::vector<int> best{target};
        for (int s : identity)
          if (s != target) best.push_back(s);
        planted = perm_text(best);
        raw = perm_text(identity);
        // Uniform over cyclic rotations of the retrieval order: always valid,
        // and any slot can lead while the successor rule stays fixed.
        for (int r = 0; r < params.slots; ++r) {
          std::vector<int> rotation;
          for (int s = 0; s < params.slots; ++s) rotation.push_back((r + s) % params.slots);
          teacher.push_back({perm_text(rotation), 1.0 / params.slots});
        }
        break;
      }
    }
    fx.states.push_back(std::move(state));
    fx.targets.push_back(std::move(targets));
    fx.teacher.state_ids.push_back(id);
    fx.teacher.outputs.push_back(std::move(teacher));
    fx.planted.push_back(std::move(planted));
    fx.raw.push_back(std::move(raw));
    auto& split = i < params.train_states                        ? fx.splits.train
                  : i < params.train_states + params.valid_states ? fx.splits.valid
                                                                  : fx.splits.test;
    split.push_back(id);
  }

  RunConfig& c = fx.config;
  c.task = params.kind;
  c.corpus = "corpus.jsonl";
  c.relevance = "relevance.jsonl";
  c.splits = "splits.json";
  c.teacher = "teacher.jsonl";
  c.env.train_cutoff = params.docs;
  c.env.eval_cutoff = 10;
  c.env.max_query_length = params.max_query_length;
  if (params.kind == TaskKind::rerank) {
    c.grpo.steps = 300;
    c.grpo.config.learning_rate = 1e-3;
    c.grpo.config.sampler.temperature = 1.0;
    c.grpo.sft_warm_start = true;
  } else {
    c.grpo.steps = 150;
    c.grpo.config.learning_rate = 1e-2;
  }
  c.sft.samples = 10000;
  c.sft.steps = 200;
  c.sft.learning_rate = 1e-2;
  c.eval_interval = 10;
  c.seed = params.seed;
  c.out = "run";

  // Re-verify the construction through the environment the config describes.
  auto data = std::make_shared<const TaskData>(corpus, fx.relevance(corpus));
  const auto env = make_environment(params.kind, data, c.env);
  for (std::size_t i = 0; i < fx.states.size(); ++i) {
    const double best = env->reward_text(i, fx.planted[i]);
    const double raw = env->reward_text(i, fx.raw[i]);
    if (std::abs(best - 1.0) > 1e-12)
      throw Error("fixture state " + fx.states[i].id + ": planted action earns " + std::to_string(best));
    if (!(raw < best)) throw Error("fixture state " + fx.states[i].id + ": raw action is not worse than planted");
  }
  return fx;
}

void write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
  };
  const Corpus corpus = fx.corpus();
  {
    auto out = open("corpus.jsonl");
    write_corpus(corpus, out);
  }
  {
    auto out = open("relevance.jsonl");
    write_relevance(fx.relevance(corpus), out);
  }
  {
    auto out = open("splits.json");
    write_splits(fx.splits, out);
  }
  {
    auto out = open("teacher.jsonl");
    write_teacher(fx.teacher, out);
  }
  {
    auto out = open("planted.jsonl");
    for (std::size_t i = 0; i < fx.states.size(); ++i) {
      out << nlohmann::json{{"state_id", fx.states[i].id}, {"planted", fx.planted[i]}, {"raw", fx.raw[i]}}.dump()
          << '\n';
    }
  }
  {
    auto out = open("config.json");
    out << dump_run_config(fx.config);
  }
}

}  // namespace rlrec
