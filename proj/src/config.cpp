#include "rlrec/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rlrec/error.hpp"

namespace rlrec {

using json = nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown fields.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* get(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = get(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const char* key, Int& out) {
    if (const json* v = get(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->get<long long>() < 0) throw ConfigError(field(key) + ": must be non-negative");
        out = static_cast<Int>(v->get<unsigned long long>());
      } else {
        out = static_cast<Int>(v->get<long long>());
      }
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  bool string(const char* key, std::string& out) {
    if (const json* v = get(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key().c_str()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void nested(FieldReader& parent, const char* key, Fn&& fn) {
  if (const json* v = parent.get(key)) {
    FieldReader child(*v, parent.field(key));
    fn(child);
    child.finish();
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty()) return "";
  if (base.empty() || !p.is_absolute()) return p.generic_string();
  return std::filesystem::relative(p, base).generic_string();
}

}  // namespace

void RunConfig::validate() const {
  if (corpus.empty()) throw ConfigError("data.corpus: required");
  if (relevance.empty()) throw ConfigError("data.relevance: required");
  if (splits.empty()) throw ConfigError("data.splits: required");
  env.bm25.validate();
  env.reward.validate();
  if (env.eval_cutoff < 1) throw ConfigError("reward.eval_cutoff: must be >= 1");
  if (env.train_cutoff < env.eval_cutoff) throw ConfigError("reward.train_cutoff: must be >= reward.eval_cutoff");
  if (env.history_window < 1) throw ConfigError("env.history_window: must be >= 1");
  if (env.max_query_length < 1) throw ConfigError("env.max_query_length: must be >= 1");
  if (embed < 1) throw ConfigError("policy.embed: must be >= 1");
  if (hidden < 1) throw ConfigError("policy.hidden: must be >= 1");
  grpo.config.validate();
  if (grpo.steps < 0) throw ConfigError("grpo.steps: must be >= 0");
  if (sft.steps < 0) throw ConfigError("sft.steps: must be >= 0");
  if (sft.samples < 1) throw ConfigError("sft.samples: must be >= 1");
  if (!(sft.learning_rate > 0.0)) throw ConfigError("sft.learning_rate: must be > 0");
  if (sft.minibatch_size < 1) throw ConfigError("sft.minibatch_size: must be >= 1");
  if (trainer == TrainerKind::sft && teacher.empty()) throw ConfigError("data.teacher: required when trainer is sft");
  if (grpo.sft_warm_start && teacher.empty()) throw ConfigError("data.teacher: required by grpo.sft_warm_start");
  if (eval_interval < 1) throw ConfigError("eval_interval: must be >= 1");
}

void RunConfig::validate_paths() const {
  validate();
  auto check = [](const std::filesystem::path& p, const char* field) {
    if (!p.empty() && !std::filesystem::exists(p))
      throw ConfigError(std::string(field) + ": no such file: " + p.string());
  };
  check(corpus, "data.corpus");
  check(relevance, "data.relevance");
  check(splits, "data.splits");
  check(teacher, "data.teacher");
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  FieldReader root(doc, "");
  std::string s;
  if (root.string("task", s)) {
    try {
      c.task = parse_task_kind(s);
    } catch (const Error&) {
      throw ConfigError("task: expected product_search, seq_rec or rerank");
    }
  }
  nested(root, "data", [&](FieldReader& r) {
    std::string p;
    if (r.string("corpus", p)) c.corpus = resolve(base_dir, p);
    if (r.string("relevance", p)) c.relevance = resolve(base_dir, p);
    if (r.string("splits", p)) c.splits = resolve(base_dir, p);
    if (r.string("teacher", p)) c.teacher = resolve(base_dir, p);
  });
  nested(root, "bm25", [&](FieldReader& r) {
    r.number("k1", c.env.bm25.k1);
    r.number("b", c.env.bm25.b);
  });
  nested(root, "reward", [&](FieldReader& r) {
    r.integer("train_cutoff", c.env.train_cutoff);
    r.integer("eval_cutoff", c.env.eval_cutoff);
    if (const json* comps = r.get("components")) {
      if (!comps->is_array()) throw ConfigError("reward.components: expected an array");
      c.env.reward.components.clear();
      for (std::size_t i = 0; i < comps->size(); ++i) {
        FieldReader cr((*comps)[i], "reward.components[" + std::to_string(i) + "]");
        RewardComponent comp;
        std::string kind;
        if (!cr.string("kind", kind)) throw ConfigError(cr.field("kind") + ": required");
        try {
          comp.kind = parse_reward_kind(kind);
        } catch (const Error&) {
          throw ConfigError(cr.field("kind") + ": expected ndcg, recall, format or category_consistency");
        }
        if (const json* cut = cr.get("cutoff"); cut && !cut->is_null()) {
          if (!cut->is_number_integer() || cut->get<long long>() < 1)
            throw ConfigError(cr.field("cutoff") + ": expected a positive integer or null");
          comp.cutoff = cut->get<std::size_t>();
        }
        cr.number("weight", comp.weight);
        cr.finish();
        c.env.reward.components.push_back(comp);
      }
    }
  });
  nested(root, "env", [&](FieldReader& r) {
    r.integer("history_window", c.env.history_window);
    r.integer("max_query_length", c.env.max_query_length);
    r.boolean("masked_permutations", c.env.masked_permutations);
  });
  nested(root, "policy", [&](FieldReader& r) {
    r.integer("embed", c.embed);
    r.integer("hidden", c.hidden);
  });
  if (root.string("trainer", s)) {
    if (s == "grpo") c.trainer = TrainerKind::grpo;
    else if (s == "sft") c.trainer = TrainerKind::sft;
    else throw ConfigError("trainer: expected grpo or sft");
  }
  nested(root, "grpo", [&](FieldReader& r) {
    GrpoConfig& g = c.grpo.config;
    r.integer("steps", c.grpo.steps);
    r.integer("batch_states", c.grpo.batch_states);
    r.boolean("sft_warm_start", c.grpo.sft_warm_start);
    r.integer("group_size", g.group_size);
    r.number("clip_eps", g.clip_eps);
    r.number("kl_coef", g.kl_coef);
    r.number("learning_rate", g.learning_rate);
    r.integer("minibatch_size", g.minibatch_size);
    r.integer("epochs", g.epochs);
    r.number("advantage_eps", g.advantage_eps);
    r.number("temperature", g.sampler.temperature);
    r.number("top_p", g.sampler.top_p);
    std::string ratio;
    if (r.string("ratio", ratio)) {
      if (ratio == "sequence") g.ratio = RatioMode::sequence;
      else if (ratio == "token") g.ratio = RatioMode::token;
      else throw ConfigError("grpo.ratio: expected sequence or token");
    }
  });
  nested(root, "sft", [&](FieldReader& r) {
    r.integer("samples", c.sft.samples);
    r.number("learning_rate", c.sft.learning_rate);
    r.integer("steps", c.sft.steps);
    r.integer("minibatch_size", c.sft.minibatch_size);
  });
  root.integer("eval_interval", c.eval_interval);
  root.integer("seed", c.seed);
  if (root.string("out", s)) c.out = resolve(base_dir, s);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_run_config(buf.str(), base);
}

std::string dump_run_config(const RunConfig& c, const std::filesystem::path& base_dir) {
  json comps = json::array();
  for (const auto& comp : c.env.reward.components) {
    json j = {{"kind", std::string(to_string(comp.kind))}, {"weight", comp.weight}};
    j["cutoff"] = comp.cutoff ? json(*comp.cutoff) : json(nullptr);
    comps.push_back(std::move(j));
  }
  const GrpoConfig& g = c.grpo.config;
  json data = {{"corpus", relative_to(c.corpus, base_dir)},
               {"relevance", relative_to(c.relevance, base_dir)},
               {"splits", relative_to(c.splits, base_dir)}};
  if (!c.teacher.empty()) data["teacher"] = relative_to(c.teacher, base_dir);
  json doc = {
      {"task", std::string(to_string(c.task))},
      {"data", data},
      {"bm25", {{"k1", c.env.bm25.k1}, {"b", c.env.bm25.b}}},
      {"reward", {{"components", comps}, {"train_cutoff", c.env.train_cutoff}, {"eval_cutoff", c.env.eval_cutoff}}},
      {"env",
       {{"history_window", c.env.history_window},
        {"max_query_length", c.env.max_query_length},
        {"masked_permutations", c.env.masked_permutations}}},
      {"policy", {{"embed", c.embed}, {"hidden", c.hidden}}},
      {"trainer", c.trainer == TrainerKind::grpo ? "grpo" : "sft"},
      {"grpo",
       {{"steps", c.grpo.steps},
        {"batch_states", c.grpo.batch_states},
        {"sft_warm_start", c.grpo.sft_warm_start},
        {"group_size", g.group_size},
        {"clip_eps", g.clip_eps},
        {"kl_coef", g.kl_coef},
        {"learning_rate", g.learning_rate},
        {"minibatch_size", g.minibatch_size},
        {"epochs", g.epochs},
        {"advantage_eps", g.advantage_eps},
        {"temperature", g.sampler.temperature},
        {"top_p", g.sampler.top_p},
        {"ratio", g.ratio == RatioMode::sequence ? "sequence" : "token"}}},
      {"sft",
       {{"samples", c.sft.samples},
        {"learning_rate", c.sft.learning_rate},
        {"steps", c.sft.steps},
        {"minibatch_size", c.sft.minibatch_size}}},
      {"eval_interval", c.eval_interval},
      {"seed", c.seed},
      {"out", relative_to(c.out, base_dir)},
  };
  return doc.dump(2) + "\n";
}

// ------------------------------------------------------------------ splits

Splits load_splits(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open splits file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
  Splits s;
  FieldReader r(doc, "splits");
  auto list = [&](const char* key, std::vector<std::string>& out) {
    if (const json* v = r.get(key)) {
      if (!v->is_array()) throw ConfigError(r.field(key) + ": expected an array of state ids");
      for (const auto& id : *v) {
        if (!id.is_string()) throw ConfigError(r.field(key) + ": expected an array of state ids");
        out.push_back(id.get<std::string>());
      }
    }
  };
  list("train", s.train);
  list("valid", s.valid);
  list("test", s.test);
  r.finish();
  if (s.train.empty()) throw ConfigError("splits.train: must not be empty");
  return s;
}

void write_splits(const Splits& splits, std::ostream& out) {
  const json doc = {{"train", splits.train}, {"valid", splits.valid}, {"test", splits.test}};
  out << doc.dump(2) << '\n';
}

// ----------------------------------------------------------------- teacher

Teacher parse_teacher(std::istream& in) {
  Teacher t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = "line " + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IngestError(at + e.what());
    }
    if (!obj.is_object() || !obj.contains("state_id") || !obj["state_id"].is_string() || !obj.contains("outputs") ||
        !obj["outputs"].is_array())
      throw IngestError(at + "expected {\"state_id\": str, \"outputs\": [...]}");
    std::vector<TeacherOutput> outs;
    double total = 0.0;
    for (const auto& o : obj["outputs"]) {
      if (!o.is_object() || !o.contains("text") || !o["text"].is_string() || !o.contains("prob") ||
          !o["prob"].is_number())
        throw IngestError(at + "each output needs \"text\" and \"prob\"");
      const double p = o["prob"].get<double>();
      if (!(p >= 0.0) || !std::isfinite(p)) throw IngestError(at + "probabilities must be finite and >= 0");
      total += p;
      outs.push_back({o["text"].get<std::string>(), p});
    }
    if (outs.empty() || std::abs(total - 1.0) > 1e-6) throw IngestError(at + "output probabilities must sum to 1");
    t.state_ids.push_back(obj["state_id"].get<std::string>());
    t.outputs.push_back(std::move(outs));
  }
  return t;
}

Teacher load_teacher(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open teacher file: " + path.string());
  try {
    return parse_teacher(in);
  } catch (const IngestError& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

void write_teacher(const Teacher& teacher, std::ostream& out) {
  for (std::size_t i = 0; i < teacher.state_ids.size(); ++i) {
    json outs = json::array();
    for (const auto& o : teacher.outputs[i]) outs.push_back({{"text", o.text}, {"prob", o.prob}});
    out << json{{"state_id", teacher.state_ids[i]}, {"outputs", outs}}.dump() << '\n';
  }
}

}  // namespace rlrec
