#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "rlrec/corpus.hpp"
#include "rlrec/envs.hpp"

namespace rlrec::fixtures {

// d1 "red shoes", d2 "blue shoes", d3 "red hat".
inline Corpus three_docs() {
  return Corpus({{"d1", "red shoes", "", "c1"}, {"d2", "blue shoes", "", "c2"}, {"d3", "red hat", "", "c1"}});
}

inline std::shared_ptr<const TaskData> three_doc_task() {
  Corpus c = three_docs();
  RelevanceDict rel;
  rel.add({"q1", TaskKind::product_search, std::string("red footwear")}, {{"d1", 1.0}}, c);
  rel.add({"q2", TaskKind::product_search, std::string("blue")}, {{"d2", 1.0}}, c);
  rel.add({"r1", TaskKind::rerank, RerankPayload{"red", {"d1", "d2"}}}, {{"d1", 1.0}}, c);
  return std::make_shared<const TaskData>(std::move(c), std::move(rel));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("rlrec_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace rlrec::fixtures
