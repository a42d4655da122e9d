#pragma once

// JSONL corpus files: one object per line,
//   {"id": "...", "source": [tokens], "target": [tokens], "domain": "name"}
// Targets are stored without the end-of-sequence marker; it is appended on load.

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "zshot/data/example.hpp"

namespace zshot::data {

class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class DomainPolicy {
  kRegister,  // unseen domain names are added to the registry
  kClosed,    // unseen domain names are an error
};

namespace detail {

inline std::vector<std::string> token_list(const nlohmann::ordered_json& obj, const char* key,
                                           std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(std::string("missing field \"") + key + "\"", line);
  if (!it->is_array()) throw CorpusError(std::string("field \"") + key + "\" must be an array", line);
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const auto& t : *it) {
    if (!t.is_string()) throw CorpusError(std::string("non-string token in \"") + key + "\"", line);
    out.push_back(t.get<std::string>());
  }
  if (out.empty()) throw CorpusError(std::string("field \"") + key + "\" is empty", line);
  return out;
}

inline std::string string_field(const nlohmann::ordered_json& obj, const char* key,
                                std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw CorpusError(std::string("missing field \"") + key + "\"", line);
  if (!it->is_string()) throw CorpusError(std::string("field \"") + key + "\" must be a string", line);
  return it->get<std::string>();
}

inline bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace detail

inline std::vector<Example> read_corpus(std::istream& in, DomainRegistry& domains,
                                        DomainPolicy policy = DomainPolicy::kRegister) {
  std::vector<Example> out;
  std::unordered_set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (detail::blank(raw)) continue;
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!obj.is_object()) throw CorpusError("record is not an object", line);
    Example ex;
    ex.id = detail::string_field(obj, "id", line);
    ex.source = detail::token_list(obj, "source", line);
    ex.target = detail::token_list(obj, "target", line);
    const auto domain = detail::string_field(obj, "domain", line);
    if (policy == DomainPolicy::kClosed && !domains.contains(domain)) {
      throw CorpusError("unknown domain \"" + domain + "\"", line);
    }
    ex.domain = domains.add(domain);
    if (ex.target.back() != kEosToken) ex.target.emplace_back(kEosToken);
    if (!seen.insert(ex.id).second) throw CorpusError("duplicate id \"" + ex.id + "\"", line);
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<Example> load_corpus(const std::string& path, DomainRegistry& domains,
                                        DomainPolicy policy = DomainPolicy::kRegister) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return read_corpus(in, domains, policy);
}

/// Canonical single-line encoding of one example.
inline std::string corpus_line(const Example& e, const DomainRegistry& domains) {
  nlohmann::ordered_json obj;
  obj["id"] = e.id;
  obj["source"] = e.source;
  obj["target"] = strip_eos(e.target);
  obj["domain"] = domains.name(e.domain);
  return obj.dump();
}

inline void write_corpus(std::ostream& out, const std::vector<Example>& examples,
                         const DomainRegistry& domains) {
  for (const auto& e : examples) out << corpus_line(e, domains) << '\n';
}

inline void save_corpus(const std::string& path, const std::vector<Example>& examples,
                        const DomainRegistry& domains) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  write_corpus(out, examples, domains);
}

// ---------------------------------------------------------- flip manifest

struct FlipRecord {
  std::string id;
  std::string original_domain;
  std::string flipped_domain;
  bool operator==(const FlipRecord&) const = default;
};

inline void write_flip_manifest(std::ostream& out, const std::vector<FlipRecord>& flips) {
  for (const auto& f : flips) {
    nlohmann::ordered_json obj;
    obj["id"] = f.id;
    obj["original_domain"] = f.original_domain;
    obj["flipped_domain"] = f.flipped_domain;
    out << obj.dump() << '\n';
  }
}

inline std::vector<FlipRecord> read_flip_manifest(std::istream& in) {
  std::vector<FlipRecord> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (detail::blank(raw)) continue;
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(raw);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorpusError(std::string("malformed JSON: ") + e.what(), line);
    }
    out.push_back({detail::string_field(obj, "id", line),
                   detail::string_field(obj, "original_domain", line),
                   detail::string_field(obj, "flipped_domain", line)});
  }
  return out;
}

}  // namespace zshot::data
