#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zshot/data/example.hpp"

namespace zshot::data {

/// Token <-> index map. Indices 0..2 are reserved for padding, unknown and
/// end-of-sequence. Output distributions append a block of copy positions
/// after the last vocabulary index, so copy indices never collide with tokens.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kEos = 2;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{}, 1) {}

  /// `tokens` are the non-reserved entries in index order.
  Vocab(const std::vector<std::string>& tokens, std::size_t max_source_len)
      : max_source_len_(max_source_len) {
    for (const char* t : {kPadToken, kUnkToken, kEosToken}) insert(t);
    for (const auto& t : tokens) {
      if (index_.count(t) != 0) throw std::invalid_argument("duplicate vocabulary token: " + t);
      insert(t);
    }
  }

  /// V: number of non-copy entries, reserved ones included.
  int size() const { return static_cast<int>(tokens_.size()); }
  std::size_t max_source_len() const { return max_source_len_; }

  int index(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }

  /// Distribution index of copy position `pos` (0-based).
  int copy_index(std::size_t pos) const { return size() + static_cast<int>(pos); }
  bool is_copy_index(int idx) const { return idx >= size(); }

  /// Non-reserved tokens in index order.
  std::vector<std::string> entries() const { return {tokens_.begin() + 3, tokens_.end()}; }

  bool operator==(const Vocab& o) const {
    return tokens_ == o.tokens_ && max_source_len_ == o.max_source_len_;
  }

 private:
  void insert(const std::string& t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t max_source_len_ = 1;
};

/// Vocabulary over source and target tokens seen at least `min_count` times,
/// ordered by count descending then token ascending.
inline Vocab build_vocab(const std::vector<Example>& examples, int min_count = 1) {
  if (min_count < 1) throw std::invalid_argument("build_vocab: min_count must be >= 1");
  std::map<std::string, int> counts;
  std::size_t max_src = 1;
  for (const auto& e : examples) {
    max_src = std::max(max_src, e.source.size());
    for (const auto& t : e.source) ++counts[t];
    for (const auto& t : e.target) ++counts[t];
  }
  std::vector<std::pair<std::string, int>> kept;
  for (auto& [tok, n] : counts) {
    if (n < min_count) continue;
    if (tok == kEosToken || tok == Vocab::kPadToken || tok == Vocab::kUnkToken) continue;
    kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return Vocab(tokens, max_src);
}

}  // namespace zshot::data
