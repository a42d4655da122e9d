#pragma once

#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace zshot::data {

inline constexpr const char* kEosToken = "</s>";

/// Index of a registered domain (task), stable for the lifetime of a registry.
struct TaskId {
  int index = 0;
  auto operator<=>(const TaskId&) const = default;
};

/// One (source, target, domain) triple. `target` always ends with kEosToken.
struct Example {
  std::string id;
  std::vector<std::string> source;
  std::vector<std::string> target;
  TaskId domain;

  bool operator==(const Example&) const = default;
};

/// Bidirectional map between domain names and TaskIds.
class DomainRegistry {
 public:
  DomainRegistry() = default;
  explicit DomainRegistry(const std::vector<std::string>& names) {
    for (const auto& n : names) add(n);
  }

  /// Registers `name` if needed and returns its id.
  TaskId add(const std::string& name) {
    if (auto it = index_.find(name); it != index_.end()) return TaskId{it->second};
    const int id = static_cast<int>(names_.size());
    names_.push_back(name);
    index_.emplace(name, id);
    return TaskId{id};
  }

  TaskId at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown domain: " + name);
    return TaskId{it->second};
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::string& name(TaskId t) const {
    if (t.index < 0 || static_cast<std::size_t>(t.index) >= names_.size()) {
      throw std::out_of_range("unregistered task id " + std::to_string(t.index));
    }
    return names_[static_cast<std::size_t>(t.index)];
  }

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const DomainRegistry& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

/// Examples sharing one domain.
struct DomainBatch {
  TaskId domain;
  std::vector<Example> examples;
};

/// All examples of `domain`, in input order.
inline DomainBatch domain_batch(const std::vector<Example>& examples, TaskId domain) {
  DomainBatch batch{domain, {}};
  for (const auto& e : examples) {
    if (e.domain == domain) batch.examples.push_back(e);
  }
  return batch;
}

inline std::vector<Example> filter_domain(const std::vector<Example>& examples, TaskId domain) {
  return domain_batch(examples, domain).examples;
}

/// Target without the trailing EOS.
inline std::vector<std::string> strip_eos(const std::vector<std::string>& tokens) {
  auto out = tokens;
  if (!out.empty() && out.back() == kEosToken) out.pop_back();
  return out;
}

}  // namespace zshot::data
