#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace zshot::ad {

/// A named weight block inside a flat parameter vector. Vectors use cols == 1.
struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  std::size_t end() const { return offset + size(); }
};

/// Ordered segment table. Segments are packed back to back in insertion order,
/// so they are disjoint and cover [0, size()).
class Layout {
 public:
  Layout() = default;

  /// Appends a block and returns its offset.
  std::size_t add(std::string name, std::size_t rows, std::size_t cols = 1) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("duplicate segment name: " + name);
    }
    Segment seg{std::move(name), size_, rows, cols};
    size_ += seg.size();
    index_.emplace(seg.name, segments_.size());
    segments_.push_back(std::move(seg));
    return segments_.back().offset;
  }

  const Segment& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("unknown segment: " + name);
    }
    return segments_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<Segment>& segments() const { return segments_; }
  std::size_t size() const { return size_; }

  friend bool operator==(const Layout& a, const Layout& b) {
    if (a.segments_.size() != b.segments_.size()) return false;
    for (std::size_t i = 0; i < a.segments_.size(); ++i) {
      const auto& x = a.segments_[i];
      const auto& y = b.segments_[i];
      if (x.name != y.name || x.offset != y.offset || x.rows != y.rows || x.cols != y.cols) {
        return false;
      }
    }
    return true;
  }

  /// Single-segment layout, handy for losses that are not block structured.
  static std::shared_ptr<const Layout> flat(std::size_t n, std::string name = "theta") {
    auto layout = std::make_shared<Layout>();
    layout->add(std::move(name), n);
    return layout;
  }

 private:
  std::vector<Segment> segments_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t size_ = 0;
};

namespace detail {

template <class Tag>
class FlatVector {
 public:
  FlatVector() : layout_(std::make_shared<Layout>()) {}

  FlatVector(std::shared_ptr<const Layout> layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_) throw std::invalid_argument("null layout");
    if (values_.size() != layout_->size()) {
      throw std::invalid_argument("value count " + std::to_string(values_.size()) +
                                  " does not match layout size " +
                                  std::to_string(layout_->size()));
    }
  }

  static FlatVector zeros(std::shared_ptr<const Layout> layout) {
    const auto n = layout->size();
    return FlatVector(std::move(layout), std::vector<double>(n, 0.0));
  }

  /// Convenience for flat (single-segment) vectors.
  static FlatVector from(std::vector<double> values) {
    auto layout = Layout::flat(values.size());
    return FlatVector(std::move(layout), std::move(values));
  }

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  const Layout& layout() const { return *layout_; }

  std::span<const double> segment(const std::string& name) const {
    const auto& seg = layout_->at(name);
    return std::span<const double>(values_).subspan(seg.offset, seg.size());
  }

  bool all_finite() const {
    for (double x : values_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  /// Same layout, replaced values.
  FlatVector with_values(std::vector<double> values) const {
    return FlatVector(layout_, std::move(values));
  }

  friend bool operator==(const FlatVector& a, const FlatVector& b) {
    return a.values_ == b.values_ && *a.layout_ == *b.layout_;
  }

 private:
  std::shared_ptr<const Layout> layout_;
  std::vector<double> values_;
};

}  // namespace detail

struct ParamTag {};
struct GradTag {};

/// Flat view of all trainable parameters with a segment table.
using ParamVector = detail::FlatVector<ParamTag>;
/// Gradient (or any direction) living in the same space as a ParamVector.
using GradVector = detail::FlatVector<GradTag>;

inline void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

template <class A, class B>
double dot(const detail::FlatVector<A>& a, const detail::FlatVector<B>& b) {
  check_same_length(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class A>
double norm(const detail::FlatVector<A>& a) {
  return std::sqrt(dot(a, a));
}

/// a + alpha * b, keeping a's layout.
template <class A, class B>
detail::FlatVector<A> axpy(const detail::FlatVector<A>& a, double alpha,
                           const detail::FlatVector<B>& b) {
  check_same_length(a.size(), b.size(), "axpy");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * b[i];
  return a.with_values(std::move(out));
}

template <class A>
detail::FlatVector<A> scaled(const detail::FlatVector<A>& a, double alpha) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= alpha;
  return a.with_values(std::move(out));
}

inline GradVector as_grad(const ParamVector& p) {
  return GradVector(p.layout_ptr(), std::vector<double>(p.values().begin(), p.values().end()));
}

}  // namespace zshot::ad
