#pragma once

#include "timbre/nn/tensor.hpp"

#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace timbre::nn {

struct ParamEntry {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

// Names and shapes of every trainable tensor, laid out contiguously in one
// flat buffer. Shared by parameter, gradient and optimizer-moment sets.
class ParamLayout {
 public:
  int add(const std::string& name, Index rows, Index cols);
  int find(const std::string& name) const;  // -1 when absent
  const ParamEntry& entry(int id) const { return entries_.at(id); }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  Index total_size() const { return total_; }
  // Ids whose name starts with `prefix`.
  std::vector<int> group(const std::string& prefix) const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, int> by_name_;
  Index total_ = 0;
};

// Allocated on Eigen's maximum alignment: every view has the same alignment in
// every process.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), values_(layout_->total_size(), T(0)) {}

  const ParamLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }

  MatMap<T> view(int id) {
    const auto& e = layout_->entry(id);
    return MatMap<T>(values_.data() + e.offset, e.rows, e.cols);
  }
  ConstMatMap<T> view(int id) const {
    const auto& e = layout_->entry(id);
    return ConstMatMap<T>(values_.data() + e.offset, e.rows, e.cols);
  }
  std::span<T> span(int id) {
    const auto& e = layout_->entry(id);
    return {values_.data() + e.offset, static_cast<size_t>(e.size())};
  }
  std::span<const T> span(int id) const {
    const auto& e = layout_->entry(id);
    return {values_.data() + e.offset, static_cast<size_t>(e.size())};
  }

  AlignedVector<T>& values() { return values_; }
  const AlignedVector<T>& values() const { return values_; }
  void set_zero() { std::fill(values_.begin(), values_.end(), T(0)); }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out(layout_);
    for (size_t i = 0; i < values_.size(); ++i) out.values()[i] = static_cast<U>(values_[i]);
    return out;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  AlignedVector<T> values_;
};

}  // namespace timbre::nn
