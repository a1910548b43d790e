#include "timbre/nn/params.hpp"

namespace timbre::nn {

int ParamLayout::add(const std::string& name, Index rows, Index cols) {
  require(rows > 0 && cols > 0, "ParamLayout: empty tensor " + name);
  require(!by_name_.contains(name), "ParamLayout: duplicate tensor " + name);
  const int id = static_cast<int>(entries_.size());
  entries_.push_back({name, total_, rows, cols});
  by_name_.emplace(name, id);
  total_ += rows * cols;
  return id;
}

int ParamLayout::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::vector<int> ParamLayout::group(const std::string& prefix) const {
  std::vector<int> ids;
  for (int i = 0; i < static_cast<int>(entries_.size()); ++i) {
    if (entries_[i].name.starts_with(prefix)) ids.push_back(i);
  }
  return ids;
}

}  // namespace timbre::nn
