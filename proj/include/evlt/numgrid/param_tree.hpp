#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "evlt/numgrid/tensor.hpp"

namespace evlt::numgrid {

/// Named learnable tensors, iterated in lexicographic name order. Frozen
/// entries are excluded from optimizer updates and record no gradients.
template <typename T>
class ParamTree {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void add(const std::string& name, Tensor<T> t) {
    require(!name.empty(), "ParamTree: empty parameter name");
    require(!entries_.contains(name), "ParamTree: duplicate parameter '" + name + "'");
    t.set_requires_grad(!frozen_.contains(name));
    entries_.emplace(name, std::move(t));
  }

  bool contains(const std::string& name) const { return entries_.contains(name); }

  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), "ParamTree: no parameter named '" + name + "'");
    return it->second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), "ParamTree: no parameter named '" + name + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [k, v] : entries_) n += v.numel();
    return n;
  }

  void freeze(const std::string& name) {
    at(name).set_requires_grad(false);
    frozen_.insert(name);
  }
  /// Freezes every entry whose name starts with `prefix`; returns how many.
  std::size_t freeze_prefix(const std::string& prefix) {
    std::size_t n = 0;
    for (auto& [k, v] : entries_)
      if (k.starts_with(prefix)) {
        v.set_requires_grad(false);
        frozen_.insert(k);
        ++n;
      }
    return n;
  }
  void unfreeze_all() {
    for (const auto& k : frozen_) entries_.at(k).set_requires_grad(true);
    frozen_.clear();
  }
  bool is_frozen(const std::string& name) const { return frozen_.contains(name); }
  const std::set<std::string>& frozen() const { return frozen_; }

  bool has_prefix(const std::string& prefix) const {
    auto it = entries_.lower_bound(prefix);
    return it != entries_.end() && it->first.starts_with(prefix);
  }

  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }

  /// Deep copy; the frozen set is preserved.
  ParamTree clone() const {
    ParamTree out;
    out.frozen_ = frozen_;
    for (const auto& [k, v] : entries_) {
      auto t = v.clone();
      t.set_requires_grad(!frozen_.contains(k));
      out.entries_.emplace(k, std::move(t));
    }
    return out;
  }

  template <typename U>
  ParamTree<U> cast() const {
    ParamTree<U> out;
    for (const auto& [k, v] : entries_) out.add(k, v.template cast<U>());
    for (const auto& k : frozen_) out.freeze(k);
    return out;
  }

  /// Copies the values of every entry in `src` that also exists here.
  void assign_from(const ParamTree& src) {
    for (const auto& [k, v] : src.entries_) {
      auto& dst = at(k);
      require(dst.shape() == v.shape(), "ParamTree::assign_from: shape mismatch for '" + k + "'");
      auto d = dst.mutable_data();
      std::copy(v.data().begin(), v.data().end(), d.begin());
    }
  }

 private:
  Map entries_;
  std::set<std::string> frozen_;
};

/// Gradient per parameter name; values are plain (non-recording) tensors.
template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

/// Reverse-mode pass from a scalar loss. Every parameter of `params` gets an
/// entry: its gradient if reachable from the loss, zeros otherwise. Gradients
/// of tensors used more than once are summed. Throws ContractError for a
/// non-scalar loss and NumericError (naming the op) on a non-finite gradient.
template <typename T>
GradientMap<T> backward(const Tensor<T>& loss, const ParamTree<T>& params);

/// into[name] += add[name] for every name in `add`.
template <typename T>
void accumulate(GradientMap<T>& into, const GradientMap<T>& add);

}  // namespace evlt::numgrid
