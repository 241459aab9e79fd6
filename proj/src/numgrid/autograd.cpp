#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "evlt/numgrid/param_tree.hpp"
#include "evlt/simd/kernels.hpp"

namespace evlt::numgrid {
namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Post-order over nodes that require a gradient.
template <typename T>
std::vector<detail::Node<T>*> topo_order(const NodePtr<T>& root) {
  std::vector<detail::Node<T>*> order;
  std::unordered_set<const detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    detail::Node<T>* node = stack.back().first;
    const std::size_t next = stack.back().second;
    if (next < node->parents.size()) {
      stack.back().second = next + 1;
      detail::Node<T>* p = node->parents[next].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace

template <typename T>
GradientMap<T> backward(const Tensor<T>& loss, const ParamTree<T>& params) {
  require(loss.defined() && loss.numel() == 1,
          "backward: loss must be a scalar, got shape " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  GradientMap<T> out;
  for (const auto& [name, t] : params) t.node()->grad.clear();
  if (loss.requires_grad()) {
    auto order = topo_order<T>(loss.node());
    for (auto* n : order) n->grad.clear();
    loss.node()->ensure_grad()[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node<T>& n = **it;
      if (!n.backward || n.grad.empty()) continue;
      n.backward(n);
      for (const auto& p : n.parents)
        if (p->requires_grad && !p->grad.empty() && !all_finite(p->grad))
          throw NumericError(n.op, std::string("backward: non-finite gradient produced by op '") +
                                       n.op + "'");
      // Interior gradients are not needed once propagated.
      if (!n.parents.empty() && it != order.rbegin()) n.grad.clear();
    }
  }
  for (const auto& [name, t] : params) {
    if (t.has_grad())
      out.emplace(name, Tensor<T>(t.shape(), std::vector<T>(t.grad().begin(), t.grad().end())));
    else
      out.emplace(name, Tensor<T>(t.shape(), T(0)));
  }
  return out;
}

template <typename T>
void accumulate(GradientMap<T>& into, const GradientMap<T>& add) {
  for (const auto& [name, g] : add) {
    auto it = into.find(name);
    if (it == into.end()) {
      into.emplace(name, g.clone());
      continue;
    }
    require(it->second.shape() == g.shape(), "accumulate: shape mismatch for '" + name + "'");
    auto dst = it->second.mutable_data();
    simd::kernels<T>().axpy(dst.size(), T(1), g.ptr(), dst.data());
  }
}

template GradientMap<float> backward(const Tensor<float>&, const ParamTree<float>&);
template GradientMap<double> backward(const Tensor<double>&, const ParamTree<double>&);
template void accumulate(GradientMap<float>&, const GradientMap<float>&);
template void accumulate(GradientMap<double>&, const GradientMap<double>&);

}  // namespace evlt::numgrid
