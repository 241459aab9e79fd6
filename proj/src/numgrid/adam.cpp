#include "evlt/numgrid/adam.hpp"

#include <cmath>

namespace evlt::numgrid {

template <typename T>
void adam_step(ParamTree<T>& params, const GradientMap<T>& grads, AdamState<T>& state) {
  // Validate everything before touching any value so a bad call is a no-op.
  for (const auto& name : params.names()) {
    if (params.is_frozen(name)) continue;
    auto it = grads.find(name);
    require(it != grads.end(), "adam_step: no gradient for parameter '" + name + "'");
    require(it->second.shape() == params.at(name).shape(),
            "adam_step: gradient shape " + shape_str(it->second.shape()) + " differs from parameter '" +
                name + "' " + shape_str(params.at(name).shape()));
    if (auto m = state.m.find(name); m != state.m.end())
      require(m->second.size() == params.at(name).numel(),
              "adam_step: moment size mismatch for parameter '" + name + "'");
  }

  state.step += 1;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (const auto& name : params.names()) {
    if (params.is_frozen(name)) continue;
    auto w = params.at(name).mutable_data();
    auto g = grads.at(name).data();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(w.size(), T(0));
      v.assign(w.size(), T(0));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
      const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      w[i] = static_cast<T>(w[i] - h.lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

template void adam_step(ParamTree<float>&, const GradientMap<float>&, AdamState<float>&);
template void adam_step(ParamTree<double>&, const GradientMap<double>&, AdamState<double>&);

}  // namespace evlt::numgrid
