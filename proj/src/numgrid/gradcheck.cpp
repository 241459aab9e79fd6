#include "evlt/numgrid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

namespace evlt::numgrid {

namespace {

// Derivative from f at x-2h..x+2h. On a smooth stretch the signed second
// differences of the two halves agree closely (both f'' h^2); a ReLU kink in
// one half adds roughly |slope jump| * distance to that half only. With the
// halves within 10% the five-point central difference is used; a kink that
// slips under that bound moves the estimate by ~f'' h / 100. Otherwise, or
// when f curves on the scale of h, the step shrinks by 8 (twice at most),
// and failing that the second-order one-sided difference on the quieter
// side is used.
template <typename F>
double kink_aware_estimate(F&& at, double f0, double h, int retries = 2) {
  const double fm2 = at(-2.0 * h), fm1 = at(-h), fp1 = at(h), fp2 = at(2.0 * h);
  const double lo = f0 - 2.0 * fm1 + fm2;
  const double hi = fp2 - 2.0 * fp1 + f0;
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                       std::max({std::abs(fm2), std::abs(f0), std::abs(fp2), 1.0});
  if (std::abs(lo - hi) <= 0.1 * std::max(std::abs(lo), std::abs(hi)) + noise) {
    const double c3 = (fp1 - fm1) / (2.0 * h);
    const double c5 = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h);
    // The three- and five-point estimates disagree beyond roundoff when f
    // bends on a scale comparable to h.
    const double roundoff = 1e3 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f0), 1.0) / h;
    if (retries == 0 || std::abs(c3 - c5) <= 2e-5 * std::abs(c5) + roundoff) return c5;
  }
  if (retries > 0) return kink_aware_estimate(at, f0, h / 8.0, retries - 1);
  if (std::abs(hi) < std::abs(lo)) return (-3.0 * f0 + 4.0 * fp1 - fp2) / (2.0 * h);
  return (3.0 * f0 - 4.0 * fm1 + fm2) / (2.0 * h);
}

}  // namespace

template <typename T>
GradCheckReport finite_diff_check(const std::function<Tensor<T>(const ParamTree<T>&)>& fn,
                                  ParamTree<T>& params, const GradCheckOptions& options) {
  require(options.eps > 0.0, "finite_diff_check: eps must be positive");
  const auto call = [&](const std::string& context) -> double {
    try {
      const Tensor<T> out = fn(params);
      require(out.numel() == 1, "finite_diff_check: function must return a scalar");
      return static_cast<double>(out.item());
    } catch (...) {
      std::throw_with_nested(GradCheckError("finite_diff_check: function threw while " + context));
    }
  };

  Tensor<T> loss;
  try {
    loss = fn(params);
  } catch (...) {
    std::throw_with_nested(GradCheckError("finite_diff_check: function threw at the base point"));
  }
  const double base = static_cast<double>(loss.item());
  const GradientMap<T> analytic = backward(loss, params);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (const auto& name : params.names()) {
    if (params.is_frozen(name)) continue;
    auto values = params.at(name).mutable_data();
    const auto grad = analytic.at(name).data();
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_elements != 0) {
      const std::size_t keep = std::max<std::size_t>(options.max_elements, 32);
      if (idx.size() > keep) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
      }
    }
    double worst = 0.0;
    for (std::size_t i : idx) {
      const T saved = values[i];
      const std::string ctx = "perturbing " + name + "[" + std::to_string(i) + "]";
      const auto at = [&](double offset) {
        values[i] = static_cast<T>(saved + offset);
        const double v = call(ctx);
        values[i] = saved;
        return v;
      };
      const double h = options.eps;
      const double numeric =
          options.kink_aware ? kink_aware_estimate(at, base, h) : (at(h) - at(-h)) / (2.0 * h);
      const double a = grad[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
      ++report.probes;
    }
    report.max_rel_error[name] = worst;
    if (worst >= report.worst) {
      report.worst = worst;
      report.worst_param = name;
    }
  }
  return report;
}

template GradCheckReport finite_diff_check(const std::function<Tensor<float>(const ParamTree<float>&)>&,
                                           ParamTree<float>&, const GradCheckOptions&);
template GradCheckReport finite_diff_check(const std::function<Tensor<double>(const ParamTree<double>&)>&,
                                           ParamTree<double>&, const GradCheckOptions&);

}  // namespace evlt::numgrid
