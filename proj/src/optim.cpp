#include "cmnt/optim.hpp"

#include "cmnt/error.hpp"

#include <algorithm>
#include <cmath>

namespace cmnt {

void adam_step(std::span<Tensor* const> params, AdamState& state) {
  for (const Tensor* p : params) {
    if (!p->has_grad()) throw Error("adam_step: parameter " + p->shape_string() + " has no gradient");
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->size(), 0.0);
      state.second_moment.emplace_back(p->size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw Error("adam_step: moment count mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != p.size()) throw Error("adam_step: moment shape mismatch");
    const auto g = p.grad();
    auto w = p.values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (g[j] == 0.0 && m[j] == 0.0 && v[j] == 0.0) continue;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

void adam_step(ParamStore& params, AdamState& state) {
  const auto ts = params.tensors();
  adam_step(std::span<Tensor* const>(ts), state);
}

GradCheckResult finite_difference_check(const LossFunction& loss_fn,
                                        std::span<Tensor* const> params, double epsilon) {
  if (epsilon < 1e-6 || epsilon > 1e-3) throw Error("finite_difference_check: epsilon outside [1e-6, 1e-3]");
  GradCheckResult result;
  if (params.empty()) return result;
  for (Tensor* p : params) p->zero_grad();
  const double base = loss_fn(true);
  if (!std::isfinite(base)) throw Error("finite_difference_check: non-finite loss");
  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double saved = w[j];
      double f[4];
      const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
      for (int k = 0; k < 4; ++k) {
        w[j] = saved + offsets[k] * epsilon;
        f[k] = loss_fn(false);
        if (!std::isfinite(f[k])) {
          w[j] = saved;
          throw Error("finite_difference_check: non-finite loss");
        }
      }
      w[j] = saved;
      // fourth-order central stencil keeps truncation error far below rounding noise
      const double numeric = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * epsilon);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace cmnt
