#pragma once

#include "cmnt/params.hpp"
#include "cmnt/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cmnt {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// Bias-corrected Adam update. Every parameter must carry a gradient buffer.
void adam_step(std::span<Tensor* const> params, AdamState& state);
void adam_step(ParamStore& params, AdamState& state);

// Evaluates the loss; when `with_grad` is set it must also leave d loss / d
// param in every parameter's gradient buffer (which the caller has zeroed).
using LossFunction = std::function<double(bool with_grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Five-point central-difference check of every parameter entry. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). The loss must be
// smooth within 2 * epsilon of the current parameters.
GradCheckResult finite_difference_check(const LossFunction& loss_fn,
                                        std::span<Tensor* const> params, double epsilon);

}  // namespace cmnt
