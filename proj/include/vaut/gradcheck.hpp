#pragma once

#include <functional>
#include <vector>

#include "vaut/random.hpp"
#include "vaut/tensor.hpp"

namespace vaut {

using ScalarFn = std::function<Tensor<double>(const Tensor<double>&)>;

/// Compares the tape gradient of scalar `f` at `point` against central
/// differences with step `eps`. Returns the max over coordinates of
/// |analytic − numeric| / max(1, |analytic|); NaN anywhere yields +inf.
double finite_diff_check(const ScalarFn& f, const Tensor<double>& point, double eps = 1e-5);

/// Same metric for a loss over many parameters, probing at most
/// `max_coords` randomly chosen coordinates of each parameter (0 = all).
/// Parameters are perturbed in place and restored.
double finite_diff_check_params(const std::function<Tensor<double>()>& loss_fn,
                                std::vector<Tensor<double>> params, double eps, std::size_t max_coords,
                                Rng& rng);

}  // namespace vaut
