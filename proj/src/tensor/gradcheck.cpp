#include "vaut/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace vaut {

namespace {

double relative_error(double analytic, double numeric) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const Tensor<double>& point, double eps) {
  Tensor<double> x = point.clone();
  x.set_requires_grad(true);
  Tape<double>::current().clear();
  Tensor<double> out = f(x);
  std::vector<double> analytic(x.numel(), 0.0);
  if (out.requires_grad()) {
    backward(out);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  Tensor<double> probe = point.clone();
  auto pv = probe.mutable_values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double saved = pv[i];
    pv[i] = saved + eps;
    const double up = f(probe).item();
    pv[i] = saved - eps;
    const double down = f(probe).item();
    pv[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

double finite_diff_check_params(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> params,
                                double eps, std::size_t max_coords, Rng& rng) {
  for (auto& p : params) p.zero_grad();
  Tape<double>::current().clear();
  backward(loss_fn());

  NoGradGuard no_grad;
  double worst = 0.0;
  for (auto& p : params) {
    if (!p.requires_grad()) continue;
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (max_coords != 0 && coords.size() > max_coords) {
      rng.shuffle(coords);
      coords.resize(max_coords);
    }
    const std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                      : std::vector<double>(p.numel(), 0.0);
    auto pv = p.mutable_values();
    for (std::size_t i : coords) {
      const double saved = pv[i];
      pv[i] = saved + eps;
      const double up = loss_fn().item();
      pv[i] = saved - eps;
      const double down = loss_fn().item();
      pv[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace vaut
