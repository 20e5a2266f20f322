#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

// Central finite differences as an independent oracle for autograd.
namespace dcae::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // name of the tensor with the largest error
  int64_t elements = 0;
  int64_t informative = 0;  // tensors whose gradient rises above the noise level
};

// Relative error ||a - n|| / max(||a||, ||n||) per tensor. Gradients whose
// norms both sit below the finite-difference noise level
// (floor * max(1, |loss|) * sqrt(numel)) count as agreeing; this covers
// parameters with an exactly vanishing gradient, e.g. a conv bias followed by
// a one-channel-per-group norm. Tensors must be float64 leaves
// with requires_grad set; `loss` must recompute from them on every call.
inline GradCheckResult grad_check(const std::function<torch::Tensor()>& loss,
                                  const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                                  double h = 1e-5, double floor = 1e-9) {
  std::vector<torch::Tensor> leaves;
  for (const auto& [name, t] : tensors) leaves.push_back(t);
  auto value = loss();
  const double scale = std::max(1.0, std::abs(value.item<double>()));
  auto analytic = torch::autograd::grad({value}, leaves, {}, /*retain_graph=*/false,
                                        /*create_graph=*/false, /*allow_unused=*/true);

  GradCheckResult result;
  torch::NoGradGuard no_grad;
  for (size_t k = 0; k < tensors.size(); ++k) {
    auto t = tensors[k].second;
    auto flat = t.view({-1});
    auto numeric = torch::zeros_like(flat);
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = loss().item<double>();
      flat[i] = orig - h;
      const double down = loss().item<double>();
      flat[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    auto a = analytic[k].defined() ? analytic[k].reshape({-1}) : torch::zeros_like(flat);
    const double na = a.norm().item<double>(), nn = numeric.norm().item<double>();
    const double diff = (a - numeric).norm().item<double>();
    const double denom = std::max(na, nn);
    const double noise = floor * scale * std::sqrt(static_cast<double>(flat.numel()));
    const double rel = denom < noise ? 0.0 : diff / denom;
    if (denom >= noise) ++result.informative;
    result.elements += flat.numel();
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = tensors[k].first;
    }
  }
  return result;
}

// All parameters of a module as named leaves (module must already be float64).
inline std::vector<std::pair<std::string, torch::Tensor>> named_leaves(torch::nn::Module& m,
                                                                      const std::string& prefix = "") {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (auto& item : m.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
  return out;
}

}  // namespace dcae::testing
