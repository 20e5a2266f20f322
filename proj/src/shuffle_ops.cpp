#include "dcae/shuffle_ops.hpp"

#include <string>

#include "dcae/error.hpp"

namespace dcae::shuffle {
namespace {

void require_rank4(const torch::Tensor& x, const char* op) {
  if (x.dim() != 4) {
    throw ShapeError(std::string(op) + ": expected a rank-4 [N, C, H, W] tensor, got rank " +
                     std::to_string(x.dim()));
  }
}

void require_positive(int64_t v, const char* op, const char* what) {
  if (v < 1) {
    throw ShapeError(std::string(op) + ": " + what + " must be >= 1, got " + std::to_string(v));
  }
}

}  // namespace

torch::Tensor space_to_channel(const torch::Tensor& x, int64_t p) {
  require_rank4(x, "space_to_channel");
  require_positive(p, "space_to_channel", "p");
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (h % p != 0) {
    throw ShapeError("space_to_channel: height " + std::to_string(h) + " is not divisible by p=" +
                     std::to_string(p));
  }
  if (w % p != 0) {
    throw ShapeError("space_to_channel: width " + std::to_string(w) + " is not divisible by p=" +
                     std::to_string(p));
  }
  if (p == 1) return x;
  // [n, c, h/p, dy, w/p, dx] -> [n, c, dy, dx, h/p, w/p]
  return x.reshape({n, c, h / p, p, w / p, p})
      .permute({0, 1, 3, 5, 2, 4})
      .reshape({n, c * p * p, h / p, w / p});
}

torch::Tensor channel_to_space(const torch::Tensor& x, int64_t p) {
  require_rank4(x, "channel_to_space");
  require_positive(p, "channel_to_space", "p");
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  if (c % (p * p) != 0) {
    throw ShapeError("channel_to_space: channel count " + std::to_string(c) +
                     " is not divisible by p^2=" + std::to_string(p * p));
  }
  if (p == 1) return x;
  const auto c_out = c / (p * p);
  // [n, c', dy, dx, h, w] -> [n, c', h, dy, w, dx]
  return x.reshape({n, c_out, p, p, h, w})
      .permute({0, 1, 4, 2, 5, 3})
      .reshape({n, c_out, h * p, w * p});
}

torch::Tensor channel_average(const torch::Tensor& x, int64_t groups) {
  require_rank4(x, "channel_average");
  require_positive(groups, "channel_average", "group count");
  const auto c = x.size(1);
  if (c % groups != 0) {
    throw ShapeError("channel_average: channel count " + std::to_string(c) +
                     " is not divisible by group count " + std::to_string(groups));
  }
  if (groups == 1) return x;
  const auto chunk = c / groups;
  // Reduced-precision inputs are accumulated in double and rounded once.
  const bool widen = x.scalar_type() != torch::kFloat64;
  const auto src = widen ? x.to(torch::kFloat64) : x;

  std::vector<torch::Tensor> parts;
  parts.reserve(static_cast<size_t>(groups));
  for (int64_t g = 0; g < groups; ++g) parts.push_back(src.narrow(1, g * chunk, chunk));

  // Balanced pairwise reduction.
  while (parts.size() > 1) {
    std::vector<torch::Tensor> next;
    next.reserve((parts.size() + 1) / 2);
    for (size_t i = 0; i + 1 < parts.size(); i += 2) next.push_back(parts[i] + parts[i + 1]);
    if (parts.size() % 2 == 1) next.push_back(parts.back());
    parts = std::move(next);
  }
  auto mean = parts.front() / static_cast<double>(groups);
  return widen ? mean.to(x.scalar_type()) : mean;
}

torch::Tensor channel_duplicate(const torch::Tensor& x, int64_t groups) {
  require_rank4(x, "channel_duplicate");
  require_positive(groups, "channel_duplicate", "group count");
  if (groups == 1) return x;
  return x.repeat({1, groups, 1, 1});
}

}  // namespace dcae::shuffle
