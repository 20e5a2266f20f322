#pragma once

#include <torch/torch.h>

// Non-parametric channel/space rearrangements that every residual shortcut in
// the autoencoder is built from. All functions take rank-4 [N, C, H, W]
// tensors, are differentiable, and never allocate parameters.
//
// Layout convention (binding for checkpoints and the patchify equivalence):
//   space_to_channel(x, p)[n, c*p*p + dy*p + dx, i, j] == x[n, c, i*p + dy, j*p + dx]
// i.e. the offset inside a p x p block is the minor channel index.
//
// Grouping convention for channel_average / channel_duplicate: the channel
// axis is split into g contiguous chunks, so channel_average is the exact
// left inverse of channel_duplicate.
namespace dcae::shuffle {

// [N, C, H, W] -> [N, p*p*C, H/p, W/p]. Throws ShapeError if p does not divide H and W.
torch::Tensor space_to_channel(const torch::Tensor& x, int64_t p);

// [N, C, H, W] -> [N, C/(p*p), p*H, p*W]. Exact inverse of space_to_channel.
torch::Tensor channel_to_space(const torch::Tensor& x, int64_t p);

// [N, g*C', H, W] -> [N, C', H, W]: mean over g contiguous channel chunks.
// Chunks are summed as a balanced pairwise tree; float32 inputs are summed in
// double. Averaging g identical chunks is therefore exact for any g on float32
// and for power-of-two g on float64.
torch::Tensor channel_average(const torch::Tensor& x, int64_t groups);

// [N, C', H, W] -> [N, g*C', H, W]: g copies concatenated along channels.
torch::Tensor channel_duplicate(const torch::Tensor& x, int64_t groups);

}  // namespace dcae::shuffle
