#include "support/doctest_torch.hpp"

#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"
#include "dcae/residual_blocks.hpp"
#include "dcae/shuffle_ops.hpp"
#include "support/grad_check.hpp"
#include "support/test_util.hpp"

using namespace dcae;
using dcae::testing::bitwise_equal;
using dcae::testing::grad_check;
using dcae::testing::named_leaves;
using dcae::testing::randn;

namespace {

template <typename Block>
void zero_branch(Block& block) {
  seeded_init(*block, 1);
  block->zero_init_output();
}

// Sum-of-squares loss through `forward`, differentiated w.r.t. the input and
// every parameter in double precision.
template <typename Block>
double block_grad_error(Block& block, std::vector<int64_t> input_shape, uint64_t seed) {
  block->to(torch::kFloat64);
  randomize_parameters(*block, seed, 0.3);
  auto x = randn(input_shape, seed + 1, torch::kFloat64).requires_grad_(true);
  auto leaves = named_leaves(*block);
  leaves.emplace_back("input", x);
  auto result = grad_check([&] { return block->forward(x).pow(2).sum(); }, leaves);
  MESSAGE("worst tensor ", result.worst, " rel err ", result.max_rel_error, " over ",
          result.elements, " elements");
  return result.max_rel_error;
}

}  // namespace

TEST_CASE("down block: zero-initialized branch leaves only the shortcut") {
  ResidualDownsampleBlock block(4, 8);
  zero_branch(block);
  CHECK(block->shortcut_group() == 2);
  auto x = randn({2, 4, 8, 8}, 3);
  auto expected = shuffle::channel_average(shuffle::space_to_channel(x, 2), 2);
  CHECK(bitwise_equal(block->forward(x), expected));
  CHECK(block->forward(x).sizes() == std::vector<int64_t>{2, 8, 4, 4});
}

TEST_CASE("up block: zero-initialized branch leaves only the shortcut") {
  ResidualUpsampleBlock block(8, 4);
  zero_branch(block);
  CHECK(block->shortcut_group() == 2);
  auto x = randn({2, 8, 4, 4}, 4);
  auto expected = shuffle::channel_duplicate(shuffle::channel_to_space(x, 2), 2);
  CHECK(bitwise_equal(block->forward(x), expected));
  CHECK(block->forward(x).sizes() == std::vector<int64_t>{2, 4, 8, 8});
}

TEST_CASE("latent projections: zero-initialized heads leave only the shortcut") {
  auto pair = make_latent_projection_pair(128, 32, 128);
  seeded_init(*pair.in, 1);
  seeded_init(*pair.out, 2);
  pair.in->zero_init_output();
  pair.out->zero_init_output();
  CHECK(pair.in->shortcut_group() == 4);
  CHECK(pair.out->shortcut_group() == 4);
  auto x = randn({1, 128, 2, 2}, 5);
  CHECK(bitwise_equal(pair.in->forward(x), shuffle::channel_average(x, 4)));
  auto z = randn({1, 32, 2, 2}, 6);
  CHECK(bitwise_equal(pair.out->forward(z), shuffle::channel_duplicate(z, 4)));
}

TEST_CASE("forward is branch plus shortcut for arbitrary parameters") {
  ResidualDownsampleBlock down(4, 8);
  randomize_parameters(*down, 9);
  auto x = randn({1, 4, 8, 8}, 10);
  auto out = down->forward(x);
  CHECK(bitwise_equal(out, down->branch(x) + down->shortcut(x)));
  // The subtraction form holds up to rounding of the final add.
  CHECK(dcae::testing::max_abs_diff(out - down->branch(x), down->shortcut(x)) <=
        1e-6 * (1.0 + out.abs().max().item<double>()));

  ResidualUpsampleBlock up(8, 4);
  randomize_parameters(*up, 11);
  auto y = randn({1, 8, 4, 4}, 12);
  CHECK(bitwise_equal(up->forward(y), up->branch(y) + up->shortcut(y)));

  LatentProjectIn pin(16, 4);
  randomize_parameters(*pin, 13);
  auto h = randn({1, 16, 2, 2}, 14);
  CHECK(bitwise_equal(pin->forward(h), pin->branch(h) + pin->shortcut(h)));

  LatentProjectOut pout(4, 16);
  randomize_parameters(*pout, 15);
  auto z = randn({1, 4, 2, 2}, 16);
  CHECK(bitwise_equal(pout->forward(z), pout->branch(z) + pout->shortcut(z)));
}

TEST_CASE("blocks without shortcut compute the branch alone") {
  ResidualDownsampleBlock down(4, 8, /*shortcut=*/false);
  randomize_parameters(*down, 1);
  auto x = randn({1, 4, 8, 8}, 2);
  CHECK_FALSE(down->has_shortcut());
  CHECK(bitwise_equal(down->forward(x), down->branch(x)));

  ResidualUpsampleBlock up(8, 4, /*shortcut=*/false);
  randomize_parameters(*up, 3);
  auto y = randn({1, 8, 4, 4}, 4);
  CHECK(bitwise_equal(up->forward(y), up->branch(y)));
}

TEST_CASE("shape algebra") {
  ResidualDownsampleBlock down(4, 8);
  ResidualUpsampleBlock up(8, 4);
  auto x = randn({2, 4, 8, 8}, 20);
  CHECK(up->forward(down->forward(x)).sizes() == x.sizes());

  // k stacked downsamples reduce each side by 2^k.
  std::vector<ResidualDownsampleBlock> stack = {ResidualDownsampleBlock(3, 6),
                                                ResidualDownsampleBlock(6, 12),
                                                ResidualDownsampleBlock(12, 24)};
  auto h = randn({1, 3, 32, 32}, 21);
  for (auto& b : stack) h = b->forward(h);
  CHECK(h.sizes() == std::vector<int64_t>{1, 24, 4, 4});
}

TEST_CASE("divisibility violations are configuration errors at construction") {
  CHECK_THROWS_AS(ResidualDownsampleBlock(4, 3), ConfigError);   // 3 does not divide 16
  CHECK_THROWS_AS(ResidualUpsampleBlock(6, 4), ConfigError);     // 6 not divisible by 4
  CHECK_THROWS_AS(ResidualUpsampleBlock(8, 3), ConfigError);     // 2 does not divide 3
  CHECK_THROWS_AS(make_latent_projection_pair(30, 4, 32), ConfigError);
  CHECK_THROWS_AS(make_latent_projection_pair(32, 4, 30), ConfigError);
  CHECK_NOTHROW(ResidualDownsampleBlock(4, 16));
  CHECK_NOTHROW(ResidualUpsampleBlock(16, 16));
}

TEST_CASE("odd spatial input to a down block is a shape error") {
  ResidualDownsampleBlock down(4, 8);
  CHECK_THROWS_AS(down->forward(torch::zeros({1, 4, 5, 4})), ShapeError);
}

TEST_CASE("ResBlock and attention start as the identity") {
  ResBlock rb(8);
  seeded_init(*rb, 1);
  rb->zero_init_output();
  auto x = randn({1, 8, 4, 4}, 2);
  CHECK(bitwise_equal(rb->forward(x), x));

  AttentionBlock attn(8);
  seeded_init(*attn, 3);
  attn->zero_init_output();
  CHECK(bitwise_equal(attn->forward(x), x));
}

TEST_CASE("gradient oracle: down block") {
  ResidualDownsampleBlock block(4, 8);
  CHECK(block_grad_error(block, {1, 4, 4, 4}, 30) < 1e-4);
}

TEST_CASE("gradient oracle: up block") {
  ResidualUpsampleBlock block(8, 4);
  CHECK(block_grad_error(block, {1, 8, 4, 4}, 31) < 1e-4);
}

TEST_CASE("gradient oracle: latent projections") {
  LatentProjectIn pin(8, 2);
  CHECK(block_grad_error(pin, {1, 8, 4, 4}, 32) < 1e-4);
  LatentProjectOut pout(2, 8);
  CHECK(block_grad_error(pout, {1, 2, 4, 4}, 33) < 1e-4);
}

TEST_CASE("gradient oracle: attention block") {
  AttentionBlock attn(4);
  CHECK(block_grad_error(attn, {1, 4, 4, 4}, 34) < 1e-4);
}
