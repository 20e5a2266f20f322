#include "support/doctest_torch.hpp"

#include "dcae/error.hpp"
#include "dcae/shuffle_ops.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace dcae;
using namespace dcae::shuffle;
using dcae::testing::bitwise_equal;
using dcae::testing::randn;

namespace {

torch::Tensor pixel(std::vector<double> channels) {
  const auto c = static_cast<int64_t>(channels.size());
  return torch::tensor(channels, torch::kFloat64).view({1, c, 1, 1});
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ShapeError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("space_to_channel 2x2 block lands in channel order") {
  auto x = torch::tensor({1.0, 2.0, 3.0, 4.0}).view({1, 1, 2, 2});
  auto y = space_to_channel(x, 2);
  CHECK(y.sizes() == std::vector<int64_t>{1, 4, 1, 1});
  CHECK(torch::equal(y.view({-1}), torch::tensor({1.0, 2.0, 3.0, 4.0})));

  auto back = channel_to_space(y, 2);
  CHECK(bitwise_equal(back, x));
}

TEST_CASE("p = 1 is the identity") {
  auto x = randn({2, 3, 5, 7}, 1);
  CHECK(bitwise_equal(space_to_channel(x, 1), x));
  CHECK(bitwise_equal(channel_to_space(x, 1), x));
}

TEST_CASE("space_to_channel matches the element loop") {
  for (int64_t p : {1, 2, 4}) {
    auto x = randn({2, 3, 8, 16}, 10 + static_cast<uint64_t>(p), torch::kFloat64);
    CHECK(bitwise_equal(space_to_channel(x, p), dcae::testing::loop_space_to_channel(x, p)));
  }
}

TEST_CASE("five stride-2 steps take 256 px to 8 px") {
  auto x = torch::zeros({1, 3, 256, 256});
  for (int k = 0; k < 5; ++k) x = space_to_channel(x, 2);
  CHECK(x.size(2) == 8);
  CHECK(x.size(3) == 8);
}

TEST_CASE("channel_to_space shape contract 2C -> C/2 at twice the size") {
  auto y = channel_to_space(torch::zeros({1, 16, 4, 4}), 2);
  CHECK(y.sizes() == std::vector<int64_t>{1, 4, 8, 8});
}

TEST_CASE("round trip over random shapes and p") {
  uint64_t seed = 100;
  for (int64_t p : {1, 2, 4, 8}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto h = p * (1 + static_cast<int64_t>(rep % 3)), w = p * (1 + static_cast<int64_t>(rep % 2));
      auto x = randn({1 + rep % 2, 1 + rep, h, w}, seed++);
      CHECK(bitwise_equal(channel_to_space(space_to_channel(x, p), p), x));
      auto z = randn({1, p * p * (1 + rep), 3, 2}, seed++);
      CHECK(bitwise_equal(space_to_channel(channel_to_space(z, p), p), z));
    }
  }
}

TEST_CASE("adjointness in double precision") {
  for (int64_t p : {2, 4}) {
    auto x = randn({2, 3, 8, 8}, 7, torch::kFloat64);
    auto y = randn({2, 3 * p * p, 8 / p, 8 / p}, 8, torch::kFloat64);
    const double lhs = (space_to_channel(x, p) * y).sum().item<double>();
    const double rhs = (x * channel_to_space(y, p)).sum().item<double>();
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("shape errors name the axis") {
  CHECK(message_of([] { space_to_channel(torch::zeros({1, 1, 3, 4}), 2); }).find("height") !=
        std::string::npos);
  CHECK(message_of([] { space_to_channel(torch::zeros({1, 1, 4, 5}), 2); }).find("width") !=
        std::string::npos);
  CHECK(message_of([] { channel_to_space(torch::zeros({1, 6, 2, 2}), 2); }).find("channel") !=
        std::string::npos);
  CHECK(message_of([] { channel_average(torch::zeros({1, 6, 2, 2}), 4); }).find("channel") !=
        std::string::npos);
  CHECK_THROWS_AS(space_to_channel(torch::zeros({4, 4}), 2), ShapeError);
  CHECK_THROWS_AS(space_to_channel(torch::zeros({1, 1, 4, 4}), 0), ShapeError);
}

TEST_CASE("channel_average examples") {
  CHECK(torch::equal(channel_average(pixel({2, 4, 6, 8}), 2), pixel({4, 6})));
  CHECK(torch::equal(channel_average(pixel({1, 2, 3, 4}), 4), pixel({2.5})));
  auto x = randn({2, 6, 3, 3}, 3);
  CHECK(bitwise_equal(channel_average(x, 1), x));
}

TEST_CASE("channel_average agrees with the long-double loop") {
  for (int64_t g : {2, 3, 4, 6}) {
    auto x = randn({2, 12, 4, 4}, 40 + static_cast<uint64_t>(g), torch::kFloat64);
    CHECK(dcae::testing::max_abs_diff(channel_average(x, g), dcae::testing::loop_channel_average(x, g)) <=
          1e-15);
  }
}

TEST_CASE("channel_duplicate examples") {
  CHECK(torch::equal(channel_duplicate(pixel({5, 7}), 2), pixel({5, 7, 5, 7})));
  auto x = randn({1, 3, 2, 2}, 4);
  CHECK(bitwise_equal(channel_duplicate(x, 1), x));
  CHECK(channel_duplicate(torch::zeros({1, 8, 4, 4}), 2).size(1) == 16);
}

TEST_CASE("duplicate then average is exact") {
  uint64_t seed = 200;
  for (int64_t g : {1, 2, 4, 8}) {
    for (auto dtype : {torch::kFloat32, torch::kFloat64}) {
      auto x = randn({2, 5, 3, 4}, seed++, dtype) * 1e3;
      CHECK(bitwise_equal(channel_average(channel_duplicate(x, g), g), x));
    }
  }
  // Non-power-of-two groups are exact in single precision.
  for (int64_t g : {3, 5, 6, 7}) {
    auto x = randn({2, 5, 3, 4}, seed++) * 1e3;
    CHECK(bitwise_equal(channel_average(channel_duplicate(x, g), g), x));
  }
}

TEST_CASE("mass relation: g * sum(average) == sum(x) per pixel") {
  for (int64_t g : {2, 3, 4}) {
    auto x = randn({2, 12, 5, 5}, 300 + static_cast<uint64_t>(g), torch::kFloat64);
    auto lhs = channel_average(x, g).sum(1) * static_cast<double>(g);
    CHECK(dcae::testing::max_abs_diff(lhs, x.sum(1)) <= 1e-10);
  }
}

TEST_CASE("averaging and duplication are linear") {
  auto x = randn({1, 8, 3, 3}, 11, torch::kFloat64);
  auto y = randn({1, 8, 3, 3}, 12, torch::kFloat64);
  const double a = 1.75;
  CHECK(dcae::testing::max_abs_diff(channel_average(a * x + y, 4),
                                    a * channel_average(x, 4) + channel_average(y, 4)) <= 1e-12);
  CHECK(dcae::testing::max_abs_diff(channel_duplicate(a * x + y, 3),
                                    a * channel_duplicate(x, 3) + channel_duplicate(y, 3)) <= 1e-12);
}

TEST_CASE("shuffles carry gradients") {
  auto x = randn({1, 2, 4, 4}, 5, torch::kFloat64).requires_grad_(true);
  auto w = randn({1, 8, 2, 2}, 6, torch::kFloat64);
  (space_to_channel(x, 2) * w).sum().backward();
  CHECK(bitwise_equal(x.grad(), channel_to_space(w, 2)));
}
