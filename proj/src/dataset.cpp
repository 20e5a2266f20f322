#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dcae/data_io.hpp"
#include "dcae/error.hpp"

namespace dcae {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t seed, uint64_t index) { return splitmix64(splitmix64(seed) ^ index); }

// std::uniform_*_distribution output differs between standard libraries, so
// draws are taken from raw engine bits.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                           std::numeric_limits<uint64_t>::max() % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }
  std::array<double, 3> color() { return {uniform(0, 255), uniform(0, 255), uniform(0, 255)}; }

 private:
  std::mt19937_64 engine_;
};

constexpr std::array<const char*, 3> kGenerators = {"gradients", "checkerboards", "gaussian-blobs"};

uint8_t quantize(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

void render_gradient(Rng& rng, int64_t r, uint8_t* out) {
  const auto c0 = rng.color(), c1 = rng.color();
  const double angle = rng.uniform(0, 2 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double half = 0.5 * static_cast<double>(r - 1);
  const double extent = std::max(1.0, half * (std::abs(ca) + std::abs(sa)));
  for (int64_t y = 0; y < r; ++y) {
    for (int64_t x = 0; x < r; ++x) {
      const double t = 0.5 + 0.5 * ((x - half) * ca + (y - half) * sa) / extent;
      for (int k = 0; k < 3; ++k) *out++ = quantize(c0[k] + (c1[k] - c0[k]) * t);
    }
  }
}

void render_checkerboard(Rng& rng, int64_t r, int64_t fixed_cell, uint8_t* out) {
  static constexpr std::array<int64_t, 3> kCells = {4, 8, 16};
  const int64_t cell = fixed_cell > 0 ? fixed_cell : kCells[rng.below(kCells.size())];
  std::array<uint8_t, 3> a{}, b{};
  do {
    const auto ca = rng.color(), cb = rng.color();
    for (int k = 0; k < 3; ++k) {
      a[k] = quantize(ca[k]);
      b[k] = quantize(cb[k]);
    }
  } while (a == b);
  const auto ox = static_cast<int64_t>(rng.below(static_cast<uint64_t>(cell)));
  const auto oy = static_cast<int64_t>(rng.below(static_cast<uint64_t>(cell)));
  for (int64_t y = 0; y < r; ++y) {
    for (int64_t x = 0; x < r; ++x) {
      const auto& c = (((x + ox) / cell + (y + oy) / cell) % 2 == 0) ? a : b;
      for (int k = 0; k < 3; ++k) *out++ = c[k];
    }
  }
}

void render_blobs(Rng& rng, int64_t r, uint8_t* out) {
  const auto bg = rng.color();
  const int blobs = 2 + static_cast<int>(rng.below(4));
  struct Blob {
    double cx, cy, sigma;
    std::array<double, 3> color;
  };
  std::vector<Blob> list;
  const double rd = static_cast<double>(r);
  for (int i = 0; i < blobs; ++i) {
    list.push_back({rng.uniform(0, rd), rng.uniform(0, rd), rng.uniform(0.05, 0.2) * rd, rng.color()});
  }
  for (int64_t y = 0; y < r; ++y) {
    for (int64_t x = 0; x < r; ++x) {
      std::array<double, 3> px = bg;
      for (const auto& b : list) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        const double a = std::exp(-d2 / (2 * b.sigma * b.sigma));
        for (int k = 0; k < 3; ++k) px[k] = px[k] * (1 - a) + b.color[k] * a;
      }
      for (int k = 0; k < 3; ++k) *out++ = quantize(px[k]);
    }
  }
}

torch::Tensor to_unit_range(const torch::Tensor& u8_hwc) {
  return u8_hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

}  // namespace

// ---------------------------------------------------------------------------

torch::Tensor Dataset::images(const std::vector<int64_t>& indices) const {
  if (indices.empty()) throw DataError("Dataset::images: no indices");
  std::vector<torch::Tensor> list;
  list.reserve(indices.size());
  for (auto i : indices) {
    if (i < 0 || i >= size()) {
      throw DataError("Dataset::images: index " + std::to_string(i) + " out of range [0, " +
                      std::to_string(size()) + ")");
    }
    list.push_back(image(i));
  }
  return torch::stack(list);
}

torch::Tensor Dataset::head(int64_t count) const {
  std::vector<int64_t> idx(static_cast<size_t>(std::min(count, size())));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  return images(idx);
}

SyntheticDataset::SyntheticDataset(SyntheticSpec spec, int64_t resolution, uint64_t seed)
    : spec_(std::move(spec)), resolution_(resolution), seed_(seed) {
  const bool known = spec_.generator == "mixed" ||
                     std::find_if(kGenerators.begin(), kGenerators.end(), [&](const char* g) {
                       return spec_.generator == g;
                     }) != kGenerators.end();
  if (!known) {
    throw DataError("unknown synthetic generator '" + spec_.generator +
                      "' (expected gradients, checkerboards, gaussian-blobs or mixed)");
  }
  if (spec_.count < 1) throw ConfigError("synthetic dataset count must be positive");
  if (resolution_ < 1) throw ConfigError("resolution must be positive");
  if (spec_.cell < 0) throw ConfigError("checkerboard cell size must be >= 0");
}

int64_t SyntheticDataset::label(int64_t index) const {
  if (spec_.generator != "mixed") return 0;
  Rng rng(mix_seed(seed_, static_cast<uint64_t>(index)));
  return static_cast<int64_t>(rng.below(kGenerators.size()));
}

torch::Tensor SyntheticDataset::image_u8(int64_t index) const {
  if (index < 0 || index >= size()) {
    throw DataError("synthetic image index " + std::to_string(index) + " out of range");
  }
  Rng rng(mix_seed(seed_, static_cast<uint64_t>(index)));
  std::string generator = spec_.generator;
  if (generator == "mixed") generator = kGenerators[rng.below(kGenerators.size())];

  auto out = torch::empty({resolution_, resolution_, 3}, torch::kUInt8);
  auto* data = out.data_ptr<uint8_t>();
  if (generator == "gradients") {
    render_gradient(rng, resolution_, data);
  } else if (generator == "checkerboards") {
    render_checkerboard(rng, resolution_, spec_.cell, data);
  } else {
    render_blobs(rng, resolution_, data);
  }
  return out;
}

torch::Tensor SyntheticDataset::image(int64_t index) const { return to_unit_range(image_u8(index)); }

// ---------------------------------------------------------------------------

FolderDataset::FolderDataset(const std::filesystem::path& folder, int64_t resolution)
    : resolution_(resolution) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(folder)) throw DataError("image folder " + folder.string() + " does not exist");
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(folder)) {
    if (entry.is_regular_file()) candidates.push_back(entry.path());
  }
  std::sort(candidates.begin(), candidates.end());
  if (candidates.empty()) throw DataError("image folder " + folder.string() + " is empty");

  for (const auto& path : candidates) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
      std::cerr << "warning: skipping undecodable file " << path.string() << "\n";
      continue;
    }
    const int side = std::min(img.rows, img.cols);
    cv::Mat square = img(cv::Rect((img.cols - side) / 2, (img.rows - side) / 2, side, side));
    cv::Mat resized;
    const int target = static_cast<int>(resolution_);
    cv::resize(square, resized, cv::Size(target, target), 0, 0,
               side >= target ? cv::INTER_AREA : cv::INTER_CUBIC);
    cv::Mat rgb;
    cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
    images_.push_back(torch::from_blob(rgb.data, {resolution_, resolution_, 3}, torch::kUInt8).clone());
    files_.push_back(path);
  }
  if (images_.empty()) throw DataError("no decodable images in " + folder.string());
}

torch::Tensor FolderDataset::image(int64_t index) const {
  if (index < 0 || index >= size()) throw DataError("image index " + std::to_string(index) + " out of range");
  return to_unit_range(images_[static_cast<size_t>(index)]);
}

std::unique_ptr<Dataset> synthetic_dataset(const SyntheticSpec& spec, int64_t resolution,
                                           uint64_t seed) {
  return std::make_unique<SyntheticDataset>(spec, resolution, seed);
}

std::unique_ptr<Dataset> load_folder(const std::filesystem::path& folder, int64_t resolution) {
  return std::make_unique<FolderDataset>(folder, resolution);
}

std::unique_ptr<Dataset> open_dataset(const std::string& spec, int64_t resolution, uint64_t seed) {
  if (spec.rfind("folder:", 0) == 0) return load_folder(spec.substr(7), resolution);
  if (spec.rfind("synthetic:", 0) == 0) {
    SyntheticSpec s;
    auto rest = spec.substr(10);
    const auto colon = rest.find(':');
    s.generator = rest.substr(0, colon);
    if (colon != std::string::npos) {
      const auto count = rest.substr(colon + 1);
      try {
        size_t used = 0;
        s.count = std::stoll(count, &used);
        if (used != count.size()) throw std::invalid_argument(count);
      } catch (const std::exception&) {
        throw ConfigError("dataset '" + spec + "': count '" + count + "' is not an integer");
      }
    }
    return synthetic_dataset(s, resolution, seed);
  }
  throw ConfigError("dataset '" + spec + "': expected synthetic:<generator>[:<count>] or folder:<path>");
}

// ---------------------------------------------------------------------------

BatchLoader::BatchLoader(const Dataset& data, int64_t batch_size, uint64_t seed)
    : data_(data), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) throw ConfigError("batch size must be positive");
  if (data_.size() < 1) throw DataError("cannot batch an empty dataset");
  reshuffle();
}

void BatchLoader::reshuffle() {
  ++epoch_;
  cursor_ = 0;
  order_.resize(static_cast<size_t>(data_.size()));
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int64_t>(i);
  Rng rng(mix_seed(seed_, static_cast<uint64_t>(epoch_)));
  for (size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
}

Batch BatchLoader::next() {
  std::vector<int64_t> idx;
  std::vector<int64_t> labels;
  for (int64_t b = 0; b < batch_size_; ++b) {
    if (cursor_ == order_.size()) reshuffle();
    idx.push_back(order_[cursor_++]);
    labels.push_back(data_.label(idx.back()));
  }
  return {data_.images(idx), torch::tensor(labels, torch::kInt64)};
}

// ---------------------------------------------------------------------------

void write_image_grid(const std::filesystem::path& path, const torch::Tensor& images,
                      int64_t columns) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("write_image_grid: expected [N, 3, H, W]");
  if (columns < 1) throw ConfigError("write_image_grid: columns must be positive");
  const auto n = images.size(0), h = images.size(2), w = images.size(3);
  const auto cols = std::min(columns, n);
  const auto rows = (n + cols - 1) / cols;
  auto u8 = images.detach().to(torch::kFloat32).clamp(-1, 1).add(1).mul(127.5).round().to(torch::kUInt8);
  auto grid = torch::zeros({rows * h, cols * w, 3}, torch::kUInt8);
  for (int64_t i = 0; i < n; ++i) {
    const auto r = i / cols, c = i % cols;
    grid.narrow(0, r * h, h).narrow(1, c * w, w).copy_(u8[i].permute({1, 2, 0}));
  }
  grid = grid.contiguous();
  cv::Mat rgb(static_cast<int>(rows * h), static_cast<int>(cols * w), CV_8UC3, grid.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw DataError("could not write image " + path.string());
}

}  // namespace dcae
