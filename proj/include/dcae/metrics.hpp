#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>

namespace dcae::metrics {

// PSNR in dB over all elements: 10 * log10(data_range^2 / MSE).
// Returns +infinity (see is_infinite_psnr) when the inputs are identical.
double psnr(const torch::Tensor& x, const torch::Tensor& y, double data_range = 2.0);

inline bool is_infinite_psnr(double value) {
  return value == std::numeric_limits<double>::infinity();
}

struct SsimOptions {
  int64_t window_size = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over all channels and valid window positions (Gaussian window,
// no padding). ShapeError if H or W is smaller than the window.
double ssim(const torch::Tensor& x, const torch::Tensor& y, double data_range = 2.0,
            const SsimOptions& options = {});

// Mean and covariance of a d-dimensional feature distribution.
struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  int64_t dim() const { return mean.size(); }
  // Throws ShapeError on size mismatch, NumericError if the covariance is not
  // symmetric or has an eigenvalue below -1e-8 (relative to its scale).
  void validate() const;
};

// Sample mean and unbiased covariance of [n, d] features (n >= 2).
GaussianStats gaussian_stats(const torch::Tensor& features);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).
// The trace of the square root is computed as sum_i sqrt(lambda_i) over the
// eigenvalues of sqrt(S_a) S_b sqrt(S_a); eigenvalues in [-1e-6 * scale, 0)
// are clamped to zero and more negative ones raise NumericError.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Maps images [N, 3, H, W] in [-1, 1] to features [N, d].
class FeatureEmbedder {
 public:
  virtual ~FeatureEmbedder() = default;
  virtual int64_t dim() const = 0;
  virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
};

// Frozen random conv net with 64-d output: three stride-2 3x3 convs with SiLU
// (16, 32, 32 channels), then the spatial mean and standard deviation of each
// final channel. The std half carries texture and contrast that mean pooling
// alone averages away. Scores are only comparable with each other, not with
// Inception-based FID values.
class RandomConvEmbedder final : public FeatureEmbedder {
 public:
  explicit RandomConvEmbedder(uint64_t seed = 0, int64_t in_channels = 3);
  int64_t dim() const override { return 64; }
  torch::Tensor embed(const torch::Tensor& images) const override;

 private:
  std::shared_ptr<torch::nn::SequentialImpl> net_;
};

// Fréchet distance between embedder feature statistics of the two image sets.
// DataError if either set has fewer than two images.
double embed_and_score(const torch::Tensor& real_images, const torch::Tensor& fake_images,
                       const FeatureEmbedder& embedder, int64_t batch_size = 64);

// Perceptual-similarity slot (e.g. LPIPS). No implementation is bundled; users
// supply a model backed by pretrained weights.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double distance(const torch::Tensor& x, const torch::Tensor& y) const = 0;
};

}  // namespace dcae::metrics
