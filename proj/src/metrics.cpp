#include "dcae/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dcae/error.hpp"
#include "dcae/nn_util.hpp"

namespace F = torch::nn::functional;

namespace dcae::metrics {
namespace {

void require_same_shape(const torch::Tensor& x, const torch::Tensor& y, const char* op) {
  if (!x.sizes().equals(y.sizes())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + c10::str(x.sizes()) + " vs " +
                     c10::str(y.sizes()));
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double psnr(const torch::Tensor& x, const torch::Tensor& y, double data_range) {
  require_same_shape(x, y, "psnr");
  if (!(data_range > 0.0)) throw ShapeError("psnr: data_range must be positive");
  const double mse = (x.to(torch::kFloat64) - y.to(torch::kFloat64)).pow(2).mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const torch::Tensor& x, const torch::Tensor& y, double data_range,
            const SsimOptions& options) {
  require_same_shape(x, y, "ssim");
  if (x.dim() != 4) throw ShapeError("ssim: expected [N, C, H, W] inputs");
  const auto ws = options.window_size;
  if (x.size(2) < ws || x.size(3) < ws) {
    throw ShapeError("ssim: image " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                     " is smaller than the " + std::to_string(ws) + "x" + std::to_string(ws) +
                     " window");
  }
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto a = x.to(torch::kFloat64).reshape({n * c, 1, h, w});
  auto b = y.to(torch::kFloat64).reshape({n * c, 1, h, w});

  auto g = torch::arange(ws, torch::kFloat64) - static_cast<double>(ws / 2);
  g = torch::exp(-g.pow(2) / (2.0 * options.sigma * options.sigma));
  g = g / g.sum();
  auto window = torch::outer(g, g).view({1, 1, ws, ws});
  auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, window); };

  const double c1 = std::pow(options.k1 * data_range, 2);
  const double c2 = std::pow(options.k2 * data_range, 2);
  auto mu_a = filt(a), mu_b = filt(b);
  auto mu_aa = mu_a * mu_a, mu_bb = mu_b * mu_b, mu_ab = mu_a * mu_b;
  auto var_a = filt(a * a) - mu_aa;
  auto var_b = filt(b * b) - mu_bb;
  auto cov = filt(a * b) - mu_ab;
  auto map = ((2.0 * mu_ab + c1) * (2.0 * cov + c2)) / ((mu_aa + mu_bb + c1) * (var_a + var_b + c2));
  return map.mean().item<double>();
}

void GaussianStats::validate() const {
  const auto d = mean.size();
  if (covariance.rows() != d || covariance.cols() != d) {
    throw ShapeError("GaussianStats: covariance must be " + std::to_string(d) + "x" +
                     std::to_string(d));
  }
  if (d == 0) return;
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw NumericError("GaussianStats: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw NumericError("GaussianStats: covariance is not positive semi-definite (min eigenvalue " +
                       std::to_string(eig.eigenvalues().minCoeff()) + ")");
  }
}

GaussianStats gaussian_stats(const torch::Tensor& features) {
  if (features.dim() != 2) throw ShapeError("gaussian_stats: expected [n, d] features");
  const auto n = features.size(0), d = features.size(1);
  if (n < 2) throw ShapeError("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  auto f = features.to(torch::kFloat64).contiguous();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
      f.data_ptr<double>(), n, d);
  GaussianStats stats;
  stats.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd centered = m.rowwise() - stats.mean.transpose();
  stats.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  stats.covariance = 0.5 * (stats.covariance + stats.covariance.transpose());
  return stats;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("frechet_distance: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
  a.validate();
  b.validate();

  const Eigen::MatrixXd root_a = psd_sqrt(a.covariance);
  Eigen::MatrixXd m = root_a * b.covariance * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const auto& lambda = eig.eigenvalues();
  const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -1e-6 * scale) {
      throw NumericError("frechet_distance: product covariance has eigenvalue " +
                         std::to_string(lambda[i]));
    }
    trace_root += std::sqrt(std::max(lambda[i], 0.0));
  }
  const double dist = (a.mean - b.mean).squaredNorm() + a.covariance.trace() +
                      b.covariance.trace() - 2.0 * trace_root;
  return std::max(dist, 0.0);
}

RandomConvEmbedder::RandomConvEmbedder(uint64_t seed, int64_t in_channels) {
  net_ = std::make_shared<torch::nn::SequentialImpl>(
      make_conv(in_channels, 16, 3, 2, 1), torch::nn::SiLU(), make_conv(16, 32, 3, 2, 1),
      torch::nn::SiLU(), make_conv(32, 32, 3, 2, 1), torch::nn::SiLU());
  seeded_init(*net_, seed);
  for (auto& p : net_->parameters()) p.requires_grad_(false);
}

torch::Tensor RandomConvEmbedder::embed(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  auto h = net_->forward(images.to(torch::kFloat32)).flatten(2);
  return torch::cat({h.mean(2), h.std(2)}, 1);
}

double embed_and_score(const torch::Tensor& real_images, const torch::Tensor& fake_images,
                       const FeatureEmbedder& embedder, int64_t batch_size) {
  if (real_images.size(0) < 2 || fake_images.size(0) < 2) {
    throw DataError("embed_and_score: need at least 2 images per set");
  }
  auto features = [&](const torch::Tensor& images) {
    std::vector<torch::Tensor> chunks;
    for (int64_t i = 0; i < images.size(0); i += batch_size) {
      chunks.push_back(embedder.embed(images.narrow(0, i, std::min(batch_size, images.size(0) - i))));
    }
    return torch::cat(chunks, 0);
  };
  return frechet_distance(gaussian_stats(features(real_images)),
                          gaussian_stats(features(fake_images)));
}

}  // namespace dcae::metrics
