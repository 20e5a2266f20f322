#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcae/autoencoder.hpp"
#include "dcae/training.hpp"

namespace dcae {

// ---------------------------------------------------------------------------
// Datasets
//
// Images are yielded as float [3, R, R] tensors in [-1, 1], obtained from
// 8-bit RGB by v / 127.5 - 1.

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int64_t size() const = 0;
  virtual int64_t resolution() const = 0;
  // Number of distinct labels, 0 for unlabeled data.
  virtual int64_t num_classes() const { return 0; }
  virtual torch::Tensor image(int64_t index) const = 0;
  virtual int64_t label(int64_t /*index*/) const { return 0; }

  // Stacks images [N, 3, R, R] for the given indices.
  torch::Tensor images(const std::vector<int64_t>& indices) const;
  // First min(count, size()) images.
  torch::Tensor head(int64_t count) const;
};

struct SyntheticSpec {
  std::string generator = "mixed";  // gradients | checkerboards | gaussian-blobs | mixed
  int64_t count = 1024;
  int64_t cell = 0;  // checkerboard cell size in pixels; 0 draws from {4, 8, 16}
};

// Procedural images; image(i) depends only on (spec, resolution, seed, i).
// "mixed" draws one of the three generators per image and labels it with the
// generator index (3 classes).
class SyntheticDataset final : public Dataset {
 public:
  SyntheticDataset(SyntheticSpec spec, int64_t resolution, uint64_t seed);
  int64_t size() const override { return spec_.count; }
  int64_t resolution() const override { return resolution_; }
  int64_t num_classes() const override { return spec_.generator == "mixed" ? 3 : 0; }
  torch::Tensor image(int64_t index) const override;
  int64_t label(int64_t index) const override;
  // 8-bit [R, R, 3] rendering of image `index`.
  torch::Tensor image_u8(int64_t index) const;

 private:
  SyntheticSpec spec_;
  int64_t resolution_;
  uint64_t seed_;
};

// Decodable images from a folder (sorted by file name), center-cropped to a
// square and resized to `resolution`. Undecodable files are skipped with a
// warning; DataError if the folder is empty or nothing decodes.
class FolderDataset final : public Dataset {
 public:
  FolderDataset(const std::filesystem::path& folder, int64_t resolution);
  int64_t size() const override { return static_cast<int64_t>(images_.size()); }
  int64_t resolution() const override { return resolution_; }
  torch::Tensor image(int64_t index) const override;
  const std::vector<std::filesystem::path>& files() const { return files_; }

 private:
  int64_t resolution_;
  std::vector<torch::Tensor> images_;  // uint8 [R, R, 3]
  std::vector<std::filesystem::path> files_;
};

std::unique_ptr<Dataset> synthetic_dataset(const SyntheticSpec& spec, int64_t resolution,
                                           uint64_t seed);
std::unique_ptr<Dataset> load_folder(const std::filesystem::path& folder, int64_t resolution);

// "synthetic:<generator>[:<count>]" or "folder:<path>".
std::unique_ptr<Dataset> open_dataset(const std::string& spec, int64_t resolution, uint64_t seed);

struct Batch {
  torch::Tensor images;  // [B, 3, R, R]
  torch::Tensor labels;  // [B] int64
};

// Endless batch stream over a dataset; visiting order is a seeded permutation,
// redrawn every epoch. Deterministic given (dataset, batch_size, seed).
class BatchLoader {
 public:
  BatchLoader(const Dataset& data, int64_t batch_size, uint64_t seed);
  Batch next();
  int64_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  const Dataset& data_;
  int64_t batch_size_;
  uint64_t seed_;
  int64_t epoch_ = -1;
  size_t cursor_ = 0;
  std::vector<int64_t> order_;
};

// Writes [N, 3, H, W] images in [-1, 1] as a PNG grid with `columns` tiles per row.
void write_image_grid(const std::filesystem::path& path, const torch::Tensor& images,
                      int64_t columns);

// ---------------------------------------------------------------------------
// Checkpoints
//
// A checkpoint is a directory holding manifest.json (human-readable) and
// tensors.bin (little-endian IEEE-754 tensors, concatenated). The manifest
// indexes every tensor by name with dtype, shape, byte offset, byte length and
// CRC-32. Both files are written to temporaries and renamed into place.

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  torch::Tensor tensor;
};

// Low-level bundle I/O shared by autoencoder and diffusion checkpoints.
// `manifest` receives "format_version", "blob", "blob_bytes" and "tensors".
void write_tensor_bundle(const std::filesystem::path& dir, nlohmann::json manifest,
                         const std::vector<NamedTensor>& tensors);

struct TensorBundle {
  nlohmann::json manifest;
  std::map<std::string, torch::Tensor> tensors;
};

// Throws VersionError, CorruptIndexError, TruncatedBlobError or ChecksumError.
TensorBundle read_tensor_bundle(const std::filesystem::path& dir);

void save_checkpoint(const AutoencoderState& state, const std::filesystem::path& dir);

// Builds the model described by the manifest and restores every parameter.
AutoencoderState load_checkpoint(const std::filesystem::path& dir);

// Restores into an existing state; ConfigError if the stored config differs.
void load_checkpoint_into(AutoencoderState& state, const std::filesystem::path& dir);

}  // namespace dcae
