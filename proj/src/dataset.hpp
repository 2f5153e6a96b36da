#pragma once

#include "common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lipvae {

struct Dataset {
  Mat images;               // n x d, values in [0, 1]
  std::vector<int> labels;  // empty when unlabeled
  Index side = 0;           // image side length (images are square)

  Index count() const { return images.rows(); }
  Index dim() const { return images.cols(); }
};

// IDX files as distributed for MNIST: big-endian headers, magic 2051 for
// images and 2049 for labels, one byte per pixel/label.  Pixels are scaled
// to [0, 1].  Pass an empty labels path to skip labels.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path = "");

// Block-mean downsampling by an integer factor dividing the side length.
Dataset downsample(const Dataset& ds, Index factor);

// Synthetic corpus: axis-aligned Gaussian bumps with per-sample amplitude
// jitter and pixel noise, clipped to [0, 1].  Labels hold the component
// index.  d must be a perfect square.
Dataset synthetic_blobs(Index n, Index d, std::uint64_t seed,
                        int components = 3);

}  // namespace lipvae
