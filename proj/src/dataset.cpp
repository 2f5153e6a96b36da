#include "dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "numerics.hpp"

namespace lipvae {
namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw io_error("unexpected end of file reading header of " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t expected,
                                        const std::string& path) {
  std::vector<unsigned char> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw format_error(path + " is truncated: expected " +
                       std::to_string(expected) + " payload bytes, found " +
                       std::to_string(got));
  }
  return buf;
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream in(images_path, std::ios::binary);
  if (!in) throw io_error("cannot open " + images_path);

  const std::uint32_t magic = read_be_u32(in, images_path);
  if (magic != 2051u) {
    throw format_error(images_path + ": bad image magic " +
                       std::to_string(magic) + ", expected 2051");
  }
  const std::uint32_t n = read_be_u32(in, images_path);
  const std::uint32_t rows = read_be_u32(in, images_path);
  const std::uint32_t cols = read_be_u32(in, images_path);
  if (rows == 0 || cols == 0) {
    throw format_error(images_path + ": zero image dimensions");
  }
  const std::size_t expected =
      std::size_t(n) * std::size_t(rows) * std::size_t(cols);
  const auto pixels = read_payload(in, expected, images_path);

  Dataset ds;
  ds.images.resize(static_cast<Index>(n),
                   static_cast<Index>(rows) * static_cast<Index>(cols));
  for (Index i = 0; i < ds.images.rows(); ++i) {
    for (Index j = 0; j < ds.images.cols(); ++j) {
      ds.images(i, j) =
          pixels[std::size_t(i) * std::size_t(ds.images.cols()) +
                 std::size_t(j)] /
          255.0;
    }
  }
  ds.side = (rows == cols) ? static_cast<Index>(rows) : 0;

  if (!labels_path.empty()) {
    std::ifstream lin(labels_path, std::ios::binary);
    if (!lin) throw io_error("cannot open " + labels_path);
    const std::uint32_t lmagic = read_be_u32(lin, labels_path);
    if (lmagic != 2049u) {
      throw format_error(labels_path + ": bad label magic " +
                         std::to_string(lmagic) + ", expected 2049");
    }
    const std::uint32_t ln = read_be_u32(lin, labels_path);
    if (ln != n) {
      throw format_error(labels_path + ": has " + std::to_string(ln) +
                         " labels for " + std::to_string(n) + " images");
    }
    const auto bytes = read_payload(lin, ln, labels_path);
    ds.labels.assign(bytes.begin(), bytes.end());
  }
  return ds;
}

Dataset downsample(const Dataset& ds, Index factor) {
  require(factor >= 1, "downsample factor must be >= 1");
  require(ds.side > 0, "downsample needs square images with a known side");
  require(ds.side % factor == 0,
          "downsample factor must divide the image side");
  if (factor == 1) return ds;

  const Index side = ds.side / factor;
  Dataset out;
  out.side = side;
  out.labels = ds.labels;
  out.images.resize(ds.count(), side * side);
  const double inv = 1.0 / double(factor * factor);
  for (Index i = 0; i < ds.count(); ++i) {
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        double acc = 0.0;
        for (Index dr = 0; dr < factor; ++dr) {
          for (Index dc = 0; dc < factor; ++dc) {
            acc += ds.images(i, (r * factor + dr) * ds.side + c * factor + dc);
          }
        }
        out.images(i, r * side + c) = acc * inv;
      }
    }
  }
  return out;
}

Dataset synthetic_blobs(Index n, Index d, std::uint64_t seed, int components) {
  require(n >= 1, "synthetic_blobs needs at least one sample");
  require(components >= 1, "synthetic_blobs needs at least one component");
  const auto side = static_cast<Index>(std::llround(std::sqrt(double(d))));
  require(side * side == d, "synthetic_blobs dimension must be a square");

  SeededRng rng(seed);
  // Component geometry is drawn once so every sample of a component shares
  // its bump; only amplitude and pixel noise vary per sample.
  std::vector<double> cx(static_cast<std::size_t>(components));
  std::vector<double> cy(cx.size());
  std::vector<double> width(cx.size());
  for (std::size_t k = 0; k < cx.size(); ++k) {
    cx[k] = (0.2 + 0.6 * rng.uniform01()) * double(side - 1);
    cy[k] = (0.2 + 0.6 * rng.uniform01()) * double(side - 1);
    width[k] = (0.08 + 0.10 * rng.uniform01()) * double(side);
  }

  Dataset ds;
  ds.side = side;
  ds.images.resize(n, d);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int k = components == 1
                      ? 0
                      : int(rng.next_u64() % std::uint64_t(components));
    ds.labels[static_cast<std::size_t>(i)] = k;
    const double amp = 0.6 + 0.4 * rng.uniform01();
    const double inv2w2 = 1.0 / (2.0 * width[size_t(k)] * width[size_t(k)]);
    for (Index r = 0; r < side; ++r) {
      for (Index c = 0; c < side; ++c) {
        const double dx = double(c) - cx[size_t(k)];
        const double dy = double(r) - cy[size_t(k)];
        double v = amp * std::exp(-(dx * dx + dy * dy) * inv2w2) +
                   0.02 * rng.normal();
        ds.images(i, r * side + c) = std::min(1.0, std::max(0.0, v));
      }
    }
  }
  return ds;
}

}  // namespace lipvae
