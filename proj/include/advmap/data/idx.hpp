#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advmap/core/binary_io.hpp"
#include "advmap/core/error.hpp"
#include "advmap/data/dataset.hpp"

namespace advmap::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline bool is_gzip(std::span<const char> bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

inline std::vector<char> gunzip(std::span<const char> bytes, const std::string& what) {
  z_stream zs{};
  require(inflateInit2(&zs, 16 + MAX_WBITS) == Z_OK, ErrorCode::kFormat, "zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<char> out;
  std::array<char, 1 << 16> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error(rc == Z_BUF_ERROR ? ErrorCode::kTruncated : ErrorCode::kFormat,
                  "corrupt or truncated gzip stream in " + what);
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

inline std::uint32_t be32(std::span<const char> b, std::size_t off) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

inline void put_be32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::vector<char> read_maybe_gz(const std::filesystem::path& path) {
  auto raw = io::read_file(path);
  return is_gzip(raw) ? gunzip(raw, path.string()) : raw;
}

}  // namespace detail

struct IdxImages {
  std::uint32_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> bytes;
};

inline IdxImages parse_idx_images(std::span<const char> b, const std::string& what) {
  require(b.size() >= 16, ErrorCode::kTruncated, what + ": truncated header");
  require(detail::be32(b, 0) == kIdxImageMagic, ErrorCode::kBadMagic, what + ": bad magic");
  IdxImages out{detail::be32(b, 4), detail::be32(b, 8), detail::be32(b, 12), {}};
  const std::size_t expect = std::size_t{out.count} * out.rows * out.cols;
  require(b.size() - 16 >= expect, ErrorCode::kTruncated, what + ": truncated pixel data");
  out.bytes.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(expect));
  return out;
}

inline std::vector<std::uint8_t> parse_idx_labels(std::span<const char> b, const std::string& what) {
  require(b.size() >= 8, ErrorCode::kTruncated, what + ": truncated header");
  require(detail::be32(b, 0) == kIdxLabelMagic, ErrorCode::kBadMagic, what + ": bad magic");
  const std::size_t n = detail::be32(b, 4);
  require(b.size() - 8 >= n, ErrorCode::kTruncated, what + ": truncated label data");
  return std::vector<std::uint8_t>(b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n));
}

/// Loads an IDX image/label pair (plain or gzip) and rescales v -> v / 255.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, Split split = Split::kTest) {
  const auto images = parse_idx_images(detail::read_maybe_gz(images_path), images_path.string());
  const auto labels = parse_idx_labels(detail::read_maybe_gz(labels_path), labels_path.string());
  require(images.count == labels.size(), ErrorCode::kCountMismatch,
          "count mismatch: " + std::to_string(images.count) + " images vs " +
              std::to_string(labels.size()) + " labels");
  Dataset ds{split, std::size_t{images.rows} * images.cols, {}};
  ds.images.reserve(images.count);
  for (std::size_t i = 0; i < images.count; ++i) {
    ImageVec im;
    im.pixels.resize(ds.dim);
    for (std::size_t j = 0; j < ds.dim; ++j)
      im.pixels[j] = static_cast<float>(images.bytes[i * ds.dim + j]) / 255.0f;
    require(labels[i] < 10, ErrorCode::kFormat, "label out of range at index " + std::to_string(i));
    im.label = labels[i];
    im.source = SourceId{split, i};
    ds.images.push_back(std::move(im));
  }
  return ds;
}

inline void write_idx_images(const std::filesystem::path& path, std::uint32_t rows,
                             std::uint32_t cols, std::span<const std::uint8_t> pixels) {
  const std::size_t per = std::size_t{rows} * cols;
  require(per > 0 && pixels.size() % per == 0, ErrorCode::kShapeMismatch, "pixel block size");
  std::vector<char> out;
  detail::put_be32(out, kIdxImageMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(pixels.size() / per));
  detail::put_be32(out, rows);
  detail::put_be32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  io::write_file(path, out);
}

inline void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<char> out;
  detail::put_be32(out, kIdxLabelMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  io::write_file(path, out);
}

struct MnistFiles {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
};

/// Resolves the four standard MNIST file names in `dir`, preferring plain
/// files and falling back to `.gz`.
inline MnistFiles mnist_files(const std::filesystem::path& dir) {
  auto pick = [&](const std::string& stem) {
    const auto plain = dir / stem;
    if (std::filesystem::exists(plain)) return plain;
    const auto gz = dir / (stem + ".gz");
    require(std::filesystem::exists(gz), ErrorCode::kMissingData,
            "missing MNIST file " + plain.string() + "[.gz]");
    return gz;
  };
  return {pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"),
          pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte")};
}

inline Dataset load_mnist(const std::filesystem::path& dir, Split split) {
  const auto f = mnist_files(dir);
  return split == Split::kTrain ? load_idx(f.train_images, f.train_labels, Split::kTrain)
                                : load_idx(f.test_images, f.test_labels, Split::kTest);
}

}  // namespace advmap::data
