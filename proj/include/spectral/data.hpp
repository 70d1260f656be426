#pragma once

// Dataset container, file loaders (IDX, binary PGM/PPM), the central-pixel
// patch generator, the synthetic sinusoid dataset, splitting and
// per-channel standardization.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/errors.hpp"
#include "spectral/rng.hpp"
#include "spectral/tensor.hpp"

namespace spectral {

/// Samples of a common C x H x W shape stored contiguously.
class Dataset {
public:
  Dataset() = default;
  Dataset(Tensor::Shape sample_shape, std::size_t num_classes)
      : shape_(std::move(sample_shape)), num_classes_(num_classes) {
    if (shape_.size() != 3)
      throw std::invalid_argument("Dataset: sample shape must be C x H x W");
  }

  void add(std::span<const double> pixels, std::size_t label) {
    if (pixels.size() != sample_size())
      throw std::invalid_argument("Dataset::add: sample has " + std::to_string(pixels.size()) +
                                  " values, expected " + std::to_string(sample_size()));
    if (label >= num_classes_)
      throw std::invalid_argument("Dataset::add: label " + std::to_string(label) +
                                  " out of range for " + std::to_string(num_classes_) + " classes");
    pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
    labels_.push_back(label);
  }

  [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
  [[nodiscard]] bool empty() const noexcept { return labels_.empty(); }
  [[nodiscard]] const Tensor::Shape &sample_shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t sample_size() const { return Tensor::element_count(shape_); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return num_classes_; }
  [[nodiscard]] std::size_t label(std::size_t i) const { return labels_.at(i); }
  [[nodiscard]] const std::vector<std::size_t> &labels() const noexcept { return labels_; }

  [[nodiscard]] std::span<const double> pixels(std::size_t i) const {
    return std::span<const double>(pixels_).subspan(i * sample_size(), sample_size());
  }
  [[nodiscard]] std::span<double> mutable_pixels(std::size_t i) {
    return std::span<double>(pixels_).subspan(i * sample_size(), sample_size());
  }

  [[nodiscard]] Tensor sample(std::size_t i) const {
    auto p = pixels(i);
    return Tensor(shape_, std::vector<double>(p.begin(), p.end()));
  }

  /// Gather samples into a B x C x H x W batch.
  [[nodiscard]] Tensor batch(std::span<const std::size_t> indices) const {
    Tensor::Shape s{indices.size(), shape_[0], shape_[1], shape_[2]};
    std::vector<double> data;
    data.reserve(indices.size() * sample_size());
    for (std::size_t i : indices) {
      auto p = pixels(i);
      data.insert(data.end(), p.begin(), p.end());
    }
    return Tensor(std::move(s), std::move(data));
  }

  [[nodiscard]] Dataset subset(std::span<const std::size_t> indices) const {
    Dataset d(shape_, num_classes_);
    d.mean = mean;
    d.stddev = stddev;
    for (std::size_t i : indices)
      d.add(pixels(i), labels_.at(i));
    return d;
  }

  /// Per-channel normalization statistics (empty until computed).
  std::vector<double> mean;
  std::vector<double> stddev;

private:
  Tensor::Shape shape_;
  std::size_t num_classes_ = 0;
  std::vector<double> pixels_;
  std::vector<std::size_t> labels_;
};

// ---------------------------------------------------------------------------
// IDX

namespace detail {

inline std::vector<unsigned char> read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t read_be32(const std::vector<unsigned char> &b, std::size_t off,
                               const std::string &what) {
  if (off + 4 > b.size())
    throw ParseError(what + ": truncated header", b.size());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

} // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parse IDX image/label buffers; pixels are scaled to [0, 1], shape 1 x H x W.
/// num_classes is max(label) + 1 (0 for an empty file).
[[nodiscard]] inline Dataset parse_idx(const std::vector<unsigned char> &images,
                                       const std::vector<unsigned char> &labels) {
  const std::uint32_t im_magic = detail::read_be32(images, 0, "idx images");
  if (im_magic != kIdxImagesMagic)
    throw ParseError("idx images: bad magic number", 0);
  const std::uint32_t lb_magic = detail::read_be32(labels, 0, "idx labels");
  if (lb_magic != kIdxLabelsMagic)
    throw ParseError("idx labels: bad magic number", 0);
  const std::size_t n_images = detail::read_be32(images, 4, "idx images");
  const std::size_t rows = detail::read_be32(images, 8, "idx images");
  const std::size_t cols = detail::read_be32(images, 12, "idx images");
  const std::size_t n_labels = detail::read_be32(labels, 4, "idx labels");
  if (n_images != n_labels)
    throw ParseError("idx: image count " + std::to_string(n_images) + " differs from label count " +
                         std::to_string(n_labels),
                     4);
  constexpr std::size_t im_header = 16;
  constexpr std::size_t lb_header = 8;
  const std::size_t plane = rows * cols;
  if (images.size() < im_header + n_images * plane)
    throw ParseError("idx images: truncated pixel data", images.size());
  if (labels.size() < lb_header + n_labels)
    throw ParseError("idx labels: truncated label data", labels.size());

  std::size_t classes = 0;
  for (std::size_t i = 0; i < n_labels; ++i)
    classes = std::max<std::size_t>(classes, labels[lb_header + i] + 1u);
  Dataset d({1, rows == 0 ? 1 : rows, cols == 0 ? 1 : cols}, classes);
  if (n_images > 0 && plane == 0)
    throw ParseError("idx images: zero-sized images", 8);
  std::vector<double> px(plane);
  for (std::size_t i = 0; i < n_images; ++i) {
    const std::size_t off = im_header + i * plane;
    for (std::size_t p = 0; p < plane; ++p)
      px[p] = images[off + p] / 255.0;
    d.add(px, labels[lb_header + i]);
  }
  return d;
}

[[nodiscard]] inline Dataset load_idx(const std::string &images_path,
                                      const std::string &labels_path) {
  return parse_idx(detail::read_file(images_path), detail::read_file(labels_path));
}

// ---------------------------------------------------------------------------
// PNM

namespace detail {

struct PnmHeader {
  int channels = 1;
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::vector<unsigned char> &b) {
  if (b.size() < 2 || b[0] != 'P')
    throw ParseError("pnm: missing magic", 0);
  PnmHeader h;
  if (b[1] == '5')
    h.channels = 1;
  else if (b[1] == '6')
    h.channels = 3;
  else
    throw ParseError(std::string("pnm: unsupported format P") + static_cast<char>(b[1]) +
                         " (only binary P5/P6)",
                     1);
  std::size_t pos = 2;
  auto next_number = [&]() -> std::size_t {
    for (;;) {
      while (pos < b.size() && std::isspace(b[pos]))
        ++pos;
      if (pos < b.size() && b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n')
          ++pos;
        continue;
      }
      break;
    }
    if (pos >= b.size() || !std::isdigit(b[pos]))
      throw ParseError("pnm: malformed header", pos);
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos]))
      v = v * 10 + (b[pos++] - '0');
    return v;
  };
  h.width = next_number();
  h.height = next_number();
  const std::size_t maxval_pos = pos;
  const std::size_t maxval = next_number();
  if (maxval != 255)
    throw ParseError("pnm: unsupported maxval " + std::to_string(maxval) + " (only 255)",
                     maxval_pos);
  if (pos >= b.size() || !std::isspace(b[pos]))
    throw ParseError("pnm: missing separator before pixel data", pos);
  h.data_offset = pos + 1;
  if (h.width == 0 || h.height == 0)
    throw ParseError("pnm: zero image size", 2);
  if (b.size() < h.data_offset + h.width * h.height * static_cast<std::size_t>(h.channels))
    throw ParseError("pnm: truncated pixel data", b.size());
  return h;
}

} // namespace detail

/// Binary PGM (P5) or PPM (P6), maxval 255, as a C x H x W tensor in [0, 1].
[[nodiscard]] inline Tensor parse_pnm(const std::vector<unsigned char> &bytes) {
  const auto h = detail::parse_pnm_header(bytes);
  const auto ch = static_cast<std::size_t>(h.channels);
  Tensor t({ch, h.height, h.width});
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x)
      for (std::size_t c = 0; c < ch; ++c)
        t[(c * h.height + y) * h.width + x] =
            bytes[h.data_offset + (y * h.width + x) * ch + c] / 255.0;
  return t;
}

[[nodiscard]] inline Tensor load_pnm(const std::string &path) {
  return parse_pnm(detail::read_file(path));
}

/// Per-pixel class indices read from the gray values of a P5 file.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::size_t> labels;

  [[nodiscard]] std::size_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  [[nodiscard]] std::size_t num_classes() const {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  }
};

[[nodiscard]] inline LabelMap parse_label_map(const std::vector<unsigned char> &bytes) {
  const auto h = detail::parse_pnm_header(bytes);
  if (h.channels != 1)
    throw ParseError("label map must be a P5 (single channel) file", 1);
  LabelMap m{h.height, h.width, {}};
  m.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset + h.width * h.height));
  return m;
}

[[nodiscard]] inline LabelMap load_label_map(const std::string &path) {
  return parse_label_map(detail::read_file(path));
}

/// Write an 8-bit image (1 or 3 channels, values in [0, 255]) as P5/P6.
inline void write_pnm(const std::string &path, std::size_t height, std::size_t width, int channels,
                      const std::vector<unsigned char> &interleaved) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + path + " for writing");
  out << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char *>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size()));
  if (!out)
    throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Generators

struct PatchRecord {
  std::size_t index;
  std::size_t x; ///< patch center column
  std::size_t y; ///< patch center row
  std::size_t label;
};

struct PatchDataset {
  Dataset data;
  std::vector<PatchRecord> manifest;

  [[nodiscard]] std::string manifest_csv() const {
    std::ostringstream os;
    os << "index,x,y,label\n";
    for (const auto &r : manifest)
      os << r.index << ',' << r.x << ',' << r.y << ',' << r.label << '\n';
    return os.str();
  }
};

/// n square patches at seeded uniform centers, each labeled by its center pixel.
[[nodiscard]] inline PatchDataset make_patch_dataset(const Tensor &image, const LabelMap &label_map,
                                                     std::size_t patch, std::size_t n,
                                                     std::uint64_t seed) {
  if (patch % 2 == 0)
    throw std::invalid_argument("make_patch_dataset: patch size must be odd, got " +
                                std::to_string(patch));
  if (n == 0)
    throw std::invalid_argument("make_patch_dataset: n must be at least 1");
  if (image.rank() != 3)
    throw std::invalid_argument("make_patch_dataset: image must be C x H x W");
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (label_map.height != h || label_map.width != w)
    throw std::invalid_argument("make_patch_dataset: label map size differs from image size");
  if (patch > h || patch > w)
    throw std::invalid_argument("make_patch_dataset: patch larger than image");
  const std::size_t half = patch / 2;
  PatchDataset out{Dataset({ch, patch, patch}, label_map.num_classes()), {}};
  CounterRng rng(seed);
  std::vector<double> px(ch * patch * patch);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cy = half + static_cast<std::size_t>(rng.below(h - 2 * half));
    const std::size_t cx = half + static_cast<std::size_t>(rng.below(w - 2 * half));
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < patch; ++y)
        for (std::size_t x = 0; x < patch; ++x)
          px[(c * patch + y) * patch + x] = image[(c * h + cy - half + y) * w + cx - half + x];
    const std::size_t label = label_map.at(cy, cx);
    out.data.add(px, label);
    out.manifest.push_back({i, cx, cy, label});
  }
  return out;
}

struct SpectralDatasetOptions {
  bool random_phase = true;
};

/// Diagonal sinusoids: sample of class k is sin(2 pi (k+1) (x+y) / size + phase)
/// plus N(0, noise_sigma^2) pixel noise. Labels cycle 0, 1, ..., classes-1.
[[nodiscard]] inline Dataset make_spectral_dataset(std::size_t n, std::size_t classes,
                                                   std::size_t size, double noise_sigma,
                                                   std::uint64_t seed,
                                                   SpectralDatasetOptions opts = {}) {
  if (size == 0 || size % 2 != 0)
    throw std::invalid_argument("make_spectral_dataset: size must be positive and even");
  if (classes == 0 || classes > size / 2)
    throw std::invalid_argument("make_spectral_dataset: classes must lie in [1, size/2], got " +
                                std::to_string(classes));
  if (noise_sigma < 0.0)
    throw std::invalid_argument("make_spectral_dataset: noise_sigma must be non-negative");
  Dataset d({1, size, size}, classes);
  std::vector<double> px(size * size);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(derive_key(seed, i));
    const std::size_t label = i % classes;
    const double freq = static_cast<double>(label + 1);
    const double phase = opts.random_phase ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double t = static_cast<double>(x + y) / static_cast<double>(size);
        double v = std::sin(2.0 * std::numbers::pi * freq * t + phase);
        if (noise_sigma > 0.0)
          v += noise_sigma * rng.normal();
        px[y * size + x] = v;
      }
    d.add(px, label);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Splits and normalization

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

/// Seeded shuffle then partition; train receives round(n * train), val round(n * val).
[[nodiscard]] inline Splits split(const Dataset &d, const SplitSpec &spec) {
  if (d.empty())
    throw std::invalid_argument("split: dataset is empty");
  if (!(spec.train > 0.0 && spec.val > 0.0 && spec.test > 0.0) ||
      std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must be positive and sum to 1");
  const std::size_t n = d.size();
  const auto perm = keyed_permutation(n, derive_key(spec.seed, 0x5911));
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.val)));
  Splits s;
  s.train_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  std::vector<bool> seen(d.num_classes(), false);
  for (std::size_t i : s.train_idx)
    seen[d.label(i)] = true;
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c])
      throw SplitError("split: class " + std::to_string(c) +
                       " is absent from the train split; try a different split seed or a larger "
                       "train fraction");
  s.train = d.subset(s.train_idx);
  s.val = d.subset(s.val_idx);
  s.test = d.subset(s.test_idx);
  return s;
}

/// Per-channel mean and (population) standard deviation over all samples.
inline void compute_channel_stats(Dataset &d) {
  const auto &sh = d.sample_shape();
  const std::size_t ch = sh[0];
  const std::size_t plane = sh[1] * sh[2];
  d.mean.assign(ch, 0.0);
  d.stddev.assign(ch, 0.0);
  if (d.empty())
    return;
  const double count = static_cast<double>(d.size() * plane);
  for (std::size_t c = 0; c < ch; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto p = d.pixels(i);
      for (std::size_t k = 0; k < plane; ++k)
        s += p[c * plane + k];
    }
    const double mean = s / count;
    double v = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto p = d.pixels(i);
      for (std::size_t k = 0; k < plane; ++k) {
        const double e = p[c * plane + k] - mean;
        v += e * e;
      }
    }
    d.mean[c] = mean;
    d.stddev[c] = std::sqrt(v / count);
  }
}

inline void apply_standardization(Dataset &d, const std::vector<double> &mean,
                                  const std::vector<double> &stddev) {
  const auto &sh = d.sample_shape();
  const std::size_t plane = sh[1] * sh[2];
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto p = d.mutable_pixels(i);
    for (std::size_t c = 0; c < sh[0]; ++c) {
      const double s = stddev[c] > 0.0 ? stddev[c] : 1.0;
      for (std::size_t k = 0; k < plane; ++k)
        p[c * plane + k] = (p[c * plane + k] - mean[c]) / s;
    }
  }
  d.mean = mean;
  d.stddev = stddev;
}

/// Standardize every split with statistics of the train split.
inline void normalize_splits(Splits &s) {
  compute_channel_stats(s.train);
  const auto mean = s.train.mean;
  const auto stddev = s.train.stddev;
  apply_standardization(s.train, mean, stddev);
  apply_standardization(s.val, mean, stddev);
  apply_standardization(s.test, mean, stddev);
}

} // namespace spectral
