#pragma once

// Checkpoint container. Layout, all integers little-endian:
//
//   "SPCK"            4 bytes magic
//   version           u8  (currently 1)
//   count             u32 number of arrays
//   per array:
//     name_len u32, name bytes (UTF-8, no terminator)
//     rank u32, dims u64[rank]
//     data f64[prod(dims)] as IEEE-754 bit patterns
//
// Model parameters are named "layer<index>/<layer kind>/<param name>".

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "spectral/errors.hpp"
#include "spectral/model.hpp"
#include "spectral/tensor.hpp"

namespace spectral {

constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Tensor value;
};

namespace detail {

inline void put_u32(std::vector<unsigned char> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char> &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
public:
  explicit ByteReader(const std::vector<unsigned char> &b) : b_(b) {}

  std::uint64_t get(std::size_t width) {
    if (pos_ + width > b_.size())
      throw ParseError("checkpoint: truncated", pos_);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i)
      v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += width;
    return v;
  }

  std::string get_string(std::size_t n) {
    if (pos_ + n > b_.size())
      throw ParseError("checkpoint: truncated name", pos_);
    std::string s(reinterpret_cast<const char *>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] std::size_t pos() const noexcept { return pos_; }
  [[nodiscard]] bool done() const noexcept { return pos_ == b_.size(); }

private:
  const std::vector<unsigned char> &b_;
  std::size_t pos_ = 0;
};

} // namespace detail

[[nodiscard]] inline std::vector<unsigned char> encode_checkpoint(const std::vector<NamedArray> &arrays) {
  std::vector<unsigned char> out{'S', 'P', 'C', 'K', kCheckpointVersion};
  detail::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto &a : arrays) {
    detail::put_u32(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(a.value.rank()));
    for (std::size_t d : a.value.shape())
      detail::put_u64(out, d);
    for (double v : a.value.data())
      detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

[[nodiscard]] inline std::vector<NamedArray> decode_checkpoint(const std::vector<unsigned char> &bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), "SPCK", 4) != 0)
    throw ParseError("checkpoint: bad magic", 0);
  if (bytes[4] != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(bytes[4]), 4);
  detail::ByteReader r(bytes);
  r.get_string(5);
  const auto count = r.get(4);
  std::vector<NamedArray> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string(r.get(4));
    const auto rank = r.get(4);
    if (rank == 0 || rank > 4)
      throw ParseError("checkpoint: bad rank for " + a.name, r.pos());
    Tensor::Shape shape;
    for (std::uint64_t d = 0; d < rank; ++d)
      shape.push_back(static_cast<std::size_t>(r.get(8)));
    std::vector<double> data(Tensor::element_count(shape));
    for (double &v : data)
      v = std::bit_cast<double>(r.get(8));
    a.value = Tensor(std::move(shape), std::move(data));
    out.push_back(std::move(a));
  }
  if (!r.done())
    throw ParseError("checkpoint: trailing bytes", r.pos());
  return out;
}

[[nodiscard]] inline std::string param_path(std::size_t layer_index, Layer &layer, const Param &p) {
  return "layer" + std::to_string(layer_index) + "/" + layer.kind() + "/" + p.name;
}

[[nodiscard]] inline std::vector<NamedArray> model_arrays(Model &model) {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < model.size(); ++i)
    for (Param *p : model.layer(i).params())
      out.push_back({param_path(i, model.layer(i), *p), p->value});
  return out;
}

inline void save_checkpoint(Model &model, const std::string &path) {
  const auto bytes = encode_checkpoint(model_arrays(model));
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("write failed: " + path);
}

[[nodiscard]] inline std::vector<NamedArray> load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_checkpoint(bytes);
}

/// Copy matching arrays into the model; every model parameter must be present.
inline void restore_model(Model &model, const std::vector<NamedArray> &arrays) {
  for (std::size_t i = 0; i < model.size(); ++i)
    for (Param *p : model.layer(i).params()) {
      const std::string name = param_path(i, model.layer(i), *p);
      const auto it = std::find_if(arrays.begin(), arrays.end(),
                                   [&](const NamedArray &a) { return a.name == name; });
      if (it == arrays.end())
        throw std::runtime_error("checkpoint has no array " + name);
      if (it->value.shape() != p->value.shape())
        throw std::runtime_error("checkpoint array " + name + " has shape " +
                                 Tensor::shape_string(it->value.shape()));
      p->value = it->value;
    }
}

} // namespace spectral
