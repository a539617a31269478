#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"

namespace narrative_infill::corpus {

// Binary feature vector: "NIF1", u32 LE dimension, then f32 LE values.
inline constexpr std::array<char, 4> kFeatureMagic = {'N', 'I', 'F', '1'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

inline void put_f32(std::ostream& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline bool get_f32(std::istream& in, float& f) {
  std::uint32_t v;
  if (!get_u32(in, v)) return false;
  f = std::bit_cast<float>(v);
  return true;
}

}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write feature file " + path.string());
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  detail::put_u32(out, static_cast<std::uint32_t>(values.size()));
  for (const float v : values) detail::put_f32(out, v);
}

inline std::vector<float> read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing feature file " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kFeatureMagic) {
    throw InputError("bad magic in feature file " + path.string());
  }
  std::uint32_t dim = 0;
  if (!detail::get_u32(in, dim)) throw InputError("truncated feature file " + path.string());
  std::vector<float> values(dim);
  for (auto& v : values) {
    if (!detail::get_f32(in, v)) throw InputError("truncated feature file " + path.string());
  }
  return values;
}

}  // namespace narrative_infill::corpus
