#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "narrative_infill/error.hpp"
#include "narrative_infill/nn/optim.hpp"
#include "narrative_infill/nn/parameters.hpp"

namespace narrative_infill::nn {

// Layout (all integers little-endian):
//   "NICK" | u32 version
//   u32 n_params, then per parameter:
//     u32 name_len | name bytes (UTF-8) | u32 rank | u32 dims[rank] | f32 values
//   optimizer: u64 step | f64 lr | f64 beta1 | f64 beta2 | f64 eps
//              u32 n_slots | per slot: u32 len | f32 first[len] | f32 second[len]
inline constexpr std::array<char, 4> kCheckpointMagic = {'N', 'I', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ParameterSet<T> params;
  OptimizerState<T> optimizer;
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }
  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  void bytes(void* p, std::size_t n) {
    if (!in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
      throw InputError("truncated checkpoint " + source_);
    }
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace detail

template <typename T>
void write_checkpoint(std::ostream& out, const ParameterSet<T>& params, const OptimizerState<T>& opt) {
  detail::Writer w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (const T v : p.value) w.f32(static_cast<float>(v));
  }
  w.u64(opt.step);
  w.f64(opt.lr);
  w.f64(opt.beta1);
  w.f64(opt.beta2);
  w.f64(opt.eps);
  w.u32(static_cast<std::uint32_t>(opt.first_moment.size()));
  for (std::size_t i = 0; i < opt.first_moment.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(opt.first_moment[i].size()));
    for (const T v : opt.first_moment[i]) w.f32(static_cast<float>(v));
    for (const T v : opt.second_moment[i]) w.f32(static_cast<float>(v));
  }
}

template <typename T>
Checkpoint<T> read_checkpoint(std::istream& in, const std::string& source = "<stream>") {
  detail::Reader r(in, source);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw InputError("not a checkpoint (bad magic): " + source);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw InputError("unsupported checkpoint version " + std::to_string(version) + ": " + source);
  }
  Checkpoint<T> ck;
  const auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name(r.u32(), '\0');
    r.bytes(name.data(), name.size());
    std::vector<std::size_t> shape(r.u32());
    for (auto& d : shape) d = r.u32();
    const auto idx = ck.params.add(name, shape);
    for (auto& v : ck.params[idx].value) v = static_cast<T>(r.f32());
  }
  auto& opt = ck.optimizer;
  opt.step = r.u64();
  opt.lr = r.f64();
  opt.beta1 = r.f64();
  opt.beta2 = r.f64();
  opt.eps = r.f64();
  const auto slots = r.u32();
  if (slots != 0 && slots != n) throw InputError("optimizer state does not match parameters: " + source);
  for (std::uint32_t i = 0; i < slots; ++i) {
    const auto len = r.u32();
    if (len != ck.params[i].value.size()) throw InputError("optimizer slot size mismatch: " + source);
    std::vector<T> m(len), v(len);
    for (auto& x : m) x = static_cast<T>(r.f32());
    for (auto& x : v) x = static_cast<T>(r.f32());
    opt.first_moment.push_back(std::move(m));
    opt.second_moment.push_back(std::move(v));
  }
  return ck;
}

// Written to a sibling temp file, then renamed over the target.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<T>& params,
                     const OptimizerState<T>& opt) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint " + tmp.string());
    write_checkpoint(out, params, opt);
    if (!out) throw InputError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  return read_checkpoint<T>(in, path.string());
}

}  // namespace narrative_infill::nn
