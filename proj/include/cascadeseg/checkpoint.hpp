#ifndef CASCADESEG_CHECKPOINT_HPP
#define CASCADESEG_CHECKPOINT_HPP

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascadeseg/common.hpp"
#include "cascadeseg/tensor.hpp"

namespace cseg {

// Checkpoint format: "CSEG", u32 version, u32 tensor count, then per tensor a
// u32 name length, the name bytes, u32 rank, u32 dims, and the values as
// little-endian float32 regardless of the in-memory scalar type.

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
inline void save_checkpoint(const std::string& path, const std::vector<Parameter<S>>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write("CSEG", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.tensor.shape();
    detail::put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (Index d : shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
    const auto& v = p.tensor.value();
    for (Index i = 0; i < v.size(); ++i) detail::put_f32(os, static_cast<float>(v[i]));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

/// Restores parameter values in place. The file must carry exactly the same
/// tensors, in order, with matching names and shapes; anything else raises.
template <typename S>
inline void load_checkpoint(const std::string& path, std::vector<Parameter<S>>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CSEG", 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  if (detail::get_u32(is) != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  const std::uint32_t count = detail::get_u32(is);
  if (count != params.size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch in " + path);

  for (auto& p : params) {
    const std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is || name != p.name)
      throw std::runtime_error("load_checkpoint: expected tensor " + p.name + ", found " + name);
    const std::uint32_t rank = detail::get_u32(is);
    std::vector<Index> shape(rank);
    for (auto& d : shape) d = static_cast<Index>(detail::get_u32(is));
    if (shape != p.tensor.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for tensor " + p.name);
    auto& v = p.tensor.value();
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(detail::get_f32(is));
  }
  if (!is) throw std::runtime_error("load_checkpoint: truncated data in " + path);
}

}  // namespace cseg

#endif
