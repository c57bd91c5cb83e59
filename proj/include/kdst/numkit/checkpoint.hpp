#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "kdst/common.hpp"
#include "kdst/numkit/tensor.hpp"

namespace kdst::numkit {

// Binary checkpoint: magic "KDST1", then one record per parameter:
//   u32 name length, UTF-8 name, u32 rank, u32 dims[rank], f32 payload.
// All integers and floats little-endian.

struct NamedParam {
  std::string name;
  Tensor tensor;
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[5] = {'K', 'D', 'S', 'T', '1'};

inline void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.write(kCheckpointMagic, 5);
  for (const auto& p : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (const std::size_t d : p.tensor.shape())
      detail::write_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p.tensor.values().data()),
             static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
  }
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kCheckpointMagic, 5) != 0)
    throw IoError("checkpoint: bad magic in " + path);
  std::map<std::string, Tensor> out;
  while (true) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    if (is.eof()) break;
    if (!is) throw IoError("checkpoint: truncated record in " + path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = detail::read_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u32(is);
    std::vector<float> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) throw IoError("checkpoint: truncated payload for " + name);
    out.emplace(name, Tensor::from_data(shape, std::move(data)));
  }
  return out;
}

// Copies checkpoint values into live parameters, matching by name.
inline void restore_params(std::vector<NamedParam>& params,
                           const std::map<std::string, Tensor>& loaded) {
  for (auto& p : params) {
    const auto it = loaded.find(p.name);
    if (it == loaded.end()) throw IoError("checkpoint: missing parameter " + p.name);
    if (it->second.shape() != p.tensor.shape())
      throw ShapeError("checkpoint: shape mismatch for " + p.name);
    p.tensor.values() = it->second.values();
  }
}

}  // namespace kdst::numkit
