#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "naf/common.hpp"
#include "naf/tensor.hpp"

namespace naf {
namespace detail {

constexpr std::array<char, 6> kNpyMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

inline std::string npy_header_dict(int h, int w, int c) {
  return "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(h) + ", " +
         std::to_string(w) + ", " + std::to_string(c) + "), }";
}

// Pulls the value of a quoted or bare key out of the header dict. The header
// grammar is a fixed Python literal, so a scan is enough.
inline std::string dict_value(const std::string& dict, const std::string& key) {
  const std::string quoted = "'" + key + "'";
  size_t pos = dict.find(quoted);
  if (pos == std::string::npos) throw FormatError("NPY header missing key " + key);
  pos = dict.find(':', pos + quoted.size());
  if (pos == std::string::npos) throw FormatError("NPY header malformed near " + key);
  ++pos;
  while (pos < dict.size() && dict[pos] == ' ') ++pos;
  size_t end = pos;
  if (dict[pos] == '\'') {
    end = dict.find('\'', pos + 1);
    if (end == std::string::npos) throw FormatError("NPY header unterminated string");
    return dict.substr(pos + 1, end - pos - 1);
  }
  if (dict[pos] == '(') {
    end = dict.find(')', pos);
    if (end == std::string::npos) throw FormatError("NPY header unterminated tuple");
    return dict.substr(pos, end - pos + 1);
  }
  while (end < dict.size() && dict[end] != ',' && dict[end] != '}') ++end;
  return dict.substr(pos, end - pos);
}

inline std::vector<long> parse_shape_tuple(const std::string& tup) {
  std::vector<long> dims;
  long cur = -1;
  for (char ch : tup) {
    if (ch >= '0' && ch <= '9') {
      cur = (cur < 0 ? 0 : cur) * 10 + (ch - '0');
    } else if (cur >= 0) {
      dims.push_back(cur);
      cur = -1;
    }
  }
  if (cur >= 0) dims.push_back(cur);
  return dims;
}

}  // namespace detail

// NPY v1, float32, C-order, shape (H, W, C).
inline void save_npy(const Tensor3& t, const std::string& path) {
  std::string dict = detail::npy_header_dict(t.height, t.width, t.channels);
  // Pad so that magic(6) + version(2) + len(2) + dict is a multiple of 64,
  // terminated by '\n'.
  size_t header_total = 10 + dict.size() + 1;
  const size_t padded = (header_total + 63) / 64 * 64;
  dict.append(padded - header_total, ' ');
  dict.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(detail::kNpyMagic.data(), 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const uint16_t hlen = static_cast<uint16_t>(dict.size());
  out.write(reinterpret_cast<const char*>(&hlen), 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw IoError("write failed for '" + path + "'");
}

// Reads NPY v1 or v2. Only little-endian float32 rank-3 C-order arrays are
// accepted; anything else is an unsupported-tensor error.
inline Tensor3 load_npy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, detail::kNpyMagic.data(), 6) != 0)
    throw FormatError("'" + path + "' is not an NPY file");
  unsigned char version[2];
  in.read(reinterpret_cast<char*>(version), 2);
  if (!in || (version[0] != 1 && version[0] != 2))
    throw FormatError("unsupported NPY version " + std::to_string(int(version[0])));

  uint32_t hlen = 0;
  if (version[0] == 1) {
    uint16_t hlen16 = 0;
    in.read(reinterpret_cast<char*>(&hlen16), 2);
    hlen = hlen16;
  } else {
    in.read(reinterpret_cast<char*>(&hlen), 4);
  }
  if (!in) throw FormatError("truncated NPY header");

  std::string dict(hlen, '\0');
  in.read(dict.data(), hlen);
  if (!in) throw FormatError("truncated NPY header dict");

  const std::string descr = detail::dict_value(dict, "descr");
  if (descr != "<f4" && descr != "=f4")
    throw UnsupportedTensorError("dtype '" + descr + "', need little-endian float32");
  const std::string fortran = detail::dict_value(dict, "fortran_order");
  if (fortran.find("True") != std::string::npos)
    throw UnsupportedTensorError("fortran_order arrays are not supported");
  const std::vector<long> dims = detail::parse_shape_tuple(detail::dict_value(dict, "shape"));
  if (dims.size() != 3)
    throw UnsupportedTensorError("rank " + std::to_string(dims.size()) + ", need rank 3 (H,W,C)");
  for (long d : dims)
    if (d < 1) throw UnsupportedTensorError("non-positive dimension in shape");

  Tensor3 t(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!in) throw FormatError("NPY payload shorter than header shape implies");
  return t;
}

}  // namespace naf
