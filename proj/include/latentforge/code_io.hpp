#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include "error.hpp"
#include "hash.hpp"
#include "json_util.hpp"
#include "types.hpp"

namespace lf {

// Code file layout: u32 little-endian header length, UTF-8 JSON header
// {"dim", "layers", "seed"?, "index"?}, then layers*dim little-endian float32 values
// in row-major order.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  require(pos + 4 <= in.size(), "truncated binary stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(const std::string& in, std::size_t pos) { return std::bit_cast<float>(get_u32(in, pos)); }

}  // namespace detail

inline std::string encode_code(const ExtendedCode& code, std::optional<SeedProvenance> provenance = std::nullopt) {
  Json header = {{"dim", code.dim()}, {"layers", code.layers()}};
  if (provenance) {
    header["seed"] = provenance->seed;
    header["index"] = provenance->index;
  }
  const std::string h = header.dump();
  std::string out;
  detail::put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (Eigen::Index l = 0; l < code.layers(); ++l)
    for (Eigen::Index j = 0; j < code.dim(); ++j) detail::put_f32(out, static_cast<float>(code.rows(l, j)));
  return out;
}

struct DecodedCode {
  ExtendedCode code;
  std::optional<SeedProvenance> provenance;
};

inline DecodedCode decode_code(const std::string& bytes) {
  const std::uint32_t hlen = detail::get_u32(bytes, 0);
  require(4 + static_cast<std::size_t>(hlen) <= bytes.size(), "code file: truncated header");
  const Json header = Json::parse(bytes.substr(4, hlen));
  const auto dim = header.at("dim").get<Eigen::Index>();
  const auto layers = header.at("layers").get<Eigen::Index>();
  const std::size_t expected = 4 + hlen + static_cast<std::size_t>(dim * layers) * 4;
  require(bytes.size() == expected, "code file: payload size does not match header");
  DecodedCode out;
  out.code.rows.resize(layers, dim);
  std::size_t pos = 4 + hlen;
  for (Eigen::Index l = 0; l < layers; ++l)
    for (Eigen::Index j = 0; j < dim; ++j, pos += 4) out.code.rows(l, j) = detail::get_f32(bytes, pos);
  if (header.contains("seed"))
    out.provenance = SeedProvenance{header.at("seed").get<std::uint64_t>(), header.value("index", std::uint64_t{0})};
  return out;
}

inline void write_code(const std::filesystem::path& path, const ExtendedCode& code,
                       std::optional<SeedProvenance> provenance = std::nullopt) {
  write_file(path, encode_code(code, provenance));
}

inline DecodedCode read_code(const std::filesystem::path& path) { return decode_code(read_file(path)); }

}  // namespace lf
