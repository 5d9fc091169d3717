#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "esnp/grid.hpp"

// Binary field record:
//   "ESNP" | version u32 | domain u8 | nx u32 | ny u32 | nx*ny f64
// all little-endian, values row-major with x fastest.
namespace esnp::io {

inline constexpr std::array<char, 4> kMagic{'E', 'S', 'N', 'P'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {
static_assert(std::endian::native == std::endian::little,
              "field records are written natively; big-endian hosts need byte swapping");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("truncated field record");
  return v;
}
}  // namespace detail

inline void write_field(std::ostream& os, const ScalarField& f) {
  const Grid& g = f.grid();
  os.write(kMagic.data(), kMagic.size());
  detail::put<std::uint32_t>(os, kFormatVersion);
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(g.domain()));
  detail::put<std::uint32_t>(os, std::uint32_t(g.nx()));
  detail::put<std::uint32_t>(os, std::uint32_t(g.ny()));
  os.write(reinterpret_cast<const char*>(f.raw().data()),
           std::streamsize(f.size() * sizeof(double)));
  if (!os) throw Error("failed writing field record");
}

inline ScalarField read_field(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw Error("not an ESNP field record (bad magic)");
  auto version = detail::get<std::uint32_t>(is);
  if (version != kFormatVersion)
    throw Error("unsupported field record version " + std::to_string(version));
  auto tag = detail::get<std::uint8_t>(is);
  if (tag > 1) throw Error("unknown domain tag " + std::to_string(tag));
  auto nx = detail::get<std::uint32_t>(is);
  auto ny = detail::get<std::uint32_t>(is);
  Grid g(int(nx), int(ny), static_cast<Domain>(tag));
  std::vector<double> values(g.size());
  is.read(reinterpret_cast<char*>(values.data()), std::streamsize(values.size() * sizeof(double)));
  if (!is) throw Error("truncated field record payload");
  return ScalarField(g, std::move(values));
}

inline void write_fields(const std::string& path, const std::vector<ScalarField>& fields) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  for (const auto& f : fields) write_field(os, f);
}

inline std::vector<ScalarField> read_fields(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  std::vector<ScalarField> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_field(is));
  return out;
}

}  // namespace esnp::io
