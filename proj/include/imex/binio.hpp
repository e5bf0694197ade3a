#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "imex/common.hpp"

// Little-endian binary primitives shared by the TNSR / QTDS / CKPT formats.
// The in-memory byte order is assumed little-endian (x86/aarch64).

namespace imex::binio {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw FormatError("write failed");
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw FormatError("unexpected end of file");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  write_bytes(os, &v, sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  read_bytes(is, &v, sizeof(T));
  return v;
}

inline void write_magic(std::ostream& os, const char magic[4]) {
  write_bytes(os, magic, 4);
}

inline void expect_magic(std::istream& is, const char magic[4], const char* format_name) {
  char got[4];
  read_bytes(is, got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + format_name + " format");
}

inline void expect_version(std::istream& is, uint32_t version, const char* format_name) {
  const uint32_t got = read_pod<uint32_t>(is);
  if (got != version)
    throw FormatError(std::string("unsupported ") + format_name + " version " +
                      std::to_string(got) + ", expected " + std::to_string(version));
}

}  // namespace imex::binio
