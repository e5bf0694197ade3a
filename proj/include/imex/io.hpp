#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "imex/layers.hpp"
#include "imex/tensor.hpp"

// File formats and the line-based config text.
//
//   TNSR  binary tensor: magic "TNSR", u32 version=1, u32 rank=4, four u32
//         dims (b,c,h,w), u8 dtype (1=single, 2=double), little-endian
//         row-major payload.
//   CKPT  checkpoint: magic "IMEX", u32 version=1, u32 config_len, UTF-8
//         config text, then every parameter as an embedded TNSR block in
//         declaration order.
//   Config  "key = value" lines with [stage N] sections.
//   Manifest  config-format text describing a finished run.

namespace imex {

template <class T>
void write_tnsr(std::ostream& os, const Tensor4<T>& t);

template <class T>
void write_tnsr_file(const std::string& path, const Tensor4<T>& t);

/// Reads a TNSR block; the stored dtype must match T.
template <class T>
Tensor4<T> read_tnsr(std::istream& is);

template <class T>
Tensor4<T> read_tnsr_file(const std::string& path);

/// Run settings: the architecture plus dataset size, init scheme, and seed.
struct RunConfig {
  NetworkSpec net;
  int size = 64;
  InitKind init = InitKind::Scaled;
  uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

/// Parses config text. Unknown keys and malformed lines are errors.
RunConfig parse_config(const std::string& text);

/// Canonical config text; parse(render(c)) == c.
std::string render_config(const RunConfig& cfg);

void write_ckpt(const std::string& path, const RunConfig& cfg, const ParamStore<float>& store);
std::pair<RunConfig, ParamStore<float>> read_ckpt(const std::string& path);

/// 8-bit binary PGM (P5).
void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int w, int h);

/// Min-max normalization to bytes; returns the range used.
struct NormalizedImage {
  std::vector<uint8_t> pixels;
  double lo = 0.0, hi = 0.0;
};
template <class T>
NormalizedImage normalize_to_bytes(const std::vector<T>& values);

/// Ordered key/value pairs in config-text form.
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(const std::string& path, const Manifest& entries);
Manifest read_manifest(const std::string& path);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace imex
