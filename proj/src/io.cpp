#include "imex/io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imex/binio.hpp"
#include "imex/fft.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace imex {

namespace {

template <class T>
constexpr uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 1 : 2;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw FormatError("config: bad integer '" + v + "' for key " + key);
  }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw FormatError("config: bad unsigned integer '" + v + "' for key " + key);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw FormatError("config: bad number '" + v + "' for key " + key);
  }
}

}  // namespace

template <class T>
void write_tnsr(std::ostream& os, const Tensor4<T>& t) {
  binio::write_magic(os, "TNSR");
  binio::write_pod<uint32_t>(os, 1);
  binio::write_pod<uint32_t>(os, 4);
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(t.b));
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(t.c));
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(t.h));
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(t.w));
  binio::write_pod<uint8_t>(os, dtype_code<T>());
  binio::write_bytes(os, t.v.data(), t.v.size() * sizeof(T));
}

template <class T>
void write_tnsr_file(const std::string& path, const Tensor4<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_tnsr(os, t);
}

template <class T>
Tensor4<T> read_tnsr(std::istream& is) {
  binio::expect_magic(is, "TNSR", "TNSR");
  binio::expect_version(is, 1, "TNSR");
  const uint32_t rank = binio::read_pod<uint32_t>(is);
  if (rank != 4) throw FormatError("TNSR: unsupported rank " + std::to_string(rank));
  const uint32_t b = binio::read_pod<uint32_t>(is);
  const uint32_t c = binio::read_pod<uint32_t>(is);
  const uint32_t h = binio::read_pod<uint32_t>(is);
  const uint32_t w = binio::read_pod<uint32_t>(is);
  const uint8_t dtype = binio::read_pod<uint8_t>(is);
  if (dtype != dtype_code<T>())
    throw FormatError("TNSR: dtype code " + std::to_string(dtype) + " does not match reader");
  Tensor4<T> t(static_cast<int>(b), static_cast<int>(c), static_cast<int>(h),
               static_cast<int>(w));
  binio::read_bytes(is, t.v.data(), t.v.size() * sizeof(T));
  return t;
}

template <class T>
Tensor4<T> read_tnsr_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_tnsr<T>(is);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  cfg.net.stages.clear();
  std::istringstream is(text);
  std::string line;
  int current_stage = -1;  // -1 = global section
  std::vector<bool> has_width, has_layers;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw FormatError("config line " + std::to_string(lineno) +
                                             ": malformed section header");
      std::string inner = trim(t.substr(1, t.size() - 2));
      if (inner.rfind("stage", 0) != 0)
        throw FormatError("config line " + std::to_string(lineno) + ": unknown section '" +
                          inner + "'");
      const int64_t idx = parse_int(trim(inner.substr(5)), "stage header");
      if (idx != static_cast<int64_t>(cfg.net.stages.size()) + 1)
        throw FormatError("config: stage sections must be numbered sequentially from 1");
      cfg.net.stages.push_back(StageSpec{});
      has_width.push_back(false);
      has_layers.push_back(false);
      current_stage = static_cast<int>(idx) - 1;
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    try {
      if (current_stage < 0) {
        if (key == "input_channels")
          cfg.net.input_channels = static_cast<int>(parse_int(value, key));
        else if (key == "n_classes")
          cfg.net.n_classes = static_cast<int>(parse_int(value, key));
        else if (key == "size")
          cfg.size = static_cast<int>(parse_int(value, key));
        else if (key == "init")
          cfg.init = init_kind_from_string(value);
        else if (key == "seed")
          cfg.seed = parse_u64(value, key);
        else
          throw FormatError("config: unknown key '" + key + "'");
      } else {
        StageSpec& st = cfg.net.stages[static_cast<size_t>(current_stage)];
        if (key == "width") {
          st.width = static_cast<int>(parse_int(value, key));
          has_width[static_cast<size_t>(current_stage)] = true;
        } else if (key == "layers") {
          st.layers = static_cast<int>(parse_int(value, key));
          has_layers[static_cast<size_t>(current_stage)] = true;
        } else if (key == "mode") {
          st.mode = step_mode_from_string(value);
        } else if (key == "h") {
          st.h = parse_double(value, key);
        } else if (key == "kernel") {
          st.kernel = static_cast<int>(parse_int(value, key));
        } else {
          throw FormatError("config: unknown key '" + key + "' in stage section");
        }
      }
    } catch (const FormatError&) {
      throw;
    } catch (const ValueError& e) {
      throw FormatError(std::string("config: ") + e.what());
    }
  }
  if (cfg.net.stages.empty()) throw FormatError("config: at least one [stage N] required");
  for (size_t s = 0; s < cfg.net.stages.size(); ++s) {
    if (!has_width[s] || !has_layers[s])
      throw FormatError("config: stage " + std::to_string(s + 1) +
                        " must set width and layers");
  }
  try {
    validate_network(cfg.net);
  } catch (const ValueError& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!is_power_of_two(cfg.size))
    throw FormatError("config: size must be a power of two, got " + std::to_string(cfg.size));
  return cfg;
}

std::string render_config(const RunConfig& cfg) {
  require(cfg.net.opening_kernel == 3 && cfg.net.use_norm,
          "render_config: config text assumes the standard 3x3 opening with normalization");
  std::ostringstream os;
  os << "input_channels = " << cfg.net.input_channels << "\n";
  os << "n_classes = " << cfg.net.n_classes << "\n";
  os << "size = " << cfg.size << "\n";
  os << "init = " << to_string(cfg.init) << "\n";
  os << "seed = " << cfg.seed << "\n";
  for (size_t s = 0; s < cfg.net.stages.size(); ++s) {
    const StageSpec& st = cfg.net.stages[s];
    os << "\n[stage " << s + 1 << "]\n";
    os << "width = " << st.width << "\n";
    os << "layers = " << st.layers << "\n";
    os << "mode = " << to_string(st.mode) << "\n";
    os << "h = " << format_double(st.h) << "\n";
    os << "kernel = " << st.kernel << "\n";
  }
  return os.str();
}

void write_ckpt(const std::string& path, const RunConfig& cfg, const ParamStore<float>& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  const std::string cfg_text = render_config(cfg);
  binio::write_magic(os, "IMEX");
  binio::write_pod<uint32_t>(os, 1);
  binio::write_pod<uint32_t>(os, static_cast<uint32_t>(cfg_text.size()));
  binio::write_bytes(os, cfg_text.data(), cfg_text.size());
  for (const auto& p : store.params) {
    Tensor4<float> t(p.shape[0], p.shape[1], p.shape[2], p.shape[3]);
    t.v = p.v;
    write_tnsr(os, t);
  }
  if (!os) throw FormatError("write failed for " + path);
}

std::pair<RunConfig, ParamStore<float>> read_ckpt(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  binio::expect_magic(is, "IMEX", "CKPT");
  binio::expect_version(is, 1, "CKPT");
  const uint32_t len = binio::read_pod<uint32_t>(is);
  std::string cfg_text(len, '\0');
  binio::read_bytes(is, cfg_text.data(), len);
  RunConfig cfg = parse_config(cfg_text);
  ParamStore<float> store = build_param_store<float>(cfg.net);
  for (auto& p : store.params) {
    Tensor4<float> t = read_tnsr<float>(is);
    if (t.b != p.shape[0] || t.c != p.shape[1] || t.h != p.shape[2] || t.w != p.shape[3])
      throw FormatError("CKPT: shape mismatch for parameter '" + p.name + "'");
    p.v = std::move(t.v);
  }
  return {cfg, std::move(store)};
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int w, int h) {
  require(static_cast<size_t>(w) * h == pixels.size(), "write_pgm: size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  binio::write_bytes(os, pixels.data(), pixels.size());
}

template <class T>
NormalizedImage normalize_to_bytes(const std::vector<T>& values) {
  NormalizedImage out;
  out.pixels.resize(values.size());
  if (values.empty()) return out;
  double lo = values[0], hi = values[0];
  for (T v : values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  out.lo = lo;
  out.hi = hi;
  const double range = hi - lo;
  for (size_t i = 0; i < values.size(); ++i)
    out.pixels[i] = range > 0.0 ? static_cast<uint8_t>(
                                      255.0 * (static_cast<double>(values[i]) - lo) / range + 0.5)
                                : 0;
  return out;
}

void write_manifest(const std::string& path, const Manifest& entries) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
  if (!os) throw FormatError("write failed for " + path);
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  Manifest out;
  std::string line;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("manifest: expected key = value lines");
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

template void write_tnsr<float>(std::ostream&, const Tensor4<float>&);
template void write_tnsr<double>(std::ostream&, const Tensor4<double>&);
template void write_tnsr_file<float>(const std::string&, const Tensor4<float>&);
template void write_tnsr_file<double>(const std::string&, const Tensor4<double>&);
template Tensor4<float> read_tnsr<float>(std::istream&);
template Tensor4<double> read_tnsr<double>(std::istream&);
template Tensor4<float> read_tnsr_file<float>(const std::string&);
template Tensor4<double> read_tnsr_file<double>(const std::string&);
template NormalizedImage normalize_to_bytes<float>(const std::vector<float>&);
template NormalizedImage normalize_to_bytes<double>(const std::vector<double>&);

}  // namespace imex
