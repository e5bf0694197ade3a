#include "imex/qtips.hpp"

#include <cmath>
#include <fstream>

#include "imex/binio.hpp"

namespace imex::qtips {

ObjectRanges object_ranges(int s) {
  require(s >= 8, "qtips: image size must be at least 8");
  if (s >= 64) return {32, 60, 4, 8};
  const double f = static_cast<double>(s) / 64.0;
  ObjectRanges r;
  r.l_lo = static_cast<int>(std::lround(32 * f));
  r.l_hi = static_cast<int>(std::lround(60 * f));
  r.w_lo = std::max(1, static_cast<int>(std::lround(4 * f)));
  r.w_hi = std::max(r.w_lo, static_cast<int>(std::lround(8 * f)));
  // keep length > 2 * width for every drawable pair
  r.l_lo = std::max(r.l_lo, 2 * r.w_hi + 1);
  r.l_hi = std::max(r.l_hi, r.l_lo);
  return r;
}

ObjectSpec sample_object(Rng& rng, int s) {
  const ObjectRanges ranges = object_ranges(s);
  ObjectSpec spec;
  const int cls = static_cast<int>(rng.uniform_int(1, 3));
  spec.length = static_cast<int>(rng.uniform_int(ranges.l_lo, ranges.l_hi));
  spec.width = static_cast<int>(rng.uniform_int(ranges.w_lo, ranges.w_hi));
  spec.angle_deg = static_cast<int>(rng.uniform_int(-180, 180));
  const int orient = static_cast<int>(rng.uniform_int(0, 1));
  switch (cls) {
    case 1: spec.left = spec.right = Marker::white; break;
    case 3: spec.left = spec.right = Marker::black; break;
    default:
      spec.left = orient == 0 ? Marker::white : Marker::black;
      spec.right = orient == 0 ? Marker::black : Marker::white;
      break;
  }

  const double theta = spec.angle_deg * M_PI / 180.0;
  const double cu = std::cos(theta), su = std::sin(theta);
  const double hl = spec.length / 2.0, hw = spec.width / 2.0;
  bool placed = false;
  for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
    const double cy = rng.uniform_unit() * s;
    const double cx = rng.uniform_unit() * s;
    bool fits = true;
    for (double sl : {-hl, hl})
      for (double sw : {-hw, hw}) {
        const double x = cx + sl * cu - sw * su;
        const double y = cy + sl * su + sw * cu;
        if (!(x >= 0.0 && x < s && y >= 0.0 && y < s)) fits = false;
      }
    if (fits) {
      spec.cy = cy;
      spec.cx = cx;
      placed = true;
    }
  }
  if (!placed) {
    spec.cy = s / 2.0;
    spec.cx = s / 2.0;
  }
  return spec;
}

Sample render(const ObjectSpec& spec, int s) {
  require(spec.length > 2 * spec.width, "qtips: object length must exceed twice its width");
  Sample out;
  out.size = s;
  out.image.assign(static_cast<size_t>(s) * s, kBackground);
  out.labels.assign(static_cast<size_t>(s) * s, 0);

  const double theta = spec.angle_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double hl = spec.length / 2.0, hw = spec.width / 2.0;
  const uint8_t cls = static_cast<uint8_t>(spec.class_id());

  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      const double dy = (i + 0.5) - spec.cy;
      const double dx = (j + 0.5) - spec.cx;
      const double u = dx * ct + dy * st;
      const double v = -dx * st + dy * ct;
      if (std::abs(u) > hl || std::abs(v) > hw) continue;
      float value = kMidsection;
      if (u > hl - spec.width)
        value = spec.right == Marker::white ? kWhite : kBlack;
      else if (u < -hl + spec.width)
        value = spec.left == Marker::white ? kWhite : kBlack;
      out.image[static_cast<size_t>(i) * s + j] = value;
      out.labels[static_cast<size_t>(i) * s + j] = cls;
    }
  return out;
}

Dataset generate(int n, uint64_t seed, int s) {
  require(n > 0, "qtips: sample count must be positive");
  Dataset ds;
  ds.meta.seed = seed;
  ds.meta.count = static_cast<uint32_t>(n);
  ds.meta.size = static_cast<uint32_t>(s);
  ds.samples.reserve(static_cast<size_t>(n));
  Rng rng(seed);
  for (int i = 0; i < n; ++i) ds.samples.push_back(render(sample_object(rng, s), s));
  return ds;
}

std::array<double, 4> class_frequencies(const Dataset& ds) {
  std::array<uint64_t, 4> counts{0, 0, 0, 0};
  uint64_t total = 0;
  for (const auto& sample : ds.samples)
    for (uint8_t l : sample.labels) {
      require(l < 4, "qtips: label out of range");
      ++counts[l];
      ++total;
    }
  std::array<double, 4> freq{};
  for (int c = 0; c < 4; ++c) freq[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  return freq;
}

void write_qtds(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  binio::write_magic(os, "QTDS");
  binio::write_pod<uint32_t>(os, 1);
  binio::write_pod<uint64_t>(os, ds.meta.seed);
  binio::write_pod<uint32_t>(os, ds.meta.count);
  binio::write_pod<uint32_t>(os, ds.meta.size);
  binio::write_pod<uint32_t>(os, ds.meta.channels);
  binio::write_pod<uint8_t>(os, ds.meta.n_classes);
  for (const auto& sample : ds.samples) {
    binio::write_bytes(os, sample.image.data(), sample.image.size() * sizeof(float));
    binio::write_bytes(os, sample.labels.data(), sample.labels.size());
  }
  if (!os) throw FormatError("write failed for " + path);
}

Dataset read_qtds(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  binio::expect_magic(is, "QTDS", "QTDS");
  binio::expect_version(is, 1, "QTDS");
  Dataset ds;
  ds.meta.seed = binio::read_pod<uint64_t>(is);
  ds.meta.count = binio::read_pod<uint32_t>(is);
  ds.meta.size = binio::read_pod<uint32_t>(is);
  ds.meta.channels = binio::read_pod<uint32_t>(is);
  ds.meta.n_classes = binio::read_pod<uint8_t>(is);
  if (ds.meta.channels != 1) throw FormatError("QTDS: unsupported channel count");
  const size_t n = static_cast<size_t>(ds.meta.size) * ds.meta.size;
  ds.samples.resize(ds.meta.count);
  for (auto& sample : ds.samples) {
    sample.size = static_cast<int>(ds.meta.size);
    sample.image.resize(n);
    sample.labels.resize(n);
    binio::read_bytes(is, sample.image.data(), n * sizeof(float));
    binio::read_bytes(is, sample.labels.data(), n);
  }
  return ds;
}

Tensor4<float> sample_tensor(const Sample& s) {
  Tensor4<float> t(1, 1, s.size, s.size);
  t.v = s.image;
  return t;
}

}  // namespace imex::qtips
