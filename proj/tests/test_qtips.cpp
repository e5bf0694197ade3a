#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "imex/qtips.hpp"
#include "test_util.hpp"

using namespace imex;
using namespace imex::qtips;

namespace {

// independent axis-aligned rasterization for r = 0 objects
struct AxisCounts {
  int total = 0, left = 0, right = 0, mid = 0;
};

AxisCounts axis_aligned_counts(const ObjectSpec& o, int s) {
  AxisCounts c;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      const double u = (j + 0.5) - o.cx;
      const double v = (i + 0.5) - o.cy;
      if (std::abs(u) > o.length / 2.0 || std::abs(v) > o.width / 2.0) continue;
      ++c.total;
      if (u > o.length / 2.0 - o.width)
        ++c.right;
      else if (u < -o.length / 2.0 + o.width)
        ++c.left;
      else
        ++c.mid;
    }
  return c;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("class ids derive from the unordered marker pair") {
  ObjectSpec o;
  o.length = 32;
  o.width = 4;
  o.left = Marker::white;
  o.right = Marker::white;
  CHECK(o.class_id() == 1);
  o.right = Marker::black;
  CHECK(o.class_id() == 2);
  std::swap(o.left, o.right);
  CHECK(o.class_id() == 2);  // swapping ends keeps the class
  o.right = Marker::black;
  CHECK(o.class_id() == 3);
}

TEST_CASE("sampling ranges follow the published values and scale down") {
  const auto r64 = object_ranges(64);
  CHECK(r64.l_lo == 32);
  CHECK(r64.l_hi == 60);
  CHECK(r64.w_lo == 4);
  CHECK(r64.w_hi == 8);
  const auto r128 = object_ranges(128);  // paper ranges above 64 too
  CHECK(r128.l_lo == 32);
  CHECK(r128.l_hi == 60);
  const auto r32 = object_ranges(32);
  CHECK(r32.l_lo == 16);
  CHECK(r32.l_hi == 30);
  CHECK(r32.w_lo == 2);
  CHECK(r32.w_hi == 4);
  CHECK(r32.l_lo > 2 * r32.w_hi);
}

TEST_CASE("sampled objects satisfy the invariants and fit the frame") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const ObjectSpec o = sample_object(rng, 64);
    CHECK(o.length >= 32);
    CHECK(o.length <= 60);
    CHECK(o.width >= 4);
    CHECK(o.width <= 8);
    CHECK(o.angle_deg >= -180);
    CHECK(o.angle_deg <= 180);
    CHECK(o.length > 2 * o.width);
    CHECK(o.cy >= 0.0);
    CHECK(o.cy < 64.0);
    CHECK(o.cx >= 0.0);
    CHECK(o.cx < 64.0);
  }
}

TEST_CASE("class draw frequencies are near uniform") {
  Rng rng(2);
  int counts[4] = {0, 0, 0, 0};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[sample_object(rng, 64).class_id()];
  for (int c = 1; c <= 3; ++c) {
    const double f = static_cast<double>(counts[c]) / n;
    CHECK(f >= 0.31);
    CHECK(f <= 0.36);
  }
}

TEST_CASE("axis-aligned render has exact pixel counts") {
  ObjectSpec o;
  o.length = 32;
  o.width = 4;
  o.angle_deg = 0;
  o.cy = 32.0;
  o.cx = 32.0;
  o.left = Marker::white;
  o.right = Marker::black;
  const Sample s = render(o, 64);

  int total = 0, whites = 0, blacks = 0, mids = 0;
  for (size_t i = 0; i < s.image.size(); ++i) {
    if (s.labels[i] == 0) {
      CHECK(s.image[i] == kBackground);
      continue;
    }
    CHECK(s.labels[i] == 2);
    ++total;
    if (s.image[i] == kWhite) ++whites;
    if (s.image[i] == kBlack) ++blacks;
    if (s.image[i] == kMidsection) ++mids;
  }
  CHECK(total == 128);  // l * w
  CHECK(whites == 16);  // w * w per marker
  CHECK(blacks == 16);
  CHECK(mids == 96);

  const AxisCounts oracle = axis_aligned_counts(o, 64);
  CHECK(oracle.total == total);
  CHECK(oracle.left == whites);
  CHECK(oracle.right == blacks);
  CHECK(oracle.mid == mids);
}

TEST_CASE("white-white objects contain no black pixel") {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    ObjectSpec o = sample_object(rng, 64);
    o.left = o.right = Marker::white;
    const Sample s = render(o, 64);
    for (float v : s.image) CHECK(v != kBlack);
  }
}

TEST_CASE("rotating by 180 degrees with swapped markers reproduces the render") {
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    ObjectSpec a = sample_object(rng, 64);
    ObjectSpec b = a;
    b.angle_deg = a.angle_deg >= 0 ? a.angle_deg - 180 : a.angle_deg + 180;
    std::swap(b.left, b.right);
    const Sample sa = render(a, 64);
    const Sample sb = render(b, 64);
    CHECK(sa.labels == sb.labels);
    // the image may differ at the rectangle boundary (<= to >= flip), so
    // compare the strict interior via label agreement plus marker zones
    size_t diff = 0;
    for (size_t p = 0; p < sa.image.size(); ++p) diff += sa.image[p] != sb.image[p];
    CHECK(diff == 0);
  }
}

TEST_CASE("label/image consistency") {
  const Dataset ds = generate(16, 9, 64);
  for (const auto& s : ds.samples)
    for (size_t i = 0; i < s.image.size(); ++i) {
      const bool object_pixel =
          s.image[i] == kBlack || s.image[i] == kMidsection || s.image[i] == kWhite;
      if (object_pixel)
        CHECK(s.labels[i] != 0);
      else {
        CHECK(s.image[i] == kBackground);
        CHECK(s.labels[i] == 0);
      }
    }
}

TEST_CASE("generation is deterministic and frequencies behave") {
  const Dataset a = generate(64, 123, 64);
  const Dataset b = generate(64, 123, 64);
  CHECK(a == b);
  const Dataset c = generate(64, 124, 64);
  CHECK_FALSE(a == c);

  const auto freq = class_frequencies(a);
  double sum = 0.0;
  for (double f : freq) sum += f;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(freq[0] >= 0.90);  // mostly background
}

TEST_CASE("background frequency for the paper configuration") {
  const Dataset ds = generate(256, 0, 64);
  const auto freq = class_frequencies(ds);
  CHECK(freq[0] >= 0.93);
  CHECK(freq[0] <= 0.97);
}

TEST_CASE("qtds roundtrip is bit exact") {
  const Dataset ds = generate(12, 77, 32);
  const std::string path = temp_path("imex_test_roundtrip.qtds");
  write_qtds(ds, path);
  const Dataset back = read_qtds(path);
  CHECK(ds == back);
  std::remove(path.c_str());
}

TEST_CASE("qtds rejects wrong magic and version") {
  const std::string path = temp_path("imex_test_badmagic.qtds");
  {
    std::ofstream os(path, std::ios::binary);
    os << "QTXX junk data beyond";
  }
  CHECK_THROWS_AS((void)read_qtds(path), FormatError);
  std::remove(path.c_str());
  CHECK_THROWS_AS((void)read_qtds("/nonexistent/path.qtds"), FormatError);
}

TEST_CASE("cropping away one marker makes classes indistinguishable") {
  // two objects differing only in the far marker render identically on any
  // window that excludes that marker
  ObjectSpec a;
  a.length = 48;
  a.width = 6;
  a.angle_deg = 0;
  a.cy = 32.0;
  a.cx = 32.0;
  a.left = Marker::white;
  a.right = Marker::white;  // class 1
  ObjectSpec b = a;
  b.right = Marker::black;  // class 2
  const Sample sa = render(a, 64);
  const Sample sb = render(b, 64);
  for (size_t i = 0; i < sa.labels.size(); ++i)  // same geometry, same masks
    CHECK((sa.labels[i] != 0) == (sb.labels[i] != 0));
  // crop: columns [0, 40) exclude the right marker (u > 18 means x > 50)
  bool identical = true;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 40; ++j)
      if (sa.image[i * 64 + j] != sb.image[i * 64 + j]) identical = false;
  CHECK(identical);
  // while the classes differ
  CHECK(a.class_id() != b.class_id());
}
