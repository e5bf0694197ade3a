#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "imex/rng.hpp"
#include "imex/tensor.hpp"

// The Q-tips synthetic segmentation dataset: single rods with a gray
// midsection and a white or black square marker at each end. The class is
// the unordered marker pair, so labeling a midsection pixel requires a
// receptive field that reaches both ends.

namespace imex::qtips {

enum class Marker : uint8_t { white, black };

// pixel intensities; chosen pairwise distinct so rendering bugs show up
inline constexpr float kBackground = 0.5f;
inline constexpr float kMidsection = 0.75f;
inline constexpr float kWhite = 1.0f;
inline constexpr float kBlack = 0.0f;

struct ObjectSpec {
  int length = 0;     // pixels, along the rod axis
  int width = 0;      // pixels, across
  int angle_deg = 0;  // integer degrees in [-180, 180]
  double cy = 0.0, cx = 0.0;
  Marker left = Marker::white, right = Marker::white;

  /// 1 = white-white, 2 = white-black, 3 = black-black.
  int class_id() const {
    const int blacks = (left == Marker::black) + (right == Marker::black);
    return 1 + blacks;
  }
};

struct Sample {
  int size = 0;
  std::vector<float> image;    // size*size, row-major, values in [0,1]
  std::vector<uint8_t> labels;  // size*size, class ids (0 = background)

  bool operator==(const Sample&) const = default;
};

struct DatasetMeta {
  uint64_t seed = 0;
  uint32_t count = 0;
  uint32_t size = 0;
  uint32_t channels = 1;
  uint8_t n_classes = 4;

  bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;
};

/// Integer sampling ranges for image size s (the published ranges at s = 64,
/// scaled proportionally below that, keeping length > 2 * width drawable).
struct ObjectRanges {
  int l_lo, l_hi, w_lo, w_hi;
};
ObjectRanges object_ranges(int s);

/// Draws one object. Consumes the stream in a fixed order: class, length,
/// width, angle, marker-orientation bit, then center rejection samples.
ObjectSpec sample_object(Rng& rng, int s);

Sample render(const ObjectSpec& spec, int s);

Dataset generate(int n, uint64_t seed, int s);

/// Per-class pixel fractions over the whole dataset, indexed by class id.
std::array<double, 4> class_frequencies(const Dataset& ds);

void write_qtds(const Dataset& ds, const std::string& path);
Dataset read_qtds(const std::string& path);

/// View of a sample's image as a (1, 1, s, s) tensor.
Tensor4<float> sample_tensor(const Sample& s);

}  // namespace imex::qtips
