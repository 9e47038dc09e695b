#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ptx/dataset.hpp"
#include "ptx/preprocess.hpp"

namespace ptx {

// Chest-like phantom: two bright lung ellipses over a smooth textured
// background; positives get a dark crescent hugging the lateral border of
// one lung, and the crescent is the ground-truth mask.
struct SynthSpec {
  int n_cases = 100;
  double positive_fraction = 0.5;
  double annotated_fraction = 1.0;  // positives that ship a mask file
  int image_side = 512;
  Interval lung_radius{0.13, 0.16};           // horizontal semi-axis / side
  Interval crescent_thickness{0.30, 0.45};    // radial depth / lung radius
  Interval crescent_extent_deg{80.0, 140.0};  // angular span
  Interval crescent_contrast{0.25, 0.35};     // intensity drop inside
  double texture_amplitude = 0.03;
  double noise_sigma = 0.03;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SynthCase {
  Image image;
  Mask mask;
};

// Labels of all cases: exactly round(n * positive_fraction) positives at
// seeded positions.
std::vector<int> synth_labels(const SynthSpec& spec);

// Renders case `index`. The background depends only on (seed, index), so the
// same index rendered with and without a lesion gives a paired image.
SynthCase render_case(const SynthSpec& spec, std::size_t index, bool positive);

// Writes images/case_XXXX.png (16-bit), masks/case_XXXX.png and
// manifest.csv under out_dir; returns the records in manifest order.
std::vector<ImageRecord> generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace ptx
