#include "ptx/synthgen.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "ptx/raster_io.hpp"

namespace ptx {

namespace {

constexpr std::uint64_t kLesionStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kLayoutStream = 0xD1B54A32D192ED03ULL;
constexpr double kPi = std::numbers::pi;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

double uniform(std::mt19937_64& rng, const Interval& i) { return uniform(rng, i.lo, i.hi); }

struct Lung {
  double cx, cy, ax, ay, brightness;
};

struct Wave {
  double kx, ky, phase, amplitude;
};

std::string case_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", index);
  return buf;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_cases < 0) throw UsageError("synthgen: n_cases must be non-negative");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw UsageError("synthgen: positive fraction outside [0,1]");
  }
  if (!(annotated_fraction >= 0.0 && annotated_fraction <= 1.0)) {
    throw UsageError("synthgen: annotated fraction outside [0,1]");
  }
  if (image_side < 64) throw UsageError("synthgen: image side must be at least 64");
  for (const Interval* i : {&lung_radius, &crescent_thickness, &crescent_extent_deg, &crescent_contrast}) {
    if (!(i->lo <= i->hi) || !std::isfinite(i->lo) || !std::isfinite(i->hi)) {
      throw UsageError("synthgen: invalid parameter range");
    }
  }
  if (lung_radius.lo <= 0.0 || lung_radius.hi > 0.2) throw UsageError("synthgen: lung radius outside (0, 0.2]");
  if (crescent_thickness.lo <= 0.0 || crescent_thickness.hi >= 1.0) {
    throw UsageError("synthgen: crescent thickness outside (0,1)");
  }
  if (crescent_extent_deg.lo <= 0.0 || crescent_extent_deg.hi > 180.0) {
    throw UsageError("synthgen: crescent extent outside (0,180]");
  }
}

std::vector<int> synth_labels(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.n_cases);
  const auto positives = static_cast<std::size_t>(std::lround(spec.positive_fraction * spec.n_cases));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = record_rng(spec.seed ^ kLayoutStream, 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < positives; ++i) labels[order[i]] = 1;
  return labels;
}

SynthCase render_case(const SynthSpec& spec, std::size_t index, bool positive) {
  spec.validate();
  const int side = spec.image_side;
  const double s = side;
  auto rng = record_rng(spec.seed, index);

  const double base = uniform(rng, 0.12, 0.2);
  std::array<Wave, 3> waves;
  for (auto& w : waves) {
    const double freq = uniform(rng, 1.0, 3.0) * 2.0 * kPi / s;
    const double dir = uniform(rng, 0.0, kPi);
    w = {freq * std::cos(dir), freq * std::sin(dir), uniform(rng, 0.0, 2.0 * kPi), spec.texture_amplitude};
  }
  std::array<Lung, 2> lungs;
  for (int k = 0; k < 2; ++k) {
    const double side_sign = k == 0 ? -1.0 : 1.0;
    const double ax = uniform(rng, spec.lung_radius) * s;
    lungs[k] = {s / 2.0 + side_sign * uniform(rng, 0.19, 0.22) * s, uniform(rng, 0.47, 0.52) * s, ax,
                ax * uniform(rng, 2.0, 2.2), uniform(rng, 0.4, 0.5)};
  }

  SynthCase out{Image(side, side), Mask(side, side)};
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double v = base;
      for (const auto& w : waves) v += w.amplitude * std::cos(w.kx * c + w.ky * r + w.phase);
      for (const auto& l : lungs) {
        const double u = (c - l.cx) / l.ax;
        const double t = (r - l.cy) / l.ay;
        const double rr = u * u + t * t;
        if (rr < 1.0) v += l.brightness * std::sqrt(1.0 - rr);
      }
      out.image(r, c) = static_cast<float>(v);
    }
  }

  if (positive) {
    auto lesion_rng = record_rng(spec.seed ^ kLesionStream, index);
    const Lung& l = lungs[std::uniform_int_distribution<int>(0, 1)(lesion_rng)];
    const double lateral = l.cx > s / 2.0 ? 0.0 : kPi;
    // Centered below the lateral point of the lung.
    const double offset = uniform(lesion_rng, 10.0, 60.0) * kPi / 180.0;
    const double center = lateral == 0.0 ? offset : kPi - offset;
    const double half_extent = uniform(lesion_rng, spec.crescent_extent_deg) * kPi / 360.0;
    const double thickness = uniform(lesion_rng, spec.crescent_thickness);
    const double contrast = uniform(lesion_rng, spec.crescent_contrast);

    const int r0 = std::max(0, static_cast<int>(l.cy - l.ay) - 1);
    const int r1 = std::min(side - 1, static_cast<int>(l.cy + l.ay) + 1);
    const int c0 = std::max(0, static_cast<int>(l.cx - l.ax) - 1);
    const int c1 = std::min(side - 1, static_cast<int>(l.cx + l.ax) + 1);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const double u = (c - l.cx) / l.ax;
        const double t = (r - l.cy) / l.ay;
        const double radius = std::sqrt(u * u + t * t);
        if (radius >= 1.0) continue;
        const double d = std::remainder(std::atan2(t, u) - center, 2.0 * kPi);
        if (std::abs(d) >= half_extent) continue;
        const double taper = std::cos(0.5 * kPi * d / half_extent);
        if (radius <= 1.0 - thickness * taper) continue;
        out.mask(r, c) = 1;
        out.image(r, c) -= static_cast<float>(contrast);
      }
    }
  }

  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  for (float& v : out.image.values()) v = std::clamp(static_cast<float>(v + noise(rng)), 0.0f, 1.0f);
  return out;
}

std::vector<ImageRecord> generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  const auto labels = synth_labels(spec);

  // Patient groups of 1-3 images so fold grouping is exercised.
  auto layout = record_rng(spec.seed ^ kLayoutStream, 1);
  std::discrete_distribution<int> group_size({0.0, 0.7, 0.2, 0.1});
  std::bernoulli_distribution annotated(spec.annotated_fraction);

  std::vector<ImageRecord> records;
  int patient = 0;
  int remaining_in_group = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (remaining_in_group == 0) {
      ++patient;
      remaining_in_group = group_size(layout);
    }
    --remaining_in_group;
    const auto c = render_case(spec, i, labels[i] == 1);
    const std::string name = case_name(i);
    ImageRecord rec;
    rec.image_path = out_dir / "images" / (name + ".png");
    char pid[16];
    std::snprintf(pid, sizeof pid, "P%04d", patient);
    rec.patient_id = pid;
    rec.label = labels[i];
    save_image_png(rec.image_path, c.image);
    const bool with_mask = labels[i] == 0 || annotated(layout);
    if (with_mask) {
      rec.mask_path = out_dir / "masks" / (name + ".png");
      save_mask_png(*rec.mask_path, c.mask);
    }
    records.push_back(std::move(rec));
  }
  save_manifest(out_dir / "manifest.csv", records, out_dir);
  spdlog::info("synthgen: wrote {} cases ({} patients) to {}", records.size(), patient, out_dir.string());
  return records;
}

}  // namespace ptx
