#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptx/grid.hpp"

namespace ptx {

namespace fs = std::filesystem;

// One study: an image on disk, its patient, the image-level label and an
// optional pixel annotation.
struct ImageRecord {
  fs::path image_path;
  std::string patient_id;
  int label = 0;  // 1 = pneumothorax
  std::optional<fs::path> mask_path;
  int fold = -1;  // -1 until a FoldAssignment has been applied

  // Stable identifier used as the case key in score tables.
  std::string case_id() const { return image_path.stem().string(); }
};

struct ManifestSummary {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t with_mask = 0;
};

ManifestSummary summarize(std::span<const ImageRecord> records);

// Reads a comma-separated manifest with header row
// `image_path,patient_id,label[,mask_path]` (columns matched by name).
// Relative paths resolve against `data_root` when given, otherwise against the
// manifest's directory. Rows are numbered from 1, excluding the header.
std::vector<ImageRecord> load_manifest(const fs::path& path, const fs::path& data_root = {});

// Writes records with paths relative to `base_dir` when they lie below it.
void save_manifest(const fs::path& path, std::span<const ImageRecord> records,
                   const fs::path& base_dir = {});

// Patient-grouped k-fold split.
struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> patient_fold;
  std::vector<std::size_t> fold_images;    // images per fold
  std::vector<std::size_t> fold_patients;  // patients per fold

  int fold_of(const std::string& patient_id) const;
  // Copies fold indices into the records' `fold` field.
  void apply(std::span<ImageRecord> records) const;
};

// Greedy bin packing: patients in decreasing image-count order (ties broken
// by a seeded shuffle) go to the fold with the fewest images so far (ties to
// the lowest index).
FoldAssignment assign_folds(std::span<const ImageRecord> records, int k, std::uint64_t seed);

// Text mapping `patient_id<TAB>fold`, one patient per line, sorted by id.
void save_folds(const fs::path& path, const FoldAssignment& folds);
FoldAssignment load_folds(const fs::path& path);

// Decodes DICOM (any transfer syntax GDCM understands) or an 8/16-bit
// grayscale raster, min-max normalizes to [0,1] (constant images map to 0)
// and undoes MONOCHROME1 inversion.
Image load_image(const fs::path& path);
inline Image load_image(const ImageRecord& record) { return load_image(record.image_path); }

// Nonzero pixels are pneumothorax. Negatives and records without a mask file
// yield an all-zero mask of the requested shape.
Mask load_mask(const ImageRecord& record, int rows, int cols);

// Records usable for segmentation training: all negatives plus positives that
// carry a mask. Dropped records are logged.
std::vector<ImageRecord> segmentation_subset(std::span<const ImageRecord> records);

// Cross-validation roles for one experiment: the test fold, the next fold
// (mod k) for validation/model selection, the rest for training.
struct SplitRoles {
  int test_fold = 0;
  int validation_fold = 1;

  static SplitRoles for_test_fold(int test_fold, int k);
};

struct Split {
  std::vector<ImageRecord> train;
  std::vector<ImageRecord> validation;
  std::vector<ImageRecord> test;
};

Split split_records(std::span<const ImageRecord> records, const SplitRoles& roles);

}  // namespace ptx
