#include "ptx/dataset.hpp"

#include <gdcmImage.h>
#include <gdcmImageReader.h>
#include <gdcmPhotometricInterpretation.h>
#include <gdcmPixelFormat.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <random>
#include <sstream>
#include <unordered_map>

namespace ptx {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

// Relative to base when p lies below it; unchanged otherwise.
fs::path relativize(const fs::path& p, const fs::path& base) {
  if (base.empty()) return p;
  auto rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p;
  return rel;
}

template <typename T>
void widen(const char* raw, std::size_t count, std::vector<double>& out) {
  out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    T v;
    std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
    out[i] = static_cast<double>(v);
  }
}

Image normalize(int rows, int cols, const std::vector<double>& raw, bool inverted) {
  Image img(rows, cols);
  if (raw.empty()) return img;
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  auto out = img.values();
  if (range <= 0.0) return img;  // constant image -> zeros
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = (raw[i] - lo) / range;
    if (inverted) v = 1.0 - v;
    out[i] = static_cast<float>(v);
  }
  return img;
}

bool has_dicom_preamble(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.seekg(128);
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, "DICM", 4) == 0;
}

std::optional<Image> read_dicom(const fs::path& path) {
  gdcm::ImageReader reader;
  reader.SetFileName(path.string().c_str());
  if (!reader.Read()) return std::nullopt;
  const gdcm::Image& dcm = reader.GetImage();
  if (dcm.GetNumberOfDimensions() > 2 && dcm.GetDimension(2) > 1) {
    throw Error("multi-frame DICOM is not supported: " + path.string());
  }
  const gdcm::PixelFormat& pf = dcm.GetPixelFormat();
  if (pf.GetSamplesPerPixel() != 1) {
    throw Error("DICOM is not single-channel grayscale: " + path.string());
  }
  const int cols = static_cast<int>(dcm.GetDimension(0));
  const int rows = static_cast<int>(dcm.GetDimension(1));
  std::vector<char> buffer(dcm.GetBufferLength());
  if (!dcm.GetBuffer(buffer.data())) throw Error("cannot decode DICOM pixel data: " + path.string());

  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (buffer.size() < count * pf.GetPixelSize()) throw Error("truncated DICOM pixel data: " + path.string());
  std::vector<double> raw;
  switch (pf.GetScalarType()) {
    case gdcm::PixelFormat::UINT8: widen<std::uint8_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::INT8: widen<std::int8_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::UINT16: widen<std::uint16_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::INT16: widen<std::int16_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::UINT32: widen<std::uint32_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::INT32: widen<std::int32_t>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::FLOAT32: widen<float>(buffer.data(), count, raw); break;
    case gdcm::PixelFormat::FLOAT64: widen<double>(buffer.data(), count, raw); break;
    default: throw Error("unsupported DICOM pixel format: " + path.string());
  }
  const bool inverted =
      dcm.GetPhotometricInterpretation() == gdcm::PhotometricInterpretation::MONOCHROME1;
  return normalize(rows, cols, raw, inverted);
}

std::optional<Image> read_raster(const fs::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) return std::nullopt;
  if (mat.channels() != 1) throw Error("raster image is not single-channel grayscale: " + path.string());
  cv::Mat as_double;
  mat.convertTo(as_double, CV_64F);
  std::vector<double> raw(as_double.begin<double>(), as_double.end<double>());
  return normalize(mat.rows, mat.cols, raw, false);
}

}  // namespace

ManifestSummary summarize(std::span<const ImageRecord> records) {
  ManifestSummary s;
  for (const auto& r : records) {
    (r.label == 1 ? s.positives : s.negatives) += 1;
    if (r.mask_path) ++s.with_mask;
  }
  return s;
}

std::vector<ImageRecord> load_manifest(const fs::path& path, const fs::path& data_root) {
  std::ifstream in(path);
  if (!in) throw Error("manifest not found: " + path.string());
  const fs::path base = data_root.empty() ? path.parent_path() : data_root;

  std::string line;
  if (!std::getline(in, line)) {
    spdlog::warn("manifest {} is empty", path.string());
    return {};
  }
  const auto header = split_row(line);
  auto column = [&](std::string_view name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int col_image = column("image_path");
  const int col_patient = column("patient_id");
  const int col_label = column("label");
  const int col_mask = column("mask_path");
  if (col_image < 0 || col_patient < 0 || col_label < 0) {
    throw Error("manifest " + path.string() + " must have columns image_path, patient_id, label");
  }

  std::vector<ImageRecord> records;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_row(line);
    auto cell = [&](int col) -> std::string {
      return col >= 0 && col < static_cast<int>(cells.size()) ? cells[col] : std::string{};
    };
    const std::string where = "manifest " + path.string() + " row " + std::to_string(row);
    ImageRecord rec;
    rec.image_path = resolve(cell(col_image), base);
    rec.patient_id = cell(col_patient);
    if (cell(col_image).empty()) throw Error(where + ": empty image_path");
    if (rec.patient_id.empty()) throw Error(where + ": empty patient_id");
    const std::string label = cell(col_label);
    if (label != "0" && label != "1") throw Error(where + ": label must be 0 or 1, got '" + label + "'");
    rec.label = label == "1" ? 1 : 0;
    if (const std::string mask = cell(col_mask); !mask.empty()) {
      rec.mask_path = resolve(mask, base);
      if (!fs::exists(*rec.mask_path)) {
        throw Error(where + ": mask file not found: " + rec.mask_path->string());
      }
    }
    records.push_back(std::move(rec));
  }

  if (records.empty()) {
    spdlog::warn("manifest {} contains no records", path.string());
  } else {
    const auto s = summarize(records);
    spdlog::info("manifest {}: {} records, {} positive, {} negative, {} with mask", path.string(),
                 records.size(), s.positives, s.negatives, s.with_mask);
  }
  return records;
}

void save_manifest(const fs::path& path, std::span<const ImageRecord> records, const fs::path& base_dir) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  out << "image_path,patient_id,label,mask_path\n";
  for (const auto& r : records) {
    out << relativize(r.image_path, base_dir).generic_string() << ',' << r.patient_id << ',' << r.label
        << ',';
    if (r.mask_path) out << relativize(*r.mask_path, base_dir).generic_string();
    out << '\n';
  }
}

int FoldAssignment::fold_of(const std::string& patient_id) const {
  auto it = patient_fold.find(patient_id);
  if (it == patient_fold.end()) throw Error("patient has no fold assignment: " + patient_id);
  return it->second;
}

void FoldAssignment::apply(std::span<ImageRecord> records) const {
  for (auto& r : records) r.fold = fold_of(r.patient_id);
}

FoldAssignment assign_folds(std::span<const ImageRecord> records, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("number of folds must be at least 2");

  std::vector<std::string> patients;
  std::unordered_map<std::string, std::size_t> images_per_patient;
  for (const auto& r : records) {
    if (r.patient_id.empty()) throw Error("record without patient_id: " + r.image_path.string());
    if (images_per_patient[r.patient_id]++ == 0) patients.push_back(r.patient_id);
  }
  if (static_cast<std::size_t>(k) > patients.size()) {
    throw Error("cannot split " + std::to_string(patients.size()) + " patients into " +
                std::to_string(k) + " folds");
  }

  std::sort(patients.begin(), patients.end());
  std::mt19937_64 rng(seed);
  std::shuffle(patients.begin(), patients.end(), rng);
  std::stable_sort(patients.begin(), patients.end(), [&](const auto& a, const auto& b) {
    return images_per_patient[a] > images_per_patient[b];
  });

  FoldAssignment out;
  out.k = k;
  out.fold_images.assign(k, 0);
  out.fold_patients.assign(k, 0);
  for (const auto& p : patients) {
    const auto smallest = std::min_element(out.fold_images.begin(), out.fold_images.end());
    const int fold = static_cast<int>(smallest - out.fold_images.begin());
    out.patient_fold[p] = fold;
    out.fold_images[fold] += images_per_patient[p];
    out.fold_patients[fold] += 1;
  }

  for (int f = 0; f < k; ++f) {
    std::size_t pos = 0;
    for (const auto& r : records) pos += (out.patient_fold[r.patient_id] == f && r.label == 1);
    spdlog::info("fold {}: {} images ({} positive), {} patients", f, out.fold_images[f], pos,
                 out.fold_patients[f]);
  }
  return out;
}

void save_folds(const fs::path& path, const FoldAssignment& folds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write fold file: " + path.string());
  out << "# folds " << folds.k << '\n';
  for (const auto& [patient, fold] : folds.patient_fold) out << patient << '\t' << fold << '\n';
}

FoldAssignment load_folds(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("fold file not found: " + path.string());
  FoldAssignment out;
  std::string line;
  int max_fold = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# folds ", 0) == 0) {
      out.k = std::stoi(line.substr(8));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error("malformed fold file line: " + line);
    const int fold = std::stoi(line.substr(tab + 1));
    out.patient_fold[line.substr(0, tab)] = fold;
    max_fold = std::max(max_fold, fold);
  }
  if (out.k == 0) out.k = max_fold + 1;
  out.fold_patients.assign(out.k, 0);
  out.fold_images.assign(out.k, 0);
  for (const auto& [patient, fold] : out.patient_fold) {
    if (fold < 0 || fold >= out.k) throw Error("fold index out of range for patient " + patient);
    out.fold_patients[fold] += 1;
  }
  return out;
}

Image load_image(const fs::path& path) {
  if (!fs::exists(path)) throw Error("image not found: " + path.string());
  const auto ext = path.extension().string();
  const bool dicom_hint = ext == ".dcm" || ext == ".DCM" || ext == ".dicom" || has_dicom_preamble(path);
  std::optional<Image> img = dicom_hint ? read_dicom(path) : read_raster(path);
  if (!img) img = dicom_hint ? read_raster(path) : read_dicom(path);
  if (!img) throw Error("cannot decode image: " + path.string());
  return *std::move(img);
}

Mask load_mask(const ImageRecord& record, int rows, int cols) {
  Mask mask(rows, cols);
  if (record.label == 0 || !record.mask_path) return mask;
  cv::Mat mat = cv::imread(record.mask_path->string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw Error("cannot decode mask: " + record.mask_path->string());
  if (mat.channels() != 1) throw Error("mask is not single-channel: " + record.mask_path->string());
  if (mat.rows != rows || mat.cols != cols) {
    throw Error("mask shape differs from image shape: " + record.mask_path->string());
  }
  cv::Mat as_double;
  mat.convertTo(as_double, CV_64F);
  auto out = mask.values();
  std::size_t i = 0;
  for (auto it = as_double.begin<double>(); it != as_double.end<double>(); ++it) out[i++] = *it != 0.0;
  return mask;
}

std::vector<ImageRecord> segmentation_subset(std::span<const ImageRecord> records) {
  std::vector<ImageRecord> kept;
  std::size_t dropped = 0;
  for (const auto& r : records) {
    if (r.label == 1 && !r.mask_path) {
      ++dropped;
      spdlog::debug("segmentation subset: dropping unannotated positive {}", r.image_path.string());
      continue;
    }
    kept.push_back(r);
  }
  spdlog::info("segmentation subset: {} of {} records kept, {} unannotated positives dropped",
               kept.size(), records.size(), dropped);
  return kept;
}

SplitRoles SplitRoles::for_test_fold(int test_fold, int k) {
  if (k < 2) throw UsageError("number of folds must be at least 2");
  if (test_fold < 0 || test_fold >= k) {
    throw UsageError("fold " + std::to_string(test_fold) + " outside 0.." + std::to_string(k - 1));
  }
  return {test_fold, (test_fold + 1) % k};
}

Split split_records(std::span<const ImageRecord> records, const SplitRoles& roles) {
  Split s;
  for (const auto& r : records) {
    if (r.fold < 0) throw Error("record has no fold assigned: " + r.image_path.string());
    if (r.fold == roles.test_fold) {
      s.test.push_back(r);
    } else if (r.fold == roles.validation_fold) {
      s.validation.push_back(r);
    } else {
      s.train.push_back(r);
    }
  }
  return s;
}

}  // namespace ptx
