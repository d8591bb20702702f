#pragma once

// Segmentation-derived regressors: segment count, class-instance count,
// their square roots, and a multi-scale patch reflection-symmetry score.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segplex/csv.hpp"
#include "segplex/error.hpp"
#include "segplex/mask_io.hpp"

namespace segplex {

inline constexpr std::string_view kSqrtNumSeg = "sqrt_num_seg";
inline constexpr std::string_view kSqrtNumClass = "sqrt_num_class";
inline constexpr std::string_view kPatchSymm = "patch_symm";

class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int height, int width, double fill = 0.0)
      : GrayImage(height, width,
                  std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                          static_cast<std::size_t>(std::max(width, 0)),
                                      fill)) {}

  // Row-major intensities in [0,1].
  GrayImage(int height, int width, std::vector<double> intensities)
      : height_(height), width_(width), data_(std::move(intensities)) {
    if (height < 1 || width < 1) throw input_error("image dimensions must be at least 1x1");
    if (data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width))
      throw input_error("image data size does not match its dimensions");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0)) throw input_error("image intensities must lie in [0,1]");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  double at(int row, int col) const { return data_[offset(row, col)]; }
  double& at(int row, int col) { return data_[offset(row, col)]; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t offset(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Rec.601 luma of interleaved 8-bit samples. `channels` is 1 (gray), 3 (RGB) or 4 (RGBA, alpha ignored).
inline GrayImage gray_from_8bit(int height, int width, int channels, std::span<const std::uint8_t> samples) {
  if (channels != 1 && channels != 3 && channels != 4) throw input_error("unsupported channel count");
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (samples.size() != n * static_cast<std::size_t>(channels)) throw input_error("sample buffer size mismatch");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* px = samples.data() + i * static_cast<std::size_t>(channels);
    double v = channels == 1 ? px[0] : 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    out[i] = std::clamp(v / 255.0, 0.0, 1.0);
  }
  return GrayImage(height, width, std::move(out));
}

// Bilinear resampling with pixel-center alignment and edge clamping.
inline GrayImage resize_bilinear(const GrayImage& src, int height, int width) {
  if (height < 1 || width < 1) throw config_error("resize target must be at least 1x1");
  if (height == src.height() && width == src.width()) return src;
  std::vector<double> out(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      const double top = src.at(y0, x0) * (1 - wx) + src.at(y0, x1) * wx;
      const double bottom = src.at(y1, x0) * (1 - wx) + src.at(y1, x1) * wx;
      out[static_cast<std::size_t>(r) * width + c] = std::clamp(top * (1 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return GrayImage(height, width, std::move(out));
}

// Scales so the shorter side equals `short_side`, preserving aspect ratio. 0 disables resizing.
inline GrayImage resize_short_side(const GrayImage& src, int short_side) {
  if (short_side == 0) return src;
  if (short_side < 0) throw config_error("resize target must be non-negative");
  const int shorter = std::min(src.height(), src.width());
  const double f = static_cast<double>(short_side) / shorter;
  const int h = src.height() == shorter ? short_side : std::max(1, static_cast<int>(std::lround(src.height() * f)));
  const int w = src.width() == shorter ? short_side : std::max(1, static_cast<int>(std::lround(src.width() * f)));
  return resize_bilinear(src, h, w);
}

// Mean reflection symmetry of non-overlapping square patches, averaged over
// patch sizes. Per patch: 1 - (mean|p - fliplr(p)| + mean|p - flipud(p)|) / 2.
// The patch grid is centred in the image; partial edge patches are dropped.
inline double patch_symmetry(const GrayImage& image, std::span<const int> scales) {
  if (scales.empty()) throw config_error("patch_symmetry needs at least one patch size");
  const int limit = std::min(image.height(), image.width());
  for (int s : scales) {
    if (s < 2) throw config_error("patch size " + std::to_string(s) + " is smaller than 2");
    if (s > limit)
      throw config_error("patch size " + std::to_string(s) + " exceeds image size " + std::to_string(image.height()) +
                         "x" + std::to_string(image.width()));
  }

  double total = 0.0;
  for (int s : scales) {
    const int ny = image.height() / s;
    const int nx = image.width() / s;
    const int oy = (image.height() - ny * s) / 2;
    const int ox = (image.width() - nx * s) / 2;
    const double area = static_cast<double>(s) * s;
    double scale_sum = 0.0;
    for (int py = 0; py < ny; ++py) {
      for (int px = 0; px < nx; ++px) {
        const int r0 = oy + py * s;
        const int c0 = ox + px * s;
        double diff_h = 0.0;
        double diff_v = 0.0;
        for (int r = 0; r < s; ++r) {
          for (int c = 0; c < s; ++c) {
            const double v = image.at(r0 + r, c0 + c);
            diff_h += std::abs(v - image.at(r0 + r, c0 + s - 1 - c));
            diff_v += std::abs(v - image.at(r0 + s - 1 - r, c0 + c));
          }
        }
        scale_sum += 1.0 - (diff_h / area + diff_v / area) / 2.0;
      }
    }
    total += scale_sum / (static_cast<double>(ny) * nx);
  }
  return std::clamp(total / static_cast<double>(scales.size()), 0.0, 1.0);
}

struct FeatureConfig {
  bool symmetry = false;
  std::vector<int> scales{16, 32, 64};
  int resize_short_side = 256;
};

struct FeatureVector {
  std::string image_id;
  std::size_t num_seg = 0;
  std::size_t num_class = 0;
  double sqrt_num_seg = 0.0;
  double sqrt_num_class = 0.0;
  std::optional<double> patch_symm;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Every mask the segmenter produced counts; overlapping or nested masks are not merged.
inline std::size_t count_segments(const SegmentationRecord& record) { return record.segments.size(); }

// Repeated labels count once per instance.
inline std::size_t count_class_instances(const SegmentationRecord& record) { return record.class_instances.size(); }

inline FeatureVector make_feature_vector(std::string image_id, std::size_t num_seg, std::size_t num_class,
                                         std::optional<double> patch_symm = std::nullopt) {
  FeatureVector fv;
  fv.image_id = std::move(image_id);
  fv.num_seg = num_seg;
  fv.num_class = num_class;
  fv.sqrt_num_seg = std::sqrt(static_cast<double>(num_seg));
  fv.sqrt_num_class = std::sqrt(static_cast<double>(num_class));
  fv.patch_symm = patch_symm;
  return fv;
}

// `image` is the raw grayscale image; it is resized per `config` before symmetry analysis.
inline FeatureVector build_feature_vector(const SegmentationRecord& record, const GrayImage* image,
                                          const FeatureConfig& config) {
  std::optional<double> symm;
  if (config.symmetry) {
    if (image == nullptr)
      throw config_error("patch symmetry requested but no image provided for '" + record.image_id + "'");
    symm = patch_symmetry(resize_short_side(*image, config.resize_short_side), config.scales);
  }
  return make_feature_vector(record.image_id, count_segments(record), count_class_instances(record), symm);
}

// Value of a named regressor, or nullopt when the vector does not carry it.
inline std::optional<double> feature_value(const FeatureVector& fv, std::string_view label) {
  if (label == kSqrtNumSeg) return fv.sqrt_num_seg;
  if (label == kSqrtNumClass) return fv.sqrt_num_class;
  if (label == kPatchSymm) return fv.patch_symm;
  return std::nullopt;
}

inline bool is_known_regressor(std::string_view label) {
  return label == kSqrtNumSeg || label == kSqrtNumClass || label == kPatchSymm;
}

// ---------------------------------------------------------------------------
// Feature table

inline const std::vector<std::string>& feature_csv_header() {
  static const std::vector<std::string> h{"image_id",     "num_seg",        "num_class",
                                          "sqrt_num_seg", "sqrt_num_class", "patch_symm"};
  return h;
}

inline void write_feature_csv(std::ostream& out, std::span<const FeatureVector> rows,
                              const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) out << '#' << c << '\n';
  out << csv::join(feature_csv_header()) << '\n';
  for (const auto& fv : rows)
    out << csv::join({fv.image_id, std::to_string(fv.num_seg), std::to_string(fv.num_class),
                      csv::format_double(fv.sqrt_num_seg), csv::format_double(fv.sqrt_num_class),
                      fv.patch_symm ? csv::format_double(*fv.patch_symm) : std::string()})
        << '\n';
}

struct FeatureTable {
  std::vector<FeatureVector> rows;
  std::vector<std::string> comments;
};

inline FeatureTable read_feature_csv(std::istream& in, const std::string& source = "<features>") {
  auto table = csv::read_table(in, feature_csv_header(), source);
  FeatureTable out;
  out.comments = std::move(table.comments);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const auto where = source + ":" + std::to_string(table.line_numbers[i]) + ": ";
    auto seg = csv::parse_int(f[1]);
    auto cls = csv::parse_int(f[2]);
    if (f[0].empty()) throw input_error(where + "empty image_id");
    if (!seg || *seg < 0 || !cls || *cls < 0) throw input_error(where + "counts must be non-negative integers");
    std::optional<double> symm;
    if (!f[5].empty()) {
      symm = csv::parse_double(f[5]);
      if (!symm || !(*symm >= 0.0 && *symm <= 1.0)) throw input_error(where + "patch_symm must lie in [0,1]");
    }
    auto fv = make_feature_vector(f[0], static_cast<std::size_t>(*seg), static_cast<std::size_t>(*cls), symm);
    if (csv::parse_double(f[3]) != fv.sqrt_num_seg || csv::parse_double(f[4]) != fv.sqrt_num_class)
      throw input_error(where + "sqrt columns do not match the counts");
    out.rows.push_back(std::move(fv));
  }
  return out;
}

}  // namespace segplex
