#pragma once

// Writes a small self-contained dataset to disk: one manifest, one record file
// and one grayscale PGM per image. Ratings are an exact linear function of the
// transformed counts so cross-validation results are known in advance.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipeline.hpp"

namespace fixture {

namespace fs = std::filesystem;

struct Image {
  std::string id;
  std::string category;
  std::size_t num_seg = 0;
  std::size_t num_class = 0;
  double raw_rating = 0.0;
};

struct Synthetic {
  fs::path root;
  fs::path manifest;
  fs::path records;
  std::vector<Image> images;
};

inline constexpr int kHeight = 20;
inline constexpr int kWidth = 24;

inline Synthetic write_synthetic(const fs::path& root, std::size_t n = 40, std::uint64_t seed = 1) {
  fs::remove_all(root);
  fs::create_directories(root / "images");
  Synthetic s{root, root / "manifest.csv", root / "records.jsonl", {}};

  std::mt19937_64 rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<double> ratings;
  while (s.images.size() < n) {
    const std::size_t seg = 2 + rng() % 120, cls = rng() % 25;
    const double rating = 20.0 + 5.0 * std::sqrt(double(seg)) + 3.0 * std::sqrt(double(cls));
    bool close = !used.insert({seg, cls}).second;
    for (double r : ratings) close = close || std::fabs(r - rating) < 1e-3;
    if (close) continue;
    ratings.push_back(rating);
    const auto i = s.images.size();
    s.images.push_back({"syn" + std::to_string(100 + i), i % 2 ? "urban" : "natural", seg, cls, rating});
  }

  std::ofstream manifest(s.manifest);
  manifest << "image_id,image_path,category,raw_rating,rater_count\n";
  std::ofstream records(s.records);
  records << R"({"format_version":"1","producer":"synthetic","created":"2024-01-01T00:00:00Z"})" << '\n';
  for (const auto& img : s.images) {
    manifest << img.id << ",images/" << img.id << ".pgm," << img.category << ','
             << segplex::csv::format_double(img.raw_rating) << ",10\n";

    nlohmann::ordered_json r;
    r["image_id"] = img.id;
    r["image_width"] = kWidth;
    r["image_height"] = kHeight;
    r["granularity"] = 64;
    r["segments"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < img.num_seg; ++k) {
      // One foreground column, at a position that cycles across the image.
      const long long col = static_cast<long long>(k % kWidth);
      std::vector<long long> counts{col * kHeight, kHeight};
      if (col + 1 < kWidth) counts.push_back((kWidth - col - 1) * kHeight);
      r["segments"].push_back({{"h", kHeight}, {"w", kWidth}, {"counts", counts}});
    }
    r["class_instances"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < img.num_class; ++k) r["class_instances"].push_back({{"label", "thing"}});
    records << r.dump() << '\n';

    std::ofstream pgm(root / "images" / (img.id + ".pgm"), std::ios::binary);
    pgm << "P5\n" << kWidth << ' ' << kHeight << "\n255\n";
    for (int p = 0; p < kWidth * kHeight; ++p) pgm.put(static_cast<char>(rng() % 256));
  }
  return s;
}

inline segplex::tools::PipelineConfig config_for(const Synthetic& s, const fs::path& out, bool symmetry = false) {
  nlohmann::json j{{"manifests", {"rsivl=" + s.manifest.string()}},
                   {"records", {s.records.string()}},
                   {"grouping", {"RSIVL", "Urban"}},
                   {"groupings", {{"Urban", {{{"dataset", "rsivl"}, {"categories", {"urban"}}}}}}},
                   {"seed", 7},
                   {"repeats", 3},
                   {"output_dir", out.string()},
                   {"fit_timestamp", "2024-01-01T00:00:00Z"}};
  if (symmetry) {
    j["symmetry"] = true;
    j["symmetry_scales"] = {4, 8, 16};
    j["resize_short_side"] = 32;
  }
  return segplex::tools::config_from_json(j);
}

// Every regular file under `dir` keyed by relative path, with its bytes.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

}  // namespace fixture
