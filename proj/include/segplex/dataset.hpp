#pragma once

// Rating manifests, category merging into analysis image-sets, and the
// join of merged sets with extracted features.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "segplex/csv.hpp"
#include "segplex/error.hpp"
#include "segplex/features.hpp"

namespace segplex {

struct ManifestRow {
  std::string image_id;
  std::string image_path;
  std::string category;  // normalized, see normalize_category
  double raw_rating = 0.0;
  std::optional<long long> rater_count;  // carried, unused
};

struct DatasetManifest {
  std::string name;
  std::vector<ManifestRow> rows;
};

// Lower-case, spaces and hyphens to underscores, common singular/spelling aliases folded.
inline std::string normalize_category(std::string_view raw) {
  std::string s;
  for (char c : raw) {
    if (c == ' ' || c == '-') s += '_';
    else s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  static const std::map<std::string, std::string> aliases{
      {"scene", "scenes"},         {"object", "objects"},
      {"person", "persons"},       {"people", "persons"},
      {"painting", "paintings"},   {"interior", "interior_design"},
      {"advertisements", "advertisement"}, {"advertising", "advertisement"},
      {"visualisation", "visualization"},  {"visualisations", "visualization"},
      {"visualizations", "visualization"}, {"architectures", "architecture"}};
  if (auto it = aliases.find(s); it != aliases.end()) return it->second;
  return s;
}

inline std::string normalize_dataset_name(std::string_view raw) {
  std::string s;
  for (char c : raw)
    if (std::isalnum(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Declared category vocabularies of the known rating datasets; nullopt means any category is accepted.
inline std::optional<std::set<std::string>> category_vocabulary(std::string_view dataset) {
  const auto name = normalize_dataset_name(dataset);
  if (name == "savoias")
    return std::set<std::string>{"scenes",          "objects",       "art",          "suprematism",
                                 "interior_design", "advertisement", "visualization"};
  if (name == "ic9600")
    return std::set<std::string>{"abstract", "advertisement", "architecture", "objects",
                                 "paintings", "persons",      "scenes",       "transportation"};
  return std::nullopt;
}

inline const std::vector<std::string>& manifest_csv_header() {
  static const std::vector<std::string> h{"image_id", "image_path", "category", "raw_rating", "rater_count"};
  return h;
}

inline DatasetManifest load_manifest(std::istream& in, const std::string& dataset_name,
                                     const std::string& source = "<manifest>") {
  auto table = csv::read_table(in, manifest_csv_header(), source);
  DatasetManifest m;
  m.name = dataset_name;
  const auto vocab = category_vocabulary(dataset_name);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const auto where = source + ":" + std::to_string(table.line_numbers[i]) + ": ";
    ManifestRow row;
    row.image_id = f[0];
    row.image_path = f[1];
    row.category = normalize_category(f[2]);
    if (row.image_id.empty()) throw input_error(where + "empty image_id");
    if (!ids.insert(row.image_id).second) throw input_error(where + "duplicate image_id '" + row.image_id + "'");
    if (row.category.empty()) throw input_error(where + "empty category");
    if (vocab && !vocab->count(row.category))
      throw input_error(where + "category '" + f[2] + "' is not in the " + dataset_name + " vocabulary");
    auto rating = csv::parse_double(f[3]);
    if (!rating || !std::isfinite(*rating)) throw input_error(where + "raw_rating must be a finite number");
    row.raw_rating = *rating;
    if (!f[4].empty()) {
      auto rc = csv::parse_int(f[4]);
      if (!rc || *rc < 0) throw input_error(where + "rater_count must be a non-negative integer");
      row.rater_count = *rc;
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

enum class Normalization { min_max };

// Linear map onto [0,100] with the minimum at 0 and the maximum at 100.
inline std::vector<double> normalize_ratings(std::span<const double> raw, Normalization = Normalization::min_max) {
  if (raw.empty()) throw input_error("cannot normalize an empty rating vector");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (!(*hi > *lo)) throw input_error("cannot min-max normalize a constant rating vector");
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out;
  out.reserve(raw.size());
  for (double v : raw) out.push_back(std::clamp((v - min) / range * 100.0, 0.0, 100.0));
  return out;
}

struct GroupSource {
  std::string dataset;
  std::vector<std::string> categories;  // empty selects every non-excluded category
};

struct Grouping {
  std::string name;
  std::vector<GroupSource> sources;
};

// Text-heavy categories left out of wildcard selections.
inline const std::set<std::string>& default_excluded_categories() {
  static const std::set<std::string> s{"advertisement", "visualization"};
  return s;
}

// The eight analysis image-sets.
inline const std::vector<Grouping>& builtin_groupings() {
  static const std::vector<Grouping> g{
      {"RSIVL", {{"rsivl", {}}}},
      {"Sav. Scenes", {{"savoias", {"scenes", "objects"}}}},
      {"IC9. Scenes", {{"ic9600", {"scenes", "objects", "persons", "transportation", "architecture"}}}},
      {"Sav. Art", {{"savoias", {"art"}}}},
      {"Sav. Suprematism", {{"savoias", {"suprematism"}}}},
      {"IC9. Paintings", {{"ic9600", {"paintings"}}}},
      {"VISC", {{"visc", {}}}},
      {"Sav. Int", {{"savoias", {"interior_design"}}}},
  };
  return g;
}

// User-defined groupings shadow built-ins of the same name.
inline const Grouping& find_grouping(std::string_view name, std::span<const Grouping> custom = {}) {
  for (const auto& g : custom)
    if (g.name == name) return g;
  for (const auto& g : builtin_groupings())
    if (g.name == name) return g;
  throw config_error("unknown grouping '" + std::string(name) + "'");
}

struct SkeletonRow {
  std::string image_id;
  std::string image_path;
  std::string dataset;
  std::string category;
  double raw_rating = 0.0;
  double rating = 0.0;  // normalized over the merged set
};

struct ImageSetSkeleton {
  std::string name;
  std::vector<SkeletonRow> rows;
};

// Selects the grouping's rows and normalizes their ratings over the merged set.
inline ImageSetSkeleton merge_categories(std::span<const DatasetManifest> manifests, const Grouping& grouping,
                                         const std::set<std::string>& excluded = default_excluded_categories()) {
  ImageSetSkeleton out;
  out.name = grouping.name;
  std::set<std::string> ids;
  for (const auto& src : grouping.sources) {
    const DatasetManifest* manifest = nullptr;
    for (const auto& m : manifests)
      if (normalize_dataset_name(m.name) == normalize_dataset_name(src.dataset)) manifest = &m;
    if (!manifest)
      throw config_error("grouping '" + grouping.name + "' needs a manifest for dataset '" + src.dataset + "'");

    std::set<std::string> wanted;
    for (const auto& c : src.categories) wanted.insert(normalize_category(c));
    std::set<std::string> present;
    for (const auto& r : manifest->rows) present.insert(r.category);
    for (const auto& c : wanted)
      if (!present.count(c))
        throw config_error("grouping '" + grouping.name + "' references unknown category '" + c + "' of dataset '" +
                           src.dataset + "'");

    for (const auto& r : manifest->rows) {
      const bool selected = wanted.empty() ? !excluded.count(r.category) : wanted.count(r.category) > 0;
      if (!selected) continue;
      if (!ids.insert(r.image_id).second)
        throw input_error("image_id '" + r.image_id + "' appears in more than one source of '" + grouping.name + "'");
      out.rows.push_back({r.image_id, r.image_path, manifest->name, r.category, r.raw_rating, 0.0});
    }
  }
  if (out.rows.empty()) throw config_error("grouping '" + grouping.name + "' selects no images");

  std::vector<double> raw;
  raw.reserve(out.rows.size());
  for (const auto& r : out.rows) raw.push_back(r.raw_rating);
  const auto norm = normalize_ratings(raw);
  for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].rating = norm[i];
  return out;
}

struct ImageSetRow {
  std::string image_id;
  FeatureVector features;
  double rating = 0.0;  // in [0,100]
};

struct ImageSet {
  std::string name;
  std::vector<ImageSetRow> rows;
};

struct JoinResult {
  ImageSet image_set;
  std::vector<std::string> ignored_ids;  // feature rows not in the skeleton
};

inline JoinResult join_features(const ImageSetSkeleton& skeleton, std::span<const FeatureVector> features) {
  std::unordered_map<std::string, const FeatureVector*> by_id;
  for (const auto& fv : features)
    if (!by_id.emplace(fv.image_id, &fv).second)
      throw input_error("duplicate feature row for image '" + fv.image_id + "'");

  JoinResult out;
  out.image_set.name = skeleton.name;
  std::vector<std::string> missing;
  std::set<std::string> used;
  for (const auto& r : skeleton.rows) {
    auto it = by_id.find(r.image_id);
    if (it == by_id.end()) {
      missing.push_back(r.image_id);
      continue;
    }
    used.insert(r.image_id);
    out.image_set.rows.push_back({r.image_id, *it->second, r.rating});
  }
  if (!missing.empty()) throw missing_feature_error(std::move(missing));
  for (const auto& fv : features)
    if (!used.count(fv.image_id)) out.ignored_ids.push_back(fv.image_id);
  return out;
}

}  // namespace segplex
