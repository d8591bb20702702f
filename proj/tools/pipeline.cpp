#include "pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "image_io.hpp"
#include "segplex/csv.hpp"
#include "segplex/mask_io.hpp"
#include "segplex/regress.hpp"

namespace segplex::tools {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kRngDescription = "mt19937_64 seeded with splitmix64(seed ^ splitmix64(repeat_index))";

std::vector<std::string> as_string_list(const json& v, const char* key) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw config_error(std::string(key) + ": expected a string or an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw config_error(std::string(key) + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<std::string> parse_spec(const json& v) {
  std::vector<std::string> spec;
  if (v.is_array()) return as_string_list(v, "model_specs");
  if (!v.is_string()) throw config_error("model_specs: each spec is a string 'a+b' or an array of labels");
  std::stringstream ss(v.get<std::string>());
  std::string part;
  while (std::getline(ss, part, '+'))
    if (!part.empty()) spec.push_back(part);
  return spec;
}

template <typename T>
T get_number(const json& v, const char* key) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw config_error(std::string(key) + ": expected a number");
  } else {
    if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
      throw config_error(std::string(key) + ": expected a non-negative integer");
  }
  return v.get<T>();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw error("failed writing '" + path.string() + "'");
}

std::ifstream open_input(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open " + what + " '" + path.string() + "'");
  return in;
}

std::string hash_comment(const PipelineConfig& c) { return "config_hash=" + config_hash(c); }

void require_hash(const std::vector<std::string>& comments, const PipelineConfig& c, const std::string& source) {
  const auto expected = hash_comment(c);
  for (const auto& line : comments)
    if (line.rfind("config_hash=", 0) == 0) {
      if (line == expected) return;
      throw input_error(source + " was produced by a different configuration (" + line + ", expected " + expected +
                        "); refusing to mix outputs");
    }
  throw input_error(source + " carries no config_hash; refusing to use it");
}

void require_hash(const json& doc, const PipelineConfig& c, const std::string& source) {
  const auto expected = config_hash(c);
  const auto it = doc.find("config_hash");
  if (it == doc.end() || !it->is_string()) throw input_error(source + " carries no config_hash; refusing to use it");
  if (*it != expected)
    throw input_error(source + " was produced by a different configuration (config_hash=" + it->get<std::string>() +
                      ", expected " + expected + "); refusing to mix outputs");
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<DatasetManifest> load_manifests(const PipelineConfig& c) {
  std::vector<DatasetManifest> out;
  for (const auto& m : c.manifests) {
    auto in = open_input(m.path, "manifest");
    out.push_back(load_manifest(in, m.dataset, m.path));
  }
  return out;
}

fs::path features_path(const PipelineConfig& c) { return fs::path(c.output_dir) / "features.csv"; }

std::vector<FeatureVector> load_features(const PipelineConfig& c) {
  const auto path = features_path(c);
  auto in = open_input(path, "feature table (run 'extract' first)");
  auto table = read_feature_csv(in, path.string());
  require_hash(table.comments, c, path.string());
  return std::move(table.rows);
}

std::vector<ImageSet> build_image_sets(const PipelineConfig& c, const std::vector<DatasetManifest>& manifests,
                                       const std::vector<FeatureVector>& features, std::ostream& log) {
  if (c.grouping.empty()) throw config_error("no image-sets requested (set 'grouping')");
  std::vector<ImageSet> sets;
  for (const auto& name : c.grouping) {
    const auto& g = find_grouping(name, c.groupings);
    auto joined = join_features(merge_categories(manifests, g), features);
    if (!joined.ignored_ids.empty())
      log << "note: " << joined.ignored_ids.size() << " feature row(s) not in image-set '" << name << "' ignored\n";
    sets.push_back(std::move(joined.image_set));
  }
  return sets;
}

fs::path cv_stem(const PipelineConfig& c, const std::string& set, const std::vector<std::string>& spec) {
  return fs::path(c.output_dir) / "cv" / (slug(set) + "__" + spec_name(spec));
}

fs::path with_suffix(const fs::path& stem, const std::string& suffix) { return stem.string() + suffix; }

std::string optional_number(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); }

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) : path_(fs::path(dir) / ".segplex.lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f)
      throw error("output directory '" + dir + "' is locked by another run (remove " + path_.string() +
                  " if it is stale)");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

void print_exception(std::ostream& log, const std::exception& e, int depth = 0) {
  log << (depth == 0 ? "error: " : "  caused by: ") << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_exception(log, inner, depth + 1);
  } catch (...) {
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw config_error("configuration must be an object");
  static const std::set<std::string> known{
      "manifests", "records",      "images_root",     "grouping",          "groupings",      "model_specs",
      "k",         "repeats",      "repeat_numerator", "repeat_min",       "repeat_max",     "seed",
      "cv_mode",   "symmetry",     "symmetry_scales", "resize_short_side", "bins_per_axis",  "output_dir",
      "fit_timestamp"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw config_error("unknown configuration key '" + it.key() + "'");

  PipelineConfig c;
  c.model_specs = {{std::string(kSqrtNumSeg)}, {std::string(kSqrtNumClass)},
                   {std::string(kSqrtNumSeg), std::string(kSqrtNumClass)}};
  if (auto it = j.find("manifests"); it != j.end()) {
    if (!it->is_array()) throw config_error("manifests: expected an array");
    for (const auto& m : *it) {
      if (m.is_string()) {
        const auto s = m.get<std::string>();
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw config_error("manifests: expected 'dataset=path', got '" + s + "'");
        c.manifests.push_back({s.substr(0, eq), s.substr(eq + 1)});
      } else if (m.is_object() && m.contains("dataset") && m.contains("path")) {
        c.manifests.push_back({m.at("dataset").get<std::string>(), m.at("path").get<std::string>()});
      } else {
        throw config_error("manifests: each entry is 'dataset=path' or {dataset, path}");
      }
    }
  }
  if (auto it = j.find("records"); it != j.end()) c.records = as_string_list(*it, "records");
  if (auto it = j.find("images_root"); it != j.end()) c.images_root = it->get<std::string>();
  if (auto it = j.find("grouping"); it != j.end()) c.grouping = as_string_list(*it, "grouping");
  if (auto it = j.find("groupings"); it != j.end()) {
    if (!it->is_object()) throw config_error("groupings: expected an object keyed by image-set name");
    for (auto g = it->begin(); g != it->end(); ++g) {
      Grouping grouping{g.key(), {}};
      if (!g->is_array()) throw config_error("groupings." + g.key() + ": expected an array of sources");
      for (const auto& src : *g) {
        if (!src.is_object() || !src.contains("dataset"))
          throw config_error("groupings." + g.key() + ": each source needs a 'dataset'");
        GroupSource gs{src.at("dataset").get<std::string>(), {}};
        if (src.contains("categories")) gs.categories = as_string_list(src.at("categories"), "categories");
        grouping.sources.push_back(std::move(gs));
      }
      c.groupings.push_back(std::move(grouping));
    }
  }
  if (auto it = j.find("model_specs"); it != j.end()) {
    c.model_specs.clear();
    if (it->is_string()) c.model_specs.push_back(parse_spec(*it));
    else if (it->is_array())
      for (const auto& s : *it) c.model_specs.push_back(parse_spec(s));
    else throw config_error("model_specs: expected an array");
  }
  if (auto it = j.find("k"); it != j.end()) c.k = get_number<std::size_t>(*it, "k");
  if (auto it = j.find("repeats"); it != j.end()) {
    if (it->is_string()) {
      if (*it != "auto") throw config_error("repeats: expected an integer or \"auto\"");
    } else {
      c.repeats = get_number<std::size_t>(*it, "repeats");
    }
  }
  if (auto it = j.find("repeat_numerator"); it != j.end())
    c.repeat_schedule.numerator = get_number<double>(*it, "repeat_numerator");
  if (auto it = j.find("repeat_min"); it != j.end()) c.repeat_schedule.min_repeats = get_number<std::size_t>(*it, "repeat_min");
  if (auto it = j.find("repeat_max"); it != j.end()) c.repeat_schedule.max_repeats = get_number<std::size_t>(*it, "repeat_max");
  if (auto it = j.find("seed"); it != j.end()) c.seed = get_number<std::uint64_t>(*it, "seed");
  if (auto it = j.find("cv_mode"); it != j.end()) {
    const auto m = it->get<std::string>();
    if (m == "per_fold") c.cv_mode = CvMode::per_fold;
    else if (m == "pooled") c.cv_mode = CvMode::pooled;
    else throw config_error("cv_mode: expected 'per_fold' or 'pooled'");
  }
  if (auto it = j.find("symmetry"); it != j.end()) {
    if (!it->is_boolean()) throw config_error("symmetry: expected a boolean");
    c.features.symmetry = it->get<bool>();
  }
  if (auto it = j.find("symmetry_scales"); it != j.end()) {
    if (!it->is_array()) throw config_error("symmetry_scales: expected an array of integers");
    c.features.scales.clear();
    for (const auto& s : *it) c.features.scales.push_back(get_number<int>(s, "symmetry_scales"));
  }
  if (auto it = j.find("resize_short_side"); it != j.end())
    c.features.resize_short_side = get_number<int>(*it, "resize_short_side");
  if (auto it = j.find("bins_per_axis"); it != j.end()) c.bins_per_axis = get_number<std::size_t>(*it, "bins_per_axis");
  if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = it->get<std::string>();
  if (auto it = j.find("fit_timestamp"); it != j.end()) c.fit_timestamp = it->get<std::string>();
  return c;
}

ordered_json config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["manifests"] = ordered_json::array();
  for (const auto& m : c.manifests) j["manifests"].push_back({{"dataset", m.dataset}, {"path", m.path}});
  j["records"] = c.records;
  j["images_root"] = c.images_root;
  j["grouping"] = c.grouping;
  ordered_json groupings = ordered_json::object();
  for (const auto& g : c.groupings) {
    ordered_json sources = ordered_json::array();
    for (const auto& s : g.sources) sources.push_back({{"dataset", s.dataset}, {"categories", s.categories}});
    groupings[g.name] = std::move(sources);
  }
  j["groupings"] = std::move(groupings);
  j["model_specs"] = ordered_json::array();
  for (const auto& s : c.model_specs) j["model_specs"].push_back(spec_name(s));
  j["k"] = c.k;
  j["repeats"] = c.repeats ? ordered_json(*c.repeats) : ordered_json("auto");
  j["repeat_numerator"] = c.repeat_schedule.numerator;
  j["repeat_min"] = c.repeat_schedule.min_repeats;
  j["repeat_max"] = c.repeat_schedule.max_repeats;
  j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
  j["cv_mode"] = to_string(c.cv_mode);
  j["symmetry"] = c.features.symmetry;
  j["symmetry_scales"] = c.features.scales;
  j["resize_short_side"] = c.features.resize_short_side;
  j["bins_per_axis"] = c.bins_per_axis;
  return j;
}

std::string config_hash(const PipelineConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void check_config(const PipelineConfig& c) {
  if (!c.seed) throw config_error("seed is required");
  if (c.k < 2) throw config_error("k must be at least 2");
  if (c.output_dir.empty()) throw config_error("output_dir is required");
  if (c.model_specs.empty()) throw config_error("model_specs must not be empty");
  for (const auto& spec : c.model_specs) {
    if (spec.empty()) throw config_error("a model spec must name at least one regressor");
    std::set<std::string> seen;
    for (const auto& label : spec) {
      if (!is_known_regressor(label)) throw config_error("unknown regressor '" + label + "'");
      if (!seen.insert(label).second) throw config_error("regressor '" + label + "' repeated in a model spec");
      if (label == kPatchSymm && !c.features.symmetry)
        throw config_error("model spec uses patch_symm but symmetry extraction is disabled");
    }
  }
  if (c.repeats && *c.repeats < 1) throw config_error("repeats must be at least 1");
  if (c.repeat_schedule.min_repeats < 1 || c.repeat_schedule.min_repeats > c.repeat_schedule.max_repeats ||
      !(c.repeat_schedule.numerator > 0))
    throw config_error("invalid repeat schedule");
  if (c.bins_per_axis < 2) throw config_error("bins_per_axis must be at least 2");
  if (c.features.symmetry) {
    if (c.features.scales.empty()) throw config_error("symmetry_scales must not be empty");
    for (int s : c.features.scales)
      if (s < 2) throw config_error("symmetry scales must be at least 2");
    if (c.features.resize_short_side < 0) throw config_error("resize_short_side must be non-negative");
  }
}

std::string spec_name(const std::vector<std::string>& spec) {
  std::string out;
  for (const auto& s : spec) out += (out.empty() ? "" : "+") + s;
  return out;
}

std::string slug(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) out += static_cast<char>(std::tolower(c));
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "set" : out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_validate(const PipelineConfig& c, std::ostream& log) {
  if (c.records.empty()) throw config_error("no record files given (set 'records')");
  std::size_t records = 0, findings = 0, warnings = 0, seg_gt_class = 0;
  for (const auto& path : c.records) {
    auto in = open_input(path, "record file");
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const auto where = path + ":" + std::to_string(line_no) + ": ";
      try {
        const auto doc = detail::parse_json(line);
        if (!have_header) {
          header_from_json(doc);
          have_header = true;
          continue;
        }
        const auto record = record_from_json(doc);
        ++records;
        if (!ids.insert(record.image_id).second) {
          log << where << "image_id: duplicate image_id '" << record.image_id << "'\n";
          ++findings;
        }
        const auto report = validate_record(record);
        for (const auto& f : report.findings) log << where << f.path << ": " << f.message << '\n';
        for (const auto& w : report.warnings) log << where << "warning: " << w.path << ": " << w.message << '\n';
        findings += report.findings.size();
        warnings += report.warnings.size();
        if (count_segments(record) > count_class_instances(record)) ++seg_gt_class;
      } catch (const input_error& e) {
        log << where << e.what() << '\n';
        ++findings;
      }
    }
    if (!have_header) {
      log << path << ": missing dataset header line\n";
      ++findings;
    }
  }
  log << records << " record(s), " << findings << " finding(s), " << warnings << " warning(s); num_seg > num_class in "
      << seg_gt_class << "/" << records << " record(s)\n";
  return findings == 0 ? kSuccess : kInputInvalid;
}

int cmd_extract(const PipelineConfig& c, std::ostream& log) {
  if (c.records.empty()) throw config_error("no record files given (set 'records')");
  std::vector<SegmentationRecord> records;
  std::set<std::string> ids;
  for (const auto& path : c.records) {
    auto in = open_input(path, "record file");
    auto file = read_record_file(in, path);
    for (auto& r : file.records) {
      if (!ids.insert(r.image_id).second)
        throw input_error(path + ": image_id '" + r.image_id + "' already appears in another record file");
      records.push_back(std::move(r));
    }
  }
  std::sort(records.begin(), records.end(),
            [](const SegmentationRecord& a, const SegmentationRecord& b) { return a.image_id < b.image_id; });

  std::unordered_map<std::string, fs::path> image_paths;
  if (c.features.symmetry) {
    for (const auto& src : c.manifests) {
      auto in = open_input(src.path, "manifest");
      const auto manifest = load_manifest(in, src.dataset, src.path);
      const fs::path base = c.images_root.empty() ? fs::path(src.path).parent_path() : fs::path(c.images_root);
      for (const auto& row : manifest.rows) {
        fs::path p(row.image_path);
        image_paths[row.image_id] = p.is_absolute() ? p : base / p;
      }
    }
  }

  std::vector<FeatureVector> features;
  features.reserve(records.size());
  for (const auto& r : records) {
    if (!c.features.symmetry) {
      features.push_back(build_feature_vector(r, nullptr, c.features));
      continue;
    }
    auto it = image_paths.find(r.image_id);
    if (it == image_paths.end())
      throw input_error("no manifest row gives an image path for '" + r.image_id + "' (needed for patch symmetry)");
    const auto image = load_gray_image(it->second);
    features.push_back(build_feature_vector(r, &image, c.features));
  }

  std::ostringstream out;
  write_feature_csv(out, features, {hash_comment(c)});
  write_text(features_path(c), out.str());
  log << "wrote " << features.size() << " feature row(s) to " << features_path(c).string() << '\n';
  return kSuccess;
}

int cmd_fit(const PipelineConfig& c, std::ostream& log) {
  const auto features = load_features(c);
  const auto sets = build_image_sets(c, load_manifests(c), features, log);
  const auto stamp = c.fit_timestamp.empty() ? utc_now() : c.fit_timestamp;
  for (const auto& set : sets) {
    std::vector<FeatureVector> fv;
    std::vector<double> y;
    for (const auto& row : set.rows) {
      fv.push_back(row.features);
      y.push_back(row.rating);
    }
    for (const auto& spec : c.model_specs) {
      auto model = fit_ols(design_from_features(fv, spec), y);
      model.dataset_id = set.name;
      model.fit_timestamp = stamp;
      auto doc = model_to_json(model);
      doc["config_hash"] = config_hash(c);
      const auto path = fs::path(c.output_dir) / "models" / (slug(set.name) + "__" + spec_name(spec) + ".json");
      write_text(path, doc.dump(2) + "\n");
      log << set.name << " [" << spec_name(spec) << "]: R^2 = " << model.diagnostics.r_squared << " -> "
          << path.string() << '\n';
    }
  }
  return kSuccess;
}

int cmd_eval(const PipelineConfig& c, std::ostream& log) {
  const auto features = load_features(c);
  const auto sets = build_image_sets(c, load_manifests(c), features, log);
  const auto hash = config_hash(c);

  std::map<std::string, std::map<std::string, std::optional<double>>> matrix;  // spec -> set -> mean
  for (const auto& set : sets) {
    for (const auto& spec : c.model_specs) {
      CvOptions opt;
      opt.k = c.k;
      opt.repeats = c.repeats ? *c.repeats : repeats_for(set.rows.size(), c.repeat_schedule);
      opt.seed = *c.seed;
      opt.mode = c.cv_mode;
      const auto report = cross_validate(set, spec, opt);
      matrix[spec_name(spec)][set.name] = report.mean_spearman;

      ordered_json doc;
      doc["config_hash"] = hash;
      doc["image_set"] = report.image_set;
      doc["model_spec"] = report.model_spec;
      doc["n"] = report.n;
      doc["k"] = opt.k;
      doc["repeats"] = opt.repeats;
      doc["seed"] = opt.seed;
      doc["rng"] = kRngDescription;
      doc["cv_mode"] = to_string(opt.mode);
      doc["mean_spearman"] = optional_json(report.mean_spearman);
      doc["excluded"] = report.excluded;
      doc["warnings"] = report.warnings;
      doc["folds"] = ordered_json::array();
      for (const auto& f : report.folds)
        doc["folds"].push_back({{"repeat", f.repeat},
                                {"fold", f.fold},
                                {"n_train", f.n_train},
                                {"n_test", f.n_test},
                                {"spearman", optional_json(f.spearman)},
                                {"excluded_reason", f.excluded_reason}});
      if (opt.mode == CvMode::pooled) {
        doc["repeat_spearman"] = ordered_json::array();
        for (const auto& v : report.repeat_spearman) doc["repeat_spearman"].push_back(optional_json(v));
      }
      doc["config"] = config_to_json(c);

      const auto stem = cv_stem(c, set.name, spec);
      write_text(with_suffix(stem, ".json"), doc.dump(2) + "\n");

      std::ostringstream folds;
      folds << "#" << hash_comment(c) << '\n'
            << csv::join({"repeat", "fold", "n_train", "n_test", "spearman", "excluded_reason"}) << '\n';
      for (const auto& f : report.folds)
        folds << csv::join({std::to_string(f.repeat), std::to_string(f.fold), std::to_string(f.n_train),
                            std::to_string(f.n_test), optional_number(f.spearman), f.excluded_reason})
              << '\n';
      write_text(with_suffix(stem, "_folds.csv"), folds.str());

      std::ostringstream preds;
      preds << "#" << hash_comment(c) << '\n'
            << csv::join({"repeat", "fold", "image_id", "rating", "prediction"}) << '\n';
      for (const auto& p : report.predictions)
        preds << csv::join({std::to_string(p.repeat), std::to_string(p.fold), p.image_id,
                            csv::format_double(p.rating), csv::format_double(p.prediction)})
              << '\n';
      write_text(with_suffix(stem, "_predictions.csv"), preds.str());

      log << set.name << " [" << spec_name(spec) << "]: mean test Spearman "
          << (report.mean_spearman ? csv::format_double(*report.mean_spearman) : std::string("undefined")) << " over "
          << opt.repeats << " repeat(s) x " << opt.k << " folds";
      if (report.excluded) log << " (" << report.excluded << " excluded)";
      log << '\n';
    }
  }

  std::ostringstream cmp;
  cmp << "#" << hash_comment(c) << '\n';
  std::vector<std::string> header{"model_spec"};
  for (const auto& s : sets) header.push_back(s.name);
  cmp << csv::join(header) << '\n';
  for (const auto& spec : c.model_specs) {
    std::vector<std::string> row{spec_name(spec)};
    for (const auto& s : sets) row.push_back(optional_number(matrix[spec_name(spec)][s.name]));
    cmp << csv::join(row) << '\n';
  }
  write_text(fs::path(c.output_dir) / "cv" / "comparison.csv", cmp.str());
  return kSuccess;
}

int cmd_report(const PipelineConfig& c, std::ostream& log) {
  const auto features = load_features(c);
  const auto sets = build_image_sets(c, load_manifests(c), features, log);
  const fs::path dir = fs::path(c.output_dir) / "report";

  // Spearman matrix rebuilt from the per-(set, spec) reports.
  std::ostringstream matrix;
  matrix << "#" << hash_comment(c) << '\n';
  std::vector<std::string> header{"model_spec"};
  for (const auto& s : sets) header.push_back(s.name);
  matrix << csv::join(header) << '\n';
  for (const auto& spec : c.model_specs) {
    std::vector<std::string> row{spec_name(spec)};
    for (const auto& set : sets) {
      const auto path = with_suffix(cv_stem(c, set.name, spec), ".json");
      auto in = open_input(path, "evaluation report (run 'eval' first)");
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw input_error(path.string() + ": " + e.what());
      }
      require_hash(doc, c, path.string());
      const auto& mean = doc.at("mean_spearman");
      row.push_back(mean.is_null() ? std::string() : csv::format_double(mean.get<double>()));
    }
    matrix << csv::join(row) << '\n';
  }
  write_text(dir / "spearman_matrix.csv", matrix.str());

  for (const auto& set : sets) {
    std::vector<FeatureVector> fv;
    std::vector<double> ratings;
    for (const auto& row : set.rows) {
      fv.push_back(row.features);
      ratings.push_back(row.rating);
    }
    const auto grid = binned_stats(fv, ratings, c.bins_per_axis);
    std::ostringstream out;
    out << "#" << hash_comment(c) << '\n';
    for (const auto& w : grid.warnings) out << "#warning=" << w << '\n';
    out << csv::join({"seg_bin", "class_bin", "sqrt_num_seg_lo", "sqrt_num_seg_hi", "sqrt_num_class_lo",
                      "sqrt_num_class_hi", "count", "mean", "std", "empty"})
        << '\n';
    for (std::size_t ix = 0; ix < grid.x_bins(); ++ix)
      for (std::size_t iy = 0; iy < grid.y_bins(); ++iy) {
        const auto& cell = grid.cell(ix, iy);
        out << csv::join({std::to_string(ix), std::to_string(iy), csv::format_double(grid.x_edges[ix]),
                          csv::format_double(grid.x_edges[ix + 1]), csv::format_double(grid.y_edges[iy]),
                          csv::format_double(grid.y_edges[iy + 1]), std::to_string(cell.count),
                          optional_number(cell.mean), optional_number(cell.std), cell.count ? "0" : "1"})
            << '\n';
      }
    write_text(dir / ("bingrid_" + slug(set.name) + ".csv"), out.str());
  }

  if (!c.features.symmetry) {
    log << "notice: symmetry extraction is disabled; error-vs-symmetry table omitted\n";
    log << "wrote report tables to " << dir.string() << '\n';
    return kSuccess;
  }

  std::ostringstream summary;
  summary << "#" << hash_comment(c) << '\n'
          << csv::join({"image_set", "model_spec", "n", "slope", "intercept", "pearson_r", "note"}) << '\n';
  for (const auto& set : sets) {
    std::unordered_map<std::string, double> symm;
    for (const auto& row : set.rows) symm[row.image_id] = row.features.patch_symm.value_or(-1.0);
    for (const auto& spec : c.model_specs) {
      if (std::find(spec.begin(), spec.end(), kPatchSymm) != spec.end()) continue;
      const auto path = with_suffix(cv_stem(c, set.name, spec), "_predictions.csv");
      auto in = open_input(path, "prediction table (run 'eval' first)");
      auto table = csv::read_table(in, {"repeat", "fold", "image_id", "rating", "prediction"}, path.string());
      require_hash(table.comments, c, path.string());

      std::vector<double> pred, truth, sym;
      std::ostringstream points;
      points << "#" << hash_comment(c) << '\n' << csv::join({"image_id", "patch_symm", "error"}) << '\n';
      for (const auto& r : table.rows) {
        if (r[0] != "0") continue;  // first repeat: one out-of-fold prediction per image
        auto it = symm.find(r[2]);
        if (it == symm.end() || it->second < 0.0)
          throw input_error(path.string() + ": no patch_symm for image '" + r[2] + "'");
        pred.push_back(csv::parse_double(r[4]).value());
        truth.push_back(csv::parse_double(r[3]).value());
        sym.push_back(it->second);
        points << csv::join({r[2], csv::format_double(sym.back()), csv::format_double(pred.back() - truth.back())})
               << '\n';
      }
      std::vector<std::string> row{set.name, spec_name(spec), std::to_string(pred.size())};
      try {
        const auto fit = error_vs_symmetry(pred, truth, sym);
        row.insert(row.end(), {csv::format_double(fit.slope), csv::format_double(fit.intercept),
                               csv::format_double(fit.pearson_r), ""});
      } catch (const undefined_correlation_error& e) {
        row.insert(row.end(), {"", "", "", e.what()});
      }
      summary << csv::join(row) << '\n';
      write_text(dir / ("error_symmetry_" + slug(set.name) + "__" + spec_name(spec) + ".csv"), points.str());
    }
  }
  write_text(dir / "error_symmetry.csv", summary.str());
  log << "wrote report tables to " << dir.string() << '\n';
  return kSuccess;
}

int run_command(const std::string& command, const PipelineConfig& config, std::ostream& log) {
  try {
    if (command == "validate") return cmd_validate(config, log);
    check_config(config);
    OutputLock lock(config.output_dir);
    if (command == "extract") return cmd_extract(config, log);
    if (command == "fit") return cmd_fit(config, log);
    if (command == "eval") return cmd_eval(config, log);
    if (command == "report") return cmd_report(config, log);
    log << "error: unknown command '" << command << "'\n";
    return kInputInvalid;
  } catch (const input_error& e) {
    print_exception(log, e);
    return kInputInvalid;
  } catch (const std::exception& e) {
    print_exception(log, e);
    return kRuntimeFailure;
  }
}

}  // namespace segplex::tools
