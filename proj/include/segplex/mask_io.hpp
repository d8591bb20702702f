#pragma once

// Interchange format for segmentation outputs.
//
// A record file is line-delimited JSON: the first non-blank line is a dataset
// header {"format_version":"1","producer":...,"created":...}, every following
// non-blank line is one SegmentationRecord. Masks are uncompressed run-length
// encodings in column-major pixel order whose first run counts background.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "segplex/error.hpp"

namespace segplex {

inline constexpr std::string_view kFormatVersion = "1";
inline constexpr int kDefaultGranularity = 64;

struct RunLengthMask {
  int height = 0;
  int width = 0;
  std::vector<std::int64_t> counts;
  // Optional producer-assigned mask index; must be unique within a record's segments.
  std::optional<std::int64_t> id;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const RunLengthMask&, const RunLengthMask&) = default;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false)
      : height_(height), width_(width),
        bits_(static_cast<std::size_t>(std::max(height, 0)) * static_cast<std::size_t>(std::max(width, 0)),
              fill ? 1 : 0) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int row, int col) const { return bits_[index(row, col)] != 0; }
  void set(int row, int col, bool value = true) { bits_[index(row, col)] = value ? 1 : 0; }

  // Pixel i in column-major order.
  bool column_major(std::size_t i) const { return bits_[i] != 0; }
  void set_column_major(std::size_t i, bool value) { bits_[i] = value ? 1 : 0; }

  std::size_t foreground() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(col) * static_cast<std::size_t>(height_) + static_cast<std::size_t>(row);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;  // column-major
};

struct ClassInstance {
  std::string label;
  std::optional<RunLengthMask> mask;
  std::optional<double> score;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const ClassInstance&, const ClassInstance&) = default;
};

struct SegmentationRecord {
  std::string image_id;
  int image_width = 0;
  int image_height = 0;
  int granularity = kDefaultGranularity;
  std::vector<RunLengthMask> segments;
  std::vector<ClassInstance> class_instances;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const SegmentationRecord&, const SegmentationRecord&) = default;
};

struct DatasetHeader {
  std::string format_version{kFormatVersion};
  std::string producer;
  std::string created;
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Finding {
  std::string path;
  std::string message;
  // Index of the offending mask (segment or class instance), -1 when not mask related.
  std::ptrdiff_t mask_index = -1;
};

struct ValidationReport {
  std::vector<Finding> findings;
  // Soft checks that do not make a record invalid.
  std::vector<Finding> warnings;

  bool ok() const noexcept { return findings.empty(); }
};

// Identifies a mask for error messages.
struct MaskRef {
  std::string image_id;
  std::ptrdiff_t index = -1;
};

// Returns a description of the first violated RunLengthMask invariant, if any.
inline std::optional<std::string> check_rle(const RunLengthMask& rle) {
  if (rle.height < 1 || rle.width < 1)
    return "dimensions " + std::to_string(rle.height) + "x" + std::to_string(rle.width) + " must be at least 1x1";
  if (rle.counts.empty()) return std::string("counts must not be empty");
  std::int64_t total = 0;
  const std::int64_t expected = static_cast<std::int64_t>(rle.height) * rle.width;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    const auto c = rle.counts[i];
    if (c < 0) return "counts[" + std::to_string(i) + "] is negative";
    if (c == 0 && i != 0) return "counts[" + std::to_string(i) + "] is an interior zero-length run";
    total += c;
    if (total > expected) break;
  }
  if (total != expected)
    return "counts sum to " + std::to_string(total) + ", expected height*width = " + std::to_string(expected);
  return std::nullopt;
}

inline BinaryMask decode_rle(const RunLengthMask& rle, const MaskRef& ref = {}) {
  if (auto problem = check_rle(rle)) throw malformed_mask_error(ref.image_id, ref.index, *problem);
  BinaryMask mask(rle.height, rle.width);
  std::size_t pos = 0;
  bool foreground = false;
  for (const auto run : rle.counts) {
    if (foreground)
      for (std::int64_t i = 0; i < run; ++i) mask.set_column_major(pos + static_cast<std::size_t>(i), true);
    pos += static_cast<std::size_t>(run);
    foreground = !foreground;
  }
  return mask;
}

inline RunLengthMask encode_rle(const BinaryMask& mask) {
  RunLengthMask rle;
  rle.height = mask.height();
  rle.width = mask.width();
  bool current = false;
  std::int64_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.column_major(i) != current) {
      rle.counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

// ---------------------------------------------------------------------------
// Validation

inline ValidationReport validate_record(const SegmentationRecord& record) {
  ValidationReport report;
  auto add = [&](std::string path, std::string message, std::ptrdiff_t mask = -1) {
    report.findings.push_back({std::move(path), std::move(message), mask});
  };

  if (record.image_id.empty()) add("image_id", "must not be empty");
  if (record.image_width < 1) add("image_width", "must be at least 1");
  if (record.image_height < 1) add("image_height", "must be at least 1");
  if (record.granularity < 1) add("granularity", "must be at least 1");

  auto check_mask = [&](const RunLengthMask& m, const std::string& path, std::ptrdiff_t index) {
    if (auto problem = check_rle(m)) {
      add(path, *problem, index);
      return;
    }
    if (m.height != record.image_height || m.width != record.image_width)
      add(path, "mask is " + std::to_string(m.height) + "x" + std::to_string(m.width) + " but image is " +
                    std::to_string(record.image_height) + "x" + std::to_string(record.image_width),
          index);
  };

  std::unordered_map<std::int64_t, std::size_t> seen_ids;
  for (std::size_t i = 0; i < record.segments.size(); ++i) {
    const auto& seg = record.segments[i];
    const auto path = "segments[" + std::to_string(i) + "]";
    check_mask(seg, path, static_cast<std::ptrdiff_t>(i));
    if (seg.id) {
      auto [it, inserted] = seen_ids.emplace(*seg.id, i);
      if (!inserted)
        add(path + ".id", "duplicate mask index " + std::to_string(*seg.id) + " (also segments[" +
                              std::to_string(it->second) + "])",
            static_cast<std::ptrdiff_t>(i));
    }
  }

  for (std::size_t i = 0; i < record.class_instances.size(); ++i) {
    const auto& inst = record.class_instances[i];
    const auto path = "class_instances[" + std::to_string(i) + "]";
    if (inst.label.empty()) add(path + ".label", "must not be empty");
    if (inst.score && !(std::isfinite(*inst.score) && *inst.score >= 0.0 && *inst.score <= 1.0))
      add(path + ".score", "must lie in [0,1]");
    if (inst.mask) check_mask(*inst.mask, path + ".mask", static_cast<std::ptrdiff_t>(i));
  }

  if (!record.class_instances.empty() && record.segments.size() <= record.class_instances.size())
    report.warnings.push_back({"segments", "num_seg (" + std::to_string(record.segments.size()) +
                                               ") is not larger than num_class (" +
                                               std::to_string(record.class_instances.size()) + ")"});
  return report;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw field_error(path.empty() ? key : path + "." + key, "required field is missing");
  return *it;
}

inline std::string child(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

inline std::int64_t as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw field_error(path, "expected an integer");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
    throw field_error(path, "integer out of range");
  return v.get<std::int64_t>();
}

inline int as_dim(const json& v, const std::string& path) {
  const auto x = as_int(v, path);
  if (x < INT32_MIN || x > INT32_MAX) throw field_error(path, "integer out of range");
  return static_cast<int>(x);
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw field_error(path, "expected a string");
  return v.get<std::string>();
}

inline const json& as_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw field_error(path, "expected an object");
  return v;
}

inline const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw field_error(path, "expected an array");
  return v;
}

inline json collect_extra(const json& obj, std::initializer_list<std::string_view> known) {
  json extra = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) extra[it.key()] = it.value();
  return extra;
}

inline RunLengthMask mask_from_json(const json& j, const std::string& path) {
  as_object(j, path);
  RunLengthMask m;
  m.height = as_dim(require(j, "h", path), child(path, "h"));
  m.width = as_dim(require(j, "w", path), child(path, "w"));
  const auto counts_path = child(path, "counts");
  const auto& counts = as_array(require(j, "counts", path), counts_path);
  m.counts.reserve(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    m.counts.push_back(as_int(counts[i], counts_path + "[" + std::to_string(i) + "]"));
  if (auto it = j.find("id"); it != j.end()) m.id = as_int(*it, child(path, "id"));
  m.extra = collect_extra(j, {"h", "w", "counts", "id"});
  return m;
}

inline void append_extra(ordered_json& out, const json& extra) {
  if (!extra.is_object()) return;
  for (auto it = extra.begin(); it != extra.end(); ++it)
    if (!out.contains(it.key())) out[it.key()] = it.value();
}

inline ordered_json mask_to_json(const RunLengthMask& m) {
  ordered_json j;
  j["h"] = m.height;
  j["w"] = m.width;
  j["counts"] = m.counts;
  if (m.id) j["id"] = *m.id;
  append_extra(j, m.extra);
  return j;
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw parse_error(e.byte > 0 ? e.byte - 1 : 0, e.what());
  }
}

}  // namespace detail

// Structural parse only; invariants are checked by validate_record.
inline SegmentationRecord record_from_json(const nlohmann::json& j) {
  using namespace detail;
  as_object(j, "record");
  SegmentationRecord r;
  r.image_id = as_string(require(j, "image_id", ""), "image_id");
  r.image_width = as_dim(require(j, "image_width", ""), "image_width");
  r.image_height = as_dim(require(j, "image_height", ""), "image_height");
  r.granularity = as_dim(require(j, "granularity", ""), "granularity");

  const auto& segs = as_array(require(j, "segments", ""), "segments");
  r.segments.reserve(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i)
    r.segments.push_back(mask_from_json(segs[i], "segments[" + std::to_string(i) + "]"));

  const auto& insts = as_array(require(j, "class_instances", ""), "class_instances");
  r.class_instances.reserve(insts.size());
  for (std::size_t i = 0; i < insts.size(); ++i) {
    const auto path = "class_instances[" + std::to_string(i) + "]";
    const auto& ji = as_object(insts[i], path);
    ClassInstance inst;
    inst.label = as_string(require(ji, "label", path), child(path, "label"));
    if (auto it = ji.find("score"); it != ji.end() && !it->is_null()) {
      if (!it->is_number()) throw field_error(child(path, "score"), "expected a number");
      inst.score = it->get<double>();
    }
    if (auto it = ji.find("mask"); it != ji.end() && !it->is_null())
      inst.mask = mask_from_json(*it, child(path, "mask"));
    inst.extra = collect_extra(ji, {"label", "score", "mask"});
    r.class_instances.push_back(std::move(inst));
  }
  r.extra = collect_extra(j, {"image_id", "image_width", "image_height", "granularity", "segments", "class_instances"});
  return r;
}

inline nlohmann::ordered_json record_to_json(const SegmentationRecord& r) {
  using namespace detail;
  ordered_json j;
  j["image_id"] = r.image_id;
  j["image_width"] = r.image_width;
  j["image_height"] = r.image_height;
  j["granularity"] = r.granularity;
  j["segments"] = ordered_json::array();
  for (const auto& m : r.segments) j["segments"].push_back(mask_to_json(m));
  j["class_instances"] = ordered_json::array();
  for (const auto& inst : r.class_instances) {
    ordered_json ji;
    ji["label"] = inst.label;
    if (inst.score) ji["score"] = *inst.score;
    if (inst.mask) ji["mask"] = mask_to_json(*inst.mask);
    append_extra(ji, inst.extra);
    j["class_instances"].push_back(std::move(ji));
  }
  append_extra(j, r.extra);
  return j;
}

// Throws on the first finding of a validation report.
inline void throw_if_invalid(const SegmentationRecord& record, const ValidationReport& report) {
  if (report.ok()) return;
  const auto& f = report.findings.front();
  if (f.mask_index >= 0) throw malformed_mask_error(record.image_id, f.mask_index, f.path + ": " + f.message);
  throw field_error(f.path, f.message);
}

// Parses and fully validates one serialized record.
inline SegmentationRecord load_record(std::string_view text) {
  auto record = record_from_json(detail::parse_json(text));
  throw_if_invalid(record, validate_record(record));
  return record;
}

// One line, no trailing newline.
inline std::string serialize_record(const SegmentationRecord& record) { return record_to_json(record).dump(); }

inline DatasetHeader header_from_json(const nlohmann::json& j) {
  using namespace detail;
  as_object(j, "header");
  DatasetHeader h;
  h.format_version = as_string(require(j, "format_version", ""), "format_version");
  if (h.format_version != kFormatVersion)
    throw field_error("format_version", "unsupported version '" + h.format_version + "'");
  h.producer = as_string(require(j, "producer", ""), "producer");
  h.created = as_string(require(j, "created", ""), "created");
  h.extra = collect_extra(j, {"format_version", "producer", "created"});
  return h;
}

inline std::string serialize_header(const DatasetHeader& h) {
  nlohmann::ordered_json j;
  j["format_version"] = h.format_version;
  j["producer"] = h.producer;
  j["created"] = h.created;
  detail::append_extra(j, h.extra);
  return j.dump();
}

// ---------------------------------------------------------------------------
// Record files

class record_file_error : public input_error {
 public:
  record_file_error(std::string source, std::size_t line, const std::string& what)
      : input_error(source + ":" + std::to_string(line) + ": " + what), source_(std::move(source)), line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

struct RecordFile {
  DatasetHeader header;
  std::vector<SegmentationRecord> records;
};

// Reads a header line followed by records. Byte offsets in nested parse errors
// are relative to the start of the stream. Throws record_file_error (with the
// original exception nested) on the first bad line.
inline RecordFile read_record_file(std::istream& in, const std::string& source = "<stream>") {
  RecordFile file;
  bool have_header = false;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      if (!have_header) {
        file.header = header_from_json(detail::parse_json(line));
        have_header = true;
        continue;
      }
      auto record = load_record(line);
      if (!ids.insert(record.image_id).second)
        throw field_error("image_id", "duplicate image_id '" + record.image_id + "'");
      file.records.push_back(std::move(record));
    } catch (const parse_error& e) {
      std::throw_with_nested(record_file_error(
          source, line_no, "parse error at byte " + std::to_string(line_start + e.byte_offset()) + " of the file"));
    } catch (const input_error& e) {
      std::throw_with_nested(record_file_error(source, line_no, e.what()));
    }
  }
  if (!have_header) throw record_file_error(source, line_no, "missing dataset header line");
  return file;
}

inline void write_record_file(std::ostream& out, const RecordFile& file) {
  out << serialize_header(file.header) << '\n';
  for (const auto& r : file.records) out << serialize_record(r) << '\n';
}

}  // namespace segplex
