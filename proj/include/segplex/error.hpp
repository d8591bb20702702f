#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace segplex {

// Base of every error thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented format or invariant. The CLI maps these to exit code 2.
class input_error : public error {
 public:
  using error::error;
};

class malformed_mask_error : public input_error {
 public:
  malformed_mask_error(std::string image_id, std::ptrdiff_t mask_index, const std::string& what)
      : input_error(describe(image_id, mask_index, what)),
        image_id_(std::move(image_id)),
        mask_index_(mask_index) {}

  const std::string& image_id() const noexcept { return image_id_; }
  // -1 when the mask was decoded without record context.
  std::ptrdiff_t mask_index() const noexcept { return mask_index_; }

 private:
  static std::string describe(const std::string& id, std::ptrdiff_t index, const std::string& what) {
    std::string msg = "malformed mask";
    if (!id.empty()) msg += " in image '" + id + "'";
    if (index >= 0) msg += " at mask index " + std::to_string(index);
    return msg + ": " + what;
  }

  std::string image_id_;
  std::ptrdiff_t mask_index_;
};

class parse_error : public input_error {
 public:
  parse_error(std::size_t byte_offset, const std::string& what)
      : input_error("parse error at byte " + std::to_string(byte_offset) + ": " + what),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// A structurally valid document whose field violates an invariant.
class field_error : public input_error {
 public:
  field_error(std::string path, const std::string& what)
      : input_error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class config_error : public input_error {
 public:
  using input_error::input_error;
};

class rank_deficient_error : public error {
 public:
  rank_deficient_error(std::vector<std::string> columns, const std::string& what)
      : error("rank-deficient design: " + what), columns_(std::move(columns)) {}

  // The dependent column first, followed by the columns it is a combination of.
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class undefined_correlation_error : public error {
 public:
  using error::error;
};

class missing_regressor_error : public error {
 public:
  explicit missing_regressor_error(const std::string& label)
      : error("feature vector has no value for regressor '" + label + "'"), label_(label) {}

  const std::string& label() const noexcept { return label_; }

 private:
  std::string label_;
};

class missing_feature_error : public input_error {
 public:
  explicit missing_feature_error(std::vector<std::string> ids)
      : input_error(describe(ids)), ids_(std::move(ids)) {}

  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string msg = std::to_string(ids.size()) + " image(s) have no features:";
    for (const auto& id : ids) msg += " " + id;
    return msg;
  }

  std::vector<std::string> ids_;
};

}  // namespace segplex
