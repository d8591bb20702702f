#pragma once

// Pipeline configuration and the CLI subcommands: validate, extract, fit, eval, report.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "segplex/dataset.hpp"
#include "segplex/eval.hpp"
#include "segplex/features.hpp"

namespace segplex::tools {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kInputInvalid = 2 };

struct ManifestSource {
  std::string dataset;
  std::string path;
};

struct PipelineConfig {
  std::vector<ManifestSource> manifests;
  std::vector<std::string> records;
  std::string images_root;  // prefix for relative image paths; defaults to the manifest's directory
  std::vector<std::string> grouping;
  std::vector<Grouping> groupings;  // user-defined, shadow built-ins
  std::vector<std::vector<std::string>> model_specs;
  std::size_t k = 3;
  std::optional<std::size_t> repeats;  // absent: derived from the set size
  RepeatSchedule repeat_schedule;
  std::optional<std::uint64_t> seed;
  CvMode cv_mode = CvMode::per_fold;
  FeatureConfig features;
  std::size_t bins_per_axis = 4;
  std::string output_dir;
  std::string fit_timestamp;
};

// Accepts the flat key layout documented in the README. Unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);

// Canonical form without output_dir and fit_timestamp; this is what gets hashed and echoed.
nlohmann::ordered_json config_to_json(const PipelineConfig& config);

// 16 hex digits of FNV-1a over the canonical config.
std::string config_hash(const PipelineConfig& config);

// Throws config_error on an invariant violation.
void check_config(const PipelineConfig& config);

std::string spec_name(const std::vector<std::string>& spec);
std::string slug(const std::string& name);

int cmd_validate(const PipelineConfig& config, std::ostream& log);
int cmd_extract(const PipelineConfig& config, std::ostream& log);
int cmd_fit(const PipelineConfig& config, std::ostream& log);
int cmd_eval(const PipelineConfig& config, std::ostream& log);
int cmd_report(const PipelineConfig& config, std::ostream& log);

// Dispatches by subcommand name, holding the output directory lock for the duration.
int run_command(const std::string& command, const PipelineConfig& config, std::ostream& log);

}  // namespace segplex::tools
