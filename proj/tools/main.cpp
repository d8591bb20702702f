#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pipeline.hpp"

using json = nlohmann::json;

namespace {

// Long-form flags mirror the configuration keys one to one.
struct Overrides {
  std::string config_path;
  std::vector<std::string> manifests, records, grouping, model_specs;
  std::optional<std::string> images_root, groupings, repeats, cv_mode, output_dir, fit_timestamp;
  std::optional<std::size_t> k, repeat_min, repeat_max, bins_per_axis;
  std::optional<double> repeat_numerator;
  std::optional<std::uint64_t> seed;
  std::optional<bool> symmetry;
  std::vector<int> symmetry_scales;
  std::optional<int> resize_short_side;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--manifests", manifests, "dataset=path.csv (repeatable)");
    app.add_option("--records", records, "interchange record file (repeatable)");
    app.add_option("--images_root", images_root, "directory prefix for relative image paths");
    app.add_option("--grouping", grouping, "image-set name (repeatable)");
    app.add_option("--groupings", groupings, "JSON object of user-defined groupings");
    app.add_option("--model_specs", model_specs, "regressors joined by '+' (repeatable)");
    app.add_option("--k", k, "folds per repeat");
    app.add_option("--repeats", repeats, "repeats per image-set, or 'auto'");
    app.add_option("--repeat_numerator", repeat_numerator);
    app.add_option("--repeat_min", repeat_min);
    app.add_option("--repeat_max", repeat_max);
    app.add_option("--seed", seed, "global seed (required)");
    app.add_option("--cv_mode", cv_mode, "per_fold or pooled");
    app.add_option("--symmetry", symmetry, "extract patch symmetry (true/false)");
    app.add_option("--symmetry_scales", symmetry_scales, "patch sizes");
    app.add_option("--resize_short_side", resize_short_side, "0 disables resizing");
    app.add_option("--bins_per_axis", bins_per_axis);
    app.add_option("--output_dir", output_dir);
    app.add_option("--fit_timestamp", fit_timestamp, "timestamp recorded in fitted models");
  }

  json merged() const {
    json j = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw segplex::config_error("cannot open configuration '" + config_path + "'");
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw segplex::parse_error(e.byte, config_path + ": " + e.what());
      }
    }
    if (!manifests.empty()) j["manifests"] = manifests;
    if (!records.empty()) j["records"] = records;
    if (!grouping.empty()) j["grouping"] = grouping;
    if (!model_specs.empty()) j["model_specs"] = model_specs;
    if (images_root) j["images_root"] = *images_root;
    if (groupings) j["groupings"] = json::parse(*groupings);
    if (repeats) {
      if (*repeats == "auto") j["repeats"] = "auto";
      else j["repeats"] = std::stoull(*repeats);
    }
    if (cv_mode) j["cv_mode"] = *cv_mode;
    if (output_dir) j["output_dir"] = *output_dir;
    if (fit_timestamp) j["fit_timestamp"] = *fit_timestamp;
    if (k) j["k"] = *k;
    if (repeat_min) j["repeat_min"] = *repeat_min;
    if (repeat_max) j["repeat_max"] = *repeat_max;
    if (repeat_numerator) j["repeat_numerator"] = *repeat_numerator;
    if (bins_per_axis) j["bins_per_axis"] = *bins_per_axis;
    if (seed) j["seed"] = *seed;
    if (symmetry) j["symmetry"] = *symmetry;
    if (!symmetry_scales.empty()) j["symmetry_scales"] = symmetry_scales;
    if (resize_short_side) j["resize_short_side"] = *resize_short_side;
    return j;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segplex: visual complexity from segmentation counts"};
  app.require_subcommand(1);
  Overrides overrides;
  std::string command;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"validate", "check interchange record files"},
           {"extract", "compute the feature table from records (and images)"},
           {"fit", "fit each model spec on each full image-set"},
           {"eval", "repeated k-fold cross-validation per image-set and model spec"},
           {"report", "Spearman matrix, binned statistics and error-vs-symmetry tables"}}) {
    auto* sub = app.add_subcommand(name, help);
    overrides.attach(*sub);
    sub->callback([&command, name = name] { command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : segplex::tools::kInputInvalid;
  }

  segplex::tools::PipelineConfig config;
  try {
    config = segplex::tools::config_from_json(overrides.merged());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return segplex::tools::kInputInvalid;
  }
  return segplex::tools::run_command(command, config, std::cerr);
}
