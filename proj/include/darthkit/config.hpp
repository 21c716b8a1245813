#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "darthkit/adapt.hpp"
#include "darthkit/model.hpp"
#include "darthkit/synthbench.hpp"
#include "darthkit/tracker.hpp"

namespace darthkit {

/// Everything a pipeline run depends on. Serialized as INI with flat
/// sections; every key is required and unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;

  BenchmarkSpec bench;
  DomainStyle source_style = DomainStyle::source();
  DomainStyle target_style = DomainStyle::target();

  ModelConfig model;
  PretrainConfig pretrain;
  AdaptConfig adapt;
  double sfod_conf_thr = 0.7;
  TrackerConfig tracker;
  std::vector<int> eval_classes;  // empty = every gt class

  /// Pushes the global seed into the per-stage configs.
  void apply_seed(std::uint64_t s);
};

RunConfig default_run_config();

/// Throws ConfigError naming the first missing, unknown or malformed key.
RunConfig parse_run_config(const std::string& ini_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical INI text: fixed key order, round-trips through parse.
std::string format_run_config(const RunConfig& cfg);

}  // namespace darthkit
