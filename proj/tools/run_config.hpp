#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tograsp/dataset.hpp"
#include "tograsp/diffusion.hpp"
#include "tograsp/engine.hpp"

namespace tograsp::cli {

struct Paths {
  std::string hand = "builtin:test-hand";
  std::vector<std::string> objects;  // refs: builtin:<name> or object JSON files
  std::string templates;             // empty: built-in bank
  std::string checkpoint = "model.ckpt";
  std::string output_dir = ".";
};

// Everything that affects results. Loaded from JSON; unknown keys are
// rejected.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  Paths paths;
  SamplerConfig schedule;
  ModelConfig model;
  TrainOptions train;
  RefineOptions refine;
  AgnosticOptions agnostic;
  int agnostic_n = 200;
  int sample_n = 64;
  BootstrapConfig bootstrap;
  int bootstrap_seeds = 5;
  QuotaConfig quotas;

  static RunConfig defaults();
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  // TOGRASP_OUTPUT_DIR, TOGRASP_CHECKPOINT, TOGRASP_HAND, TOGRASP_TEMPLATES.
  void apply_env();
  // Throws ValidationError: seed missing, referenced path missing, bad ranges.
  void validate() const;
};

}  // namespace tograsp::cli
