#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "tograsp/errors.hpp"
#include "tograsp/object_model.hpp"

namespace tograsp::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& item : j.items()) {
    if (allowed.count(item.key()) == 0) {
      throw ValidationError("unknown config key '" + where + "." + item.key() + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool is_builtin(const std::string& ref) { return ref.rfind("builtin:", 0) == 0; }

void require_path(const std::string& what, const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw ValidationError(what + " '" + path + "' does not exist");
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.schedule.K = 50;
  c.schedule.beta_end = 0.35;
  c.model = c.bootstrap.model;
  c.train.steps = 1000;
  c.train.batch = 32;
  for (const auto& name : builtin_object_names()) c.paths.objects.push_back("builtin:" + name);
  return c;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c = defaults();
  try {
    check_keys(j, "config", {"seed", "paths", "schedule", "model", "train", "refine", "agnostic",
                             "sample", "bootstrap", "quotas"});
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      check_keys(p, "paths", {"hand", "objects", "templates", "checkpoint", "output_dir"});
      read(p, "hand", c.paths.hand);
      read(p, "objects", c.paths.objects);
      read(p, "templates", c.paths.templates);
      read(p, "checkpoint", c.paths.checkpoint);
      read(p, "output_dir", c.paths.output_dir);
    }
    if (j.contains("schedule")) {
      const json& s = j.at("schedule");
      check_keys(s, "schedule", {"K", "beta_start", "beta_end", "sigma_mode", "q_sample_mode"});
      read(s, "K", c.schedule.K);
      read(s, "beta_start", c.schedule.beta_start);
      read(s, "beta_end", c.schedule.beta_end);
      if (s.contains("sigma_mode")) c.schedule.sigma_mode = parse_sigma_mode(s.at("sigma_mode").get<std::string>());
      if (s.contains("q_sample_mode")) {
        c.schedule.q_sample_mode = parse_q_sample_mode(s.at("q_sample_mode").get<std::string>());
      }
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"hidden", "units", "hand_points", "object_points"});
      read(m, "hidden", c.model.hidden);
      read(m, "units", c.model.units);
      read(m, "hand_points", c.model.hand_points);
      read(m, "object_points", c.model.object_points);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, "train", {"steps", "batch", "learning_rate", "lambda_r"});
      read(t, "steps", c.train.steps);
      read(t, "batch", c.train.batch);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "lambda_r", c.train.lambda_r);
    }
    if (j.contains("refine")) {
      const json& r = j.at("refine");
      check_keys(r, "refine", {"steps", "step_size", "fd_step", "max_halvings"});
      read(r, "steps", c.refine.steps);
      read(r, "step_size", c.refine.step_size);
      read(r, "fd_step", c.refine.fd_step);
      read(r, "max_halvings", c.refine.max_halvings);
    }
    if (j.contains("agnostic")) {
      const json& a = j.at("agnostic");
      check_keys(a, "agnostic", {"n", "max_standoff", "approach_step"});
      read(a, "n", c.agnostic_n);
      read(a, "max_standoff", c.agnostic.max_standoff);
      read(a, "approach_step", c.agnostic.approach_step);
    }
    if (j.contains("sample")) {
      const json& s = j.at("sample");
      check_keys(s, "sample", {"n"});
      read(s, "n", c.sample_n);
    }
    if (j.contains("bootstrap")) {
      const json& b = j.at("bootstrap");
      check_keys(b, "bootstrap", {"iterations", "batch", "min_growth", "train_steps", "warmup_steps",
                                  "joint_scale_floor", "seed_grasps"});
      read(b, "iterations", c.bootstrap.iterations);
      read(b, "batch", c.bootstrap.batch);
      read(b, "min_growth", c.bootstrap.min_growth);
      read(b, "train_steps", c.bootstrap.train.steps);
      read(b, "warmup_steps", c.bootstrap.warmup_steps);
      read(b, "joint_scale_floor", c.bootstrap.joint_scale_floor);
      read(b, "seed_grasps", c.bootstrap_seeds);
    }
    if (j.contains("quotas")) {
      const json& q = j.at("quotas");
      check_keys(q, "quotas", {"task_oriented", "agnostic", "unseen_fraction", "allow_partial"});
      read(q, "task_oriented", c.quotas.task_oriented);
      read(q, "agnostic", c.quotas.agnostic);
      read(q, "unseen_fraction", c.quotas.unseen_fraction);
      read(q, "allow_partial", c.quotas.allow_partial);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config file '" + path.string() + "' does not exist");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

ordered_json RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
  j["paths"] = {{"hand", paths.hand},
                {"objects", paths.objects},
                {"templates", paths.templates},
                {"checkpoint", paths.checkpoint},
                {"output_dir", paths.output_dir}};
  j["schedule"] = {{"K", schedule.K},
                   {"beta_start", schedule.beta_start},
                   {"beta_end", schedule.beta_end},
                   {"sigma_mode", to_string(schedule.sigma_mode)},
                   {"q_sample_mode", to_string(schedule.q_sample_mode)}};
  j["model"] = {{"hidden", model.hidden},
                {"units", model.units},
                {"hand_points", model.hand_points},
                {"object_points", model.object_points}};
  j["train"] = {{"steps", train.steps},
                {"batch", train.batch},
                {"learning_rate", train.learning_rate},
                {"lambda_r", train.lambda_r}};
  j["refine"] = {{"steps", refine.steps},
                 {"step_size", refine.step_size},
                 {"fd_step", refine.fd_step},
                 {"max_halvings", refine.max_halvings}};
  j["agnostic"] = {{"n", agnostic_n},
                   {"max_standoff", agnostic.max_standoff},
                   {"approach_step", agnostic.approach_step}};
  j["sample"] = {{"n", sample_n}};
  j["bootstrap"] = {{"iterations", bootstrap.iterations},
                    {"batch", bootstrap.batch},
                    {"min_growth", bootstrap.min_growth},
                    {"train_steps", bootstrap.train.steps},
                    {"warmup_steps", bootstrap.warmup_steps},
                    {"joint_scale_floor", bootstrap.joint_scale_floor},
                    {"seed_grasps", bootstrap_seeds}};
  j["quotas"] = {{"task_oriented", quotas.task_oriented},
                 {"agnostic", quotas.agnostic},
                 {"unseen_fraction", quotas.unseen_fraction},
                 {"allow_partial", quotas.allow_partial}};
  return j;
}

void RunConfig::apply_env() {
  if (const char* v = std::getenv("TOGRASP_OUTPUT_DIR")) paths.output_dir = v;
  if (const char* v = std::getenv("TOGRASP_CHECKPOINT")) paths.checkpoint = v;
  if (const char* v = std::getenv("TOGRASP_HAND")) paths.hand = v;
  if (const char* v = std::getenv("TOGRASP_TEMPLATES")) paths.templates = v;
}

void RunConfig::validate() const {
  if (!seed) throw ValidationError("a seed is required (config \"seed\" or --seed)");
  if (!is_builtin(paths.hand)) require_path("hand spec", paths.hand);
  for (const auto& o : paths.objects) {
    if (!is_builtin(o)) require_path("object model", o);
  }
  if (!paths.templates.empty()) require_path("template bank", paths.templates);
  schedule.schedule();
  if (train.steps < 0 || train.batch < 1) throw InvalidRange("train.steps >= 0 and train.batch >= 1 required");
  if (refine.steps < 0) throw InvalidRange("refine.steps must be non-negative");
  if (agnostic_n < 0 || sample_n < 0) throw InvalidRange("counts must be non-negative");
  if (bootstrap.warmup_steps < 0) throw InvalidRange("bootstrap.warmup_steps must be non-negative");
  if (bootstrap_seeds < 1) throw InvalidRange("bootstrap.seed_grasps must be positive");
  if (model.hidden < 1 || model.units < 1) throw InvalidRange("model sizes must be positive");
}

}  // namespace tograsp::cli
