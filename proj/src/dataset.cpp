#include "tograsp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/penetration.hpp"
#include "tograsp/posemath.hpp"
#include "tograsp/rng.hpp"

namespace tograsp {

using ordered_json = nlohmann::ordered_json;

namespace {

// Height of the scripted quasi-static lift used as the execution proxy.
constexpr double kScriptedLift = 0.12;

}  // namespace

void DatasetRecord::check() const {
  if (validated && !rule_pass) {
    throw ValidationError("record for '" + object_id +
                          "' is validated but fails its rule");
  }
}

std::string to_json_line(const DatasetRecord& r) {
  ordered_json j;
  j["object"] = r.object_id;
  j["task"] = r.task ? ordered_json(to_string(*r.task)) : ordered_json(nullptr);
  j["description"] = r.description;
  ordered_json pose = ordered_json::array();
  for (Eigen::Index i = 0; i < r.pose.size(); ++i) {
    pose.emplace_back(r.pose[i]);
  }
  j["pose"] = std::move(pose);
  j["rule_pass"] = r.rule_pass;
  j["q1"] = r.q1;
  j["penetration_cm"] = r.penetration_cm;
  j["validated"] = r.validated;
  j["stage"] = r.stage;
  j["iteration"] = r.iteration;
  j["seed"] = r.seed;
  j["split"] = r.split;
  return j.dump();
}

DatasetRecord parse_json_line(const std::string& line) {
  DatasetRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.object_id = j.at("object").get<std::string>();
    if (!j.at("task").is_null()) r.task = parse_task(j.at("task").get<std::string>());
    r.description = j.at("description").get<std::string>();
    const auto& pose = j.at("pose");
    r.pose.resize(static_cast<Eigen::Index>(pose.size()));
    for (std::size_t i = 0; i < pose.size(); ++i) {
      r.pose[static_cast<Eigen::Index>(i)] = pose[i].get<double>();
    }
    r.rule_pass = j.at("rule_pass").get<bool>();
    r.q1 = j.at("q1").get<double>();
    r.penetration_cm = j.at("penetration_cm").get<double>();
    r.validated = j.at("validated").get<bool>();
    r.stage = j.value("stage", std::string());
    r.iteration = j.value("iteration", 0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.split = j.value("split", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad dataset record: ") + e.what());
  }
  if (r.pose.size() < 9) throw ParseError("dataset pose has fewer than 9 entries");
  r.check();
  return r;
}

void write_dataset(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write dataset " + path.string());
  for (const DatasetRecord& r : records) os << to_json_line(r) << '\n';
  if (!os) throw Error("failed writing dataset " + path.string());
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset " + path.string());
  std::vector<DatasetRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DatasetRecord> read_dataset_tree(const std::filesystem::path& path,
                                             std::vector<std::string>* ids) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::vector<DatasetRecord> out;
  for (const auto& file : files) {
    const auto records = read_dataset(file);
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (ids != nullptr) {
        ids->push_back(file.stem().string() + ":" + std::to_string(i));
      }
      out.push_back(records[i]);
    }
  }
  return out;
}

PoseLabels label_pose(const HandModel& hand, const ObjectModel& obj,
                      const GraspPose& pose, std::optional<TaskKind> task,
                      const QualityOptions& quality,
                      const FilterThresholds& thresholds) {
  const HandPoints posed = hand.forward_kinematics(pose);
  const GraspAssessment a = assess_grasp(hand, posed, obj, quality);
  PoseLabels labels;
  labels.q1 = a.report.q1;
  labels.raw_q1 = a.raw_q1;
  labels.penetration_cm = a.report.penetration_cm;
  labels.energy = a.energy;
  labels.collision_free = a.report.collision_free;
  labels.stable = stability_precheck(a);
  if (task) labels.rule_pass = rule_filter(*task, posed, obj, thresholds).pass;

  // Scripted quasi-static execution: a stable grasp lifts the object; a grasp
  // on the affordance also drives the articulation to its limit.
  ExecState exec;
  exec.theta0 = obj.articulation.theta;
  exec.theta = task && labels.rule_pass && labels.stable ? 1.0 : exec.theta0;
  exec.h0 = 0.0;
  exec.h = labels.stable ? kScriptedLift : 0.0;
  exec.t_hand = pose.translation;
  exec.t_object = obj.center;
  labels.validated = task ? classify_success(exec)
                          : exec.h > RewardWeights{}.h_hat;
  return labels;
}

DatasetRecord make_record(const HandModel& hand, const ObjectModel& obj,
                          const GraspPose& pose, std::optional<TaskKind> task,
                          std::string description, std::string stage,
                          int iteration, std::uint64_t seed,
                          const QualityOptions& quality,
                          const FilterThresholds& thresholds) {
  const PoseLabels labels = label_pose(hand, obj, pose, task, quality, thresholds);
  DatasetRecord r;
  r.object_id = obj.id;
  r.task = task;
  r.description = std::move(description);
  r.pose = flatten(pose);
  r.rule_pass = labels.rule_pass;
  r.q1 = labels.q1;
  r.penetration_cm = labels.penetration_cm;
  r.validated = labels.validated;
  r.stage = std::move(stage);
  r.iteration = iteration;
  r.seed = seed;
  return r;
}

void verify_dataset(const std::vector<DatasetRecord>& records,
                    const HandModel& hand, const ObjectResolver& objects,
                    double tol) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    r.check();
    if (r.pose.size() != 9 + hand.dof()) {
      throw ValidationError("record " + std::to_string(i) +
                            ": pose does not match the hand");
    }
    const ObjectModel& obj = objects(r.object_id);
    const PoseLabels l =
        label_pose(hand, obj, unflatten(r.pose, hand.dof()), r.task);
    const bool same = l.rule_pass == r.rule_pass &&
                      l.validated == r.validated &&
                      std::abs(l.q1 - r.q1) <= tol &&
                      std::abs(l.penetration_cm - r.penetration_cm) <= tol;
    if (!same) {
      throw ValidationError("record " + std::to_string(i) + " (" +
                            r.object_id + ") does not match its labels");
    }
  }
}

std::map<std::string, std::string> split_objects(
    std::vector<std::string> object_ids, double unseen_fraction,
    std::uint64_t seed) {
  if (!(unseen_fraction >= 0.0 && unseen_fraction <= 1.0)) {
    throw InvalidRange("unseen fraction must lie in [0, 1]");
  }
  std::sort(object_ids.begin(), object_ids.end());
  object_ids.erase(std::unique(object_ids.begin(), object_ids.end()),
                   object_ids.end());
  Rng rng(mix64(seed ^ 0x5b117ULL));
  for (std::size_t i = object_ids.size(); i > 1; --i) {
    const int j = rng.uniform_int(0, static_cast<int>(i) - 1);
    std::swap(object_ids[i - 1], object_ids[static_cast<std::size_t>(j)]);
  }
  const auto unseen = static_cast<std::size_t>(
      std::llround(unseen_fraction * static_cast<double>(object_ids.size())));
  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < object_ids.size(); ++i) {
    out[object_ids[i]] = i < unseen ? "unseen" : "seen";
  }
  return out;
}

std::vector<DatasetRecord> aggregate_dataset(
    const std::vector<DatasetRecord>& records, const QuotaConfig& quota,
    std::uint64_t seed) {
  if (quota.task_oriented < 0 || quota.agnostic < 0) {
    throw InvalidRange("quotas must be non-negative");
  }
  // (object, task-oriented first) -> indices of validated records.
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  std::set<std::string> objects;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    r.check();
    objects.insert(r.object_id);
    if (!r.validated) continue;
    groups[{r.object_id, r.task_oriented() ? 0 : 1}].push_back(i);
  }
  const auto split = split_objects({objects.begin(), objects.end()},
                                   quota.unseen_fraction, seed);
  std::vector<DatasetRecord> out;
  for (const std::string& object : objects) {
    for (int mode = 0; mode < 2; ++mode) {
      const int want = mode == 0 ? quota.task_oriented : quota.agnostic;
      std::vector<std::size_t> pool = groups[{object, mode}];
      if (static_cast<int>(pool.size()) < want && !quota.allow_partial) {
        throw QuotaUnsatisfiable(
            "object '" + object + "' has " + std::to_string(pool.size()) +
            " validated " + (mode == 0 ? "task-oriented" : "task-agnostic") +
            " records, quota is " + std::to_string(want));
      }
      const std::size_t take =
          std::min(pool.size(), static_cast<std::size_t>(want));
      Rng rng(mix64(seed ^ fnv1a(object) ^ static_cast<std::uint64_t>(mode)));
      for (std::size_t i = 0; i < take; ++i) {
        const int j = rng.uniform_int(static_cast<int>(i),
                                      static_cast<int>(pool.size()) - 1);
        std::swap(pool[i], pool[static_cast<std::size_t>(j)]);
      }
      pool.resize(take);
      std::sort(pool.begin(), pool.end());
      for (std::size_t idx : pool) {
        DatasetRecord r = records[idx];
        r.split = split.at(object);
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace tograsp
