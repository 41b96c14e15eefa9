#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tograsp/handmodel.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/quality.hpp"
#include "tograsp/taskeval.hpp"

namespace tograsp {

// One grasp with its labels and provenance. No task means task-agnostic.
struct DatasetRecord {
  std::string object_id;
  std::optional<TaskKind> task;
  std::string description;
  Eigen::VectorXd pose;  // flat (p1, p2, t, q)
  bool rule_pass = false;
  double q1 = 0.0;
  double penetration_cm = 0.0;
  bool validated = false;
  std::string stage;  // "seed", "agnostic", "bootstrap", "sample", ...
  int iteration = 0;
  std::uint64_t seed = 0;
  std::string split;  // "", "seen" or "unseen"

  bool task_oriented() const { return task.has_value(); }
  // Throws ValidationError when validated is set without rule_pass.
  void check() const;
};

// One JSON object per line with the keys, in order: object, task,
// description, pose, rule_pass, q1, penetration_cm, validated, stage,
// iteration, seed, split. task is null for task-agnostic records.
std::string to_json_line(const DatasetRecord& record);
DatasetRecord parse_json_line(const std::string& line);  // ParseError
void write_dataset(const std::filesystem::path& path,
                   const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path);
// Every *.jsonl file of a directory (sorted by name), or a single file.
std::vector<DatasetRecord> read_dataset_tree(const std::filesystem::path& path,
                                             std::vector<std::string>* ids = nullptr);

// Recomputed labels of a record under the current geometry.
struct PoseLabels {
  double q1 = 0.0;  // zeroed above the penetration cutoff
  double raw_q1 = 0.0;
  double penetration_cm = 0.0;
  double energy = 0.0;
  bool collision_free = false;
  bool rule_pass = true;  // vacuous for task-agnostic records
  bool stable = false;
  bool validated = false;
};

PoseLabels label_pose(const HandModel& hand, const ObjectModel& obj,
                      const GraspPose& pose, std::optional<TaskKind> task,
                      const QualityOptions& quality = {},
                      const FilterThresholds& thresholds = {});

DatasetRecord make_record(const HandModel& hand, const ObjectModel& obj,
                          const GraspPose& pose, std::optional<TaskKind> task,
                          std::string description, std::string stage,
                          int iteration, std::uint64_t seed,
                          const QualityOptions& quality = {},
                          const FilterThresholds& thresholds = {});

using ObjectResolver = std::function<const ObjectModel&(const std::string&)>;

// Re-evaluates every record and throws ValidationError naming the first whose
// stored labels disagree (q1 and depth within `tol`).
void verify_dataset(const std::vector<DatasetRecord>& records,
                    const HandModel& hand, const ObjectResolver& objects,
                    double tol = 1e-9);

struct QuotaConfig {
  int task_oriented = 500;
  int agnostic = 500;
  bool allow_partial = false;
  double unseen_fraction = 0.1;
};

// Uniformly subsamples validated records to the quota per (object, mode),
// deterministically under `seed`, and marks a random 10% of the objects
// (rounded to nearest) as unseen. Output is ordered by object id, then mode
// (task-oriented first), then input order. Throws QuotaUnsatisfiable unless
// allow_partial.
std::vector<DatasetRecord> aggregate_dataset(
    const std::vector<DatasetRecord>& records, const QuotaConfig& quota,
    std::uint64_t seed);

// Object ids sorted, shuffled under `seed`; the first round(n * fraction) are
// unseen.
std::map<std::string, std::string> split_objects(
    std::vector<std::string> object_ids, double unseen_fraction,
    std::uint64_t seed);

}  // namespace tograsp
