#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tograsp/handmodel.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/posemath.hpp"
#include "tograsp/quality.hpp"

namespace tograsp {

enum class TaskKind { kStaplerClick, kSprayPress, kSprayTrigger, kCapTwist, kPenPress };

const std::vector<TaskKind>& all_tasks();
// "stapler-click", "spray-press", "spray-trigger", "cap-twist", "pen-press".
std::string to_string(TaskKind task);
// Accepts the kebab-case names and the CamelCase forms (e.g. "SprayPress").
// Throws ParseError.
TaskKind parse_task(const std::string& name);

// Distance thresholds in meters.
struct FilterThresholds {
  double stapler = 0.005;
  double spray_press = 0.005;
  double spray_trigger = 0.005;
  double cap_twist = 0.025;
  double pen_press = 0.0025;
};

struct FilterCondition {
  std::string name;   // e.g. "d(thumb,top)" or "n(thumb).n(top)"
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct FilterDiagnostic {
  TaskKind task = TaskKind::kSprayPress;
  bool pass = false;
  std::vector<FilterCondition> conditions;

  std::string to_json() const;
};

// Minimum distance from p to the samples of a named surface and the outward
// normal of the nearest sample. Throws MissingSurface.
struct SurfaceHit {
  double distance = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
};
SurfaceHit surface_distance(const ObjectModel& obj, const std::string& surface,
                            const Eigen::Vector3d& p);

// Task rule on the posed fingertips. Distances are inclusive (<=), normal
// conditions strict (dot < 0). The stapler rule is evaluated once with the
// thumb on the top surface and once with the roles reversed; either passes.
FilterDiagnostic rule_filter(TaskKind task, const HandPoints& hand,
                             const ObjectModel& obj,
                             const FilterThresholds& thresholds = {});

// Force-closure proxy for the lift test: raw Q1 > 0 and object penetration
// into the hand at most 0.5 cm.
bool stability_precheck(const GraspAssessment& assessment);
bool stability_precheck(const HandModel& hand, const ObjectModel& obj,
                        const GraspPose& pose,
                        const QualityOptions& options = {});

struct RewardWeights {
  double alpha1 = 80.0;
  double alpha2 = 10.0;
  double alpha3 = 50.0;
  double alpha4 = 10.0;
  double h_max = 0.15;     // m
  double h_hat = 0.10;     // m
  double theta_hat = 0.6;  // normalized

  // Throws InvalidRange unless every field is positive.
  void validate() const;
  // True when the success height is not below the lift clip.
  bool flagged() const { return h_hat >= h_max; }
};

struct ExecState {
  double theta = 0.0;
  double theta0 = 0.0;
  double h = 0.0;
  double h0 = 0.0;
  Eigen::Vector3d t_hand = Eigen::Vector3d::Zero();
  Eigen::Vector3d t_object = Eigen::Vector3d::Zero();
};

struct RewardTerms {
  double r_t = 0.0;
  double r_l = 0.0;
  double r_c = 0.0;
  double p_d = 0.0;
  double r = 0.0;
};

// r_t = a1 (theta - theta0), r_l = a2 min(h - h0, h_max),
// r_c = a3 [h > h_hat and theta > theta_hat], p_d = -a4 |t_hand - t_object|,
// r = r_t + r_l + r_c + p_d. Throws InvalidRange for angles outside [0, 1].
RewardTerms reward(const ExecState& state, const RewardWeights& w = {});

bool classify_success(const ExecState& state, const RewardWeights& w = {});

}  // namespace tograsp
