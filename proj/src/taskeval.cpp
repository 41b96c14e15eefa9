#include "tograsp/taskeval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "tograsp/errors.hpp"

namespace tograsp {

const std::vector<TaskKind>& all_tasks() {
  static const std::vector<TaskKind> tasks = {
      TaskKind::kStaplerClick, TaskKind::kSprayPress, TaskKind::kSprayTrigger,
      TaskKind::kCapTwist, TaskKind::kPenPress};
  return tasks;
}

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::kStaplerClick:
      return "stapler-click";
    case TaskKind::kSprayPress:
      return "spray-press";
    case TaskKind::kSprayTrigger:
      return "spray-trigger";
    case TaskKind::kCapTwist:
      return "cap-twist";
    case TaskKind::kPenPress:
      return "pen-press";
  }
  return "spray-press";
}

TaskKind parse_task(const std::string& name) {
  for (TaskKind t : all_tasks()) {
    std::string camel;
    bool upper = true;
    for (char c : to_string(t)) {
      if (c == '-') {
        upper = true;
        continue;
      }
      camel.push_back(upper ? static_cast<char>(std::toupper(c)) : c);
      upper = false;
    }
    if (name == to_string(t) || name == camel) return t;
  }
  throw ParseError("unknown task '" + name + "'");
}

std::string FilterDiagnostic::to_json() const {
  nlohmann::json j;
  j["task"] = to_string(task);
  j["pass"] = pass;
  nlohmann::json distances = nlohmann::json::object();
  nlohmann::json dots = nlohmann::json::object();
  for (const FilterCondition& c : conditions) {
    if (c.name.rfind("d(", 0) == 0) {
      distances[c.name] = c.value;
    } else {
      dots[c.name] = c.value;
    }
  }
  j["distances"] = distances;
  j["dots"] = dots;
  return j.dump();
}

SurfaceHit surface_distance(const ObjectModel& obj, const std::string& surface,
                            const Eigen::Vector3d& p) {
  const NamedSurface& s = obj.surface(surface);
  SurfaceHit hit;
  hit.distance = std::numeric_limits<double>::infinity();
  for (int idx : s.indices) {
    const double d = (obj.points.col(idx) - p).norm();
    if (d < hit.distance) {
      hit.distance = d;
      hit.normal = obj.normals.col(idx);
    }
  }
  return hit;
}

namespace {

class Rule {
 public:
  Rule(TaskKind task, const HandPoints& hand, const ObjectModel& obj)
      : hand_(hand), obj_(obj) {
    diag_.task = task;
  }

  // Records d(finger, surface) <= threshold.
  bool near(const std::string& finger, const std::string& surface,
            double threshold, const std::string& tag = "") {
    const SurfaceHit hit =
        surface_distance(obj_, surface, hand_.fingertip(finger).position);
    return record("d(" + finger + "," + surface + ")" + tag, hit.distance,
                  threshold, hit.distance <= threshold);
  }

  // Records n_finger . n_surface < 0 at the surface sample nearest the tip.
  bool opposed(const std::string& finger, const std::string& surface,
               const std::string& tag = "") {
    const Fingertip& tip = hand_.fingertip(finger);
    const SurfaceHit hit = surface_distance(obj_, surface, tip.position);
    const double dot = tip.normal.dot(hit.normal);
    return record("n(" + finger + ").n(" + surface + ")" + tag, dot, 0.0,
                  dot < 0.0);
  }

  bool record(std::string name, double value, double threshold, bool pass) {
    diag_.conditions.push_back({std::move(name), value, threshold, pass});
    return pass;
  }

  FilterDiagnostic finish(bool pass) {
    diag_.pass = pass;
    return std::move(diag_);
  }

  const HandPoints& hand() const { return hand_; }

 private:
  const HandPoints& hand_;
  const ObjectModel& obj_;
  FilterDiagnostic diag_;
};

bool stapler_branch(Rule& rule, const std::string& thumb_surface,
                    const std::string& finger_surface, double threshold,
                    const std::string& tag) {
  bool thumb_ok = rule.near("thumb", thumb_surface, threshold, tag);
  thumb_ok = rule.opposed("thumb", thumb_surface, tag) && thumb_ok;
  bool any_finger = false;
  for (const char* finger : {"index", "middle"}) {
    bool ok = rule.near(finger, finger_surface, threshold, tag);
    ok = rule.opposed(finger, finger_surface, tag) && ok;
    any_finger = any_finger || ok;
  }
  return thumb_ok && any_finger;
}

}  // namespace

FilterDiagnostic rule_filter(TaskKind task, const HandPoints& hand,
                             const ObjectModel& obj,
                             const FilterThresholds& thresholds) {
  Rule rule(task, hand, obj);
  switch (task) {
    case TaskKind::kStaplerClick: {
      obj.surface("top");
      obj.surface("bottom");
      const bool direct =
          stapler_branch(rule, "top", "bottom", thresholds.stapler, "");
      const bool reversed =
          stapler_branch(rule, "bottom", "top", thresholds.stapler, "[rev]");
      return rule.finish(direct || reversed);
    }
    case TaskKind::kSprayPress: {
      const bool thumb = rule.near("thumb", "button", thresholds.spray_press);
      const bool index = rule.near("index", "button", thresholds.spray_press);
      return rule.finish(thumb || index);
    }
    case TaskKind::kSprayTrigger: {
      const bool close = rule.near("index", "trigger", thresholds.spray_trigger);
      const bool opposed = rule.opposed("index", "trigger");
      return rule.finish(close && opposed);
    }
    case TaskKind::kCapTwist: {
      if (!obj.cap_center) {
        throw MissingSurface("object '" + obj.id + "' has no cap");
      }
      bool all = true;
      for (const Fingertip& tip : hand.fingertips) {
        const double d = (tip.position - *obj.cap_center).norm();
        all = rule.record("d(" + tip.name + ",cap)", d, thresholds.cap_twist,
                          d <= thresholds.cap_twist) &&
              all;
      }
      return rule.finish(all && !hand.fingertips.empty());
    }
    case TaskKind::kPenPress: {
      const bool thumb = rule.near("thumb", "button", thresholds.pen_press);
      const bool index = rule.near("index", "button", thresholds.pen_press);
      return rule.finish(thumb || index);
    }
  }
  return rule.finish(false);
}

bool stability_precheck(const GraspAssessment& assessment) {
  return assessment.raw_q1 > 0.0 &&
         assessment.report.penetration_cm <= kQ1PenetrationCutoffCm;
}

bool stability_precheck(const HandModel& hand, const ObjectModel& obj,
                        const GraspPose& pose, const QualityOptions& options) {
  const HandPoints posed = hand.forward_kinematics(pose);
  return stability_precheck(assess_grasp(hand, posed, obj, options));
}

void RewardWeights::validate() const {
  for (double v : {alpha1, alpha2, alpha3, alpha4, h_max, h_hat, theta_hat}) {
    if (!(v > 0.0)) throw InvalidRange("reward weights must be positive");
  }
}

RewardTerms reward(const ExecState& s, const RewardWeights& w) {
  w.validate();
  for (double v : {s.theta, s.theta0}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidRange("normalized joint angle outside [0, 1]");
    }
  }
  RewardTerms r;
  r.r_t = w.alpha1 * (s.theta - s.theta0);
  r.r_l = w.alpha2 * std::min(s.h - s.h0, w.h_max);
  r.r_c = classify_success(s, w) ? w.alpha3 : 0.0;
  r.p_d = -w.alpha4 * (s.t_hand - s.t_object).norm();
  r.r = r.r_t + r.r_l + r.r_c + r.p_d;
  return r;
}

bool classify_success(const ExecState& state, const RewardWeights& w) {
  return state.h > w.h_hat && state.theta > w.theta_hat;
}

}  // namespace tograsp
