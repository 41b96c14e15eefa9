#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tograsp/dataset.hpp"
#include "tograsp/diffusion.hpp"
#include "tograsp/handmodel.hpp"
#include "tograsp/nets.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/penetration.hpp"
#include "tograsp/quality.hpp"
#include "tograsp/taskdesc.hpp"
#include "tograsp/taskeval.hpp"

namespace tograsp {

struct AgnosticOptions {
  // Start distance: inflate * bounding radius + margin from the center.
  double inflate = 1.2;
  double margin = 0.01;
  // Approach march and the contact bisection tolerance (wrist travel / tip
  // travel), meters.
  double approach_step = 0.002;
  double tolerance = 1e-4;
  // Palm stand-off after first contact, drawn uniformly from [0, max_standoff].
  double max_standoff = 0.004;
  // Joint sweep increment before bisection, radians.
  double joint_step = 0.1;
  // Per finger, the root joint is backed off from its contact angle in
  // `backoff` increments (up to backoff_steps - 1 of them) and the rest of
  // the chain re-closed; the trial whose pad ends closest to the surface is
  // kept, stopping early once the gap is within pad_tolerance.
  double backoff = 0.1;
  int backoff_steps = 9;
  double pad_tolerance = 5e-4;
  QualityOptions quality;
  int workers = 1;
};

struct AgnosticCandidate {
  GraspPose pose;
  PoseLabels labels;
};

// Approaches along the palm normal until first contact, backs off by a random
// stand-off and returns the wrist pose with open fingers.
GraspPose approach_pose(const HandModel& hand, const ObjectModel& obj,
                        const Eigen::Vector3d& direction, double roll,
                        double standoff, const AgnosticOptions& options = {});

// Closes each finger onto the object: joints outside fingertip chains close
// until contact; along each fingertip chain the root closes to contact, the
// children follow, and the root back-off search seats the pad.
GraspPose close_fingers(const HandModel& hand, const ObjectModel& obj,
                        const GraspPose& pose,
                        const AgnosticOptions& options = {});

// n raw candidates with labels; candidate i draws from rng.split(i).
std::vector<AgnosticCandidate> propose_agnostic(const HandModel& hand,
                                                const ObjectModel& obj, int n,
                                                const Rng& rng,
                                                const AgnosticOptions& options = {});

// The candidates of propose_agnostic that pass the stability precheck.
std::vector<GraspPose> generate_agnostic(const HandModel& hand,
                                         const ObjectModel& obj, int n,
                                         const Rng& rng,
                                         const AgnosticOptions& options = {});

struct DiversityStats {
  double mean_variance = 0.0;  // of normalized joint angles, per joint
  double mean_range = 0.0;
  int count = 0;
};

DiversityStats diversity(const HandModel& hand,
                         const std::vector<GraspPose>& poses);

struct BootstrapConfig {
  int iterations = 5;
  int batch = 1024;
  // Stop once an iteration grows the valid set by less than this fraction.
  double min_growth = 0.01;
  // Desk-scale defaults; state_dim is filled in from the hand.
  ModelConfig model = [] {
    ModelConfig m;
    m.hidden = 256;
    m.hand_points = 64;
    m.object_points = 128;
    return m;
  }();
  TrainOptions train = [] {
    TrainOptions t;
    t.steps = 300;
    return t;
  }();
  // Extra optimizer steps on the first iteration, when the model starts cold.
  int warmup_steps = 1700;
  SamplerConfig sampler = [] {
    SamplerConfig s;
    s.K = 50;
    s.beta_end = 0.35;
    return s;
  }();
  // Joint entries of the state-normalizer floor in radians, used when
  // train.scale_floor is left empty.
  double joint_scale_floor = 0.8;
  RefineOptions refine;
  QualityOptions quality;
  FilterThresholds thresholds;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct BootstrapIteration {
  int iteration = 0;
  int sampled = 0;
  int passed = 0;  // refined samples passing rule and precheck
  int added = 0;   // new distinct poses
  int count = 0;   // valid-set size after the union
  DiversityStats stats;
  double final_loss = 0.0;
};

struct BootstrapResult {
  DiffusionNet model;
  std::vector<DatasetRecord> records;  // seeds followed by accepted samples
  DiversityStats seed_stats;
  std::vector<BootstrapIteration> iterations;

  // iteration,count,added,mean_variance,mean_range (row 0 = seeds).
  std::string diversity_csv() const;
};

// Seeds failing the task rule are ignored; throws NoSeedGrasps when none is
// left.
BootstrapResult bootstrap(const HandModel& hand, const ObjectModel& obj,
                          TaskKind task, const std::vector<GraspPose>& seeds,
                          const BootstrapConfig& config,
                          const TemplateBank& bank = default_bank());

struct EvalOptions {
  int n = 64;
  RefineOptions refine;
  QualityOptions quality;
  FilterThresholds thresholds;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct EvalMetrics {
  double q1 = 0.0;              // mean, zeroed above the penetration cutoff
  double penetration_cm = 0.0;  // mean
  double eta_f = 0.0;           // collision-free fraction
  double rule_pass = 0.0;       // fraction
};

struct EvalRow {
  std::string object;
  TaskKind task = TaskKind::kSprayPress;
  int n = 0;
  EvalMetrics unrefined;
  EvalMetrics refined;
};

struct EvalReport {
  std::string label;  // "trained" or "baseline-random"
  std::vector<EvalRow> rows;

  std::string to_csv() const;
  std::string summary() const;
};

EvalMetrics summarize(const std::vector<PoseLabels>& labels);

// Samples n grasps per (object, task) and reports paired metrics before and
// after refinement. Untrained models are evaluated as "baseline-random".
EvalReport evaluate(const HandModel& hand, const DiffusionNet& net,
                    const std::vector<const ObjectModel*>& objects,
                    const std::vector<TaskKind>& tasks,
                    const NoiseSchedule& sched, const EvalOptions& options = {},
                    const TemplateBank& bank = default_bank());

}  // namespace tograsp
