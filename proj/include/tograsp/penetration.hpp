#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tograsp/handmodel.hpp"
#include "tograsp/mesh.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/posemath.hpp"

namespace tograsp {

// Depth of u below the surface of a watertight mesh, 0 outside. Builds a
// MeshQuery per call; use MeshQuery::sigma for repeated queries.
double penetration_sigma(const Eigen::Vector3d& u, const TriMesh& mesh);

// Deepest mutual penetration:
//   max( max_{x in a_points} sigma(x, b), max_{x in b_points} sigma(x, a) ).
double penetration_energy(const Eigen::Matrix3Xd& a_points, const Solid& a,
                          const Eigen::Matrix3Xd& b_points, const Solid& b);
double penetration_energy(const Eigen::Matrix3Xd& a_points,
                          const TriMesh& a_mesh,
                          const Eigen::Matrix3Xd& b_points,
                          const TriMesh& b_mesh);

struct PenetrationStats {
  double max = 0.0;     // the penetration energy
  double sum_sq = 0.0;  // sum of squared depths over both point sets
};
PenetrationStats penetration_stats(const Eigen::Matrix3Xd& a_points,
                                   const Solid& a,
                                   const Eigen::Matrix3Xd& b_points,
                                   const Solid& b);

// Largest sigma of object samples inside the hand, in centimeters.
double max_penetration_depth_cm(const Eigen::Matrix3Xd& object_points,
                                const Solid& hand);

// Hand/object penetration energy for one posed hand, meters.
double hand_object_energy(const HandModel& hand, const HandPoints& posed,
                          const ObjectModel& obj);
double hand_object_energy(const HandModel& hand, const GraspPose& pose,
                          const ObjectModel& obj);

struct RefineOptions {
  int steps = 200;
  double step_size = 1e-3;
  double fd_step = 1e-5;
  int max_halvings = 8;
};

struct RefineResult {
  GraspPose pose;
  // Energy before the first step followed by the energy after every
  // accepted step.
  std::vector<double> trace;
  int accepted_steps = 0;

  double initial_energy() const { return trace.front(); }
  double final_energy() const { return trace.back(); }
};

// Gradient descent on the penetration energy over the flattened pose, with
// central finite-difference gradients and backtracking: a step is halved until
// the energy strictly decreases, for at most max_halvings halvings. The trial
// step doubles after each accepted gradient step, up to 8 x step_size. When the
// energy gradient yields no decrease (a flat or kinked maximum), a pattern
// search over +/- step_size moves of single coordinates (halved the same way)
// takes the move that most reduces the summed squared depths without raising
// the energy. The run stops at the first iteration without an accepted step.
// Joints are re-clamped after every step, so the returned energy never exceeds
// the input energy.
RefineResult refine_pose(const GraspPose& pose, const HandModel& hand,
                         const ObjectModel& obj,
                         const RefineOptions& options = {});

}  // namespace tograsp
