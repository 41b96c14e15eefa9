#pragma once

#include <Eigen/Dense>

namespace tograsp {

// Gram-Schmidt degeneracy threshold for the 6D rotation parameterization.
inline constexpr double kDegenerateEps = 1e-8;

// Wrist rotation as two free 3-vectors (the 6D parameterization), wrist
// translation in meters and J joint angles in radians. Joint values are not
// range-checked here; diffusion states routinely leave the joint limits.
struct GraspPose {
  Eigen::Vector3d p1 = Eigen::Vector3d::UnitX();
  Eigen::Vector3d p2 = Eigen::Vector3d::UnitY();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::VectorXd joints;

  int dof() const { return static_cast<int>(joints.size()); }
  int state_dim() const { return 9 + dof(); }

  static GraspPose zero(int joint_count);
  // Identity wrist at the origin with zero joints.
  static GraspPose identity(int joint_count);
  bool operator==(const GraspPose& other) const;
};

// Columns are r1 = p1/|p1|, r2 = normalize(p2 - (r1.p2) r1), r1 x r2.
// Throws DegenerateRotation when |p1| or the orthogonal part of p2 is below
// kDegenerateEps.
Eigen::Matrix3d orthonormalize_6d(const Eigen::Vector3d& p1,
                                  const Eigen::Vector3d& p2);

// First two columns of R.
void rotation_to_6d(const Eigen::Matrix3d& rotation, Eigen::Vector3d& p1,
                    Eigen::Vector3d& p2);

inline Eigen::Matrix3d rotation_of(const GraspPose& pose) {
  return orthonormalize_6d(pose.p1, pose.p2);
}

GraspPose pose_from_rotation(const Eigen::Matrix3d& rotation,
                             const Eigen::Vector3d& translation,
                             const Eigen::VectorXd& joints);

// State layout: [p1 (3), p2 (3), t (3), q (J)].
Eigen::VectorXd flatten(const GraspPose& pose);
GraspPose unflatten(const Eigen::VectorXd& state, int joint_count);

// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Eigen::Matrix3d& a,
                              const Eigen::Matrix3d& b);

}  // namespace tograsp
