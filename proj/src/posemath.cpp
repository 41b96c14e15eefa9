#include "tograsp/posemath.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tograsp/errors.hpp"

namespace tograsp {

GraspPose GraspPose::zero(int joint_count) {
  GraspPose pose;
  pose.p1.setZero();
  pose.p2.setZero();
  pose.joints = Eigen::VectorXd::Zero(joint_count);
  return pose;
}

GraspPose GraspPose::identity(int joint_count) {
  GraspPose pose;
  pose.joints = Eigen::VectorXd::Zero(joint_count);
  return pose;
}

bool GraspPose::operator==(const GraspPose& other) const {
  return p1 == other.p1 && p2 == other.p2 &&
         translation == other.translation &&
         joints.size() == other.joints.size() && joints == other.joints;
}

Eigen::Matrix3d orthonormalize_6d(const Eigen::Vector3d& p1,
                                  const Eigen::Vector3d& p2) {
  const double n1 = p1.norm();
  if (!(n1 > kDegenerateEps)) {
    throw DegenerateRotation("6D rotation: |p1| below degeneracy threshold");
  }
  const Eigen::Vector3d r1 = p1 / n1;
  const Eigen::Vector3d ortho = p2 - r1.dot(p2) * r1;
  const double n2 = ortho.norm();
  if (!(n2 > kDegenerateEps)) {
    throw DegenerateRotation("6D rotation: p2 parallel to p1");
  }
  const Eigen::Vector3d r2 = ortho / n2;
  Eigen::Matrix3d r;
  r.col(0) = r1;
  r.col(1) = r2;
  r.col(2) = r1.cross(r2);
  return r;
}

void rotation_to_6d(const Eigen::Matrix3d& rotation, Eigen::Vector3d& p1,
                    Eigen::Vector3d& p2) {
  p1 = rotation.col(0);
  p2 = rotation.col(1);
}

GraspPose pose_from_rotation(const Eigen::Matrix3d& rotation,
                             const Eigen::Vector3d& translation,
                             const Eigen::VectorXd& joints) {
  GraspPose pose;
  rotation_to_6d(rotation, pose.p1, pose.p2);
  pose.translation = translation;
  pose.joints = joints;
  return pose;
}

Eigen::VectorXd flatten(const GraspPose& pose) {
  Eigen::VectorXd v(pose.state_dim());
  v.segment<3>(0) = pose.p1;
  v.segment<3>(3) = pose.p2;
  v.segment<3>(6) = pose.translation;
  v.tail(pose.dof()) = pose.joints;
  return v;
}

GraspPose unflatten(const Eigen::VectorXd& state, int joint_count) {
  if (state.size() != 9 + joint_count) {
    throw DimensionMismatch("pose state has length " +
                            std::to_string(state.size()) + ", expected " +
                            std::to_string(9 + joint_count));
  }
  GraspPose pose;
  pose.p1 = state.segment<3>(0);
  pose.p2 = state.segment<3>(3);
  pose.translation = state.segment<3>(6);
  pose.joints = state.tail(joint_count);
  return pose;
}

double rotation_angle_between(const Eigen::Matrix3d& a,
                              const Eigen::Matrix3d& b) {
  // |A - B|_F = 2 sqrt(2) sin(angle / 2); stable for small angles.
  const double s = std::min(1.0, (a - b).norm() / (2.0 * std::sqrt(2.0)));
  return 2.0 * std::asin(s);
}

}  // namespace tograsp
