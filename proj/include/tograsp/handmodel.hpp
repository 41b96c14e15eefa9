#pragma once

#include <Eigen/Geometry>
#include <filesystem>
#include <string>
#include <vector>

#include "tograsp/mesh.hpp"
#include "tograsp/posemath.hpp"

namespace tograsp {

// Revolute joint i drives link i + 1; link 0 is the wrist/palm root. Parents
// must precede children, which makes the tree acyclic by construction.
struct JointSpec {
  std::string name;
  int parent_link = 0;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // in the parent frame
  double lower = 0.0;
  double upper = 0.0;
};

struct LinkSpec {
  std::string name;
  std::vector<Eigen::Vector3d> points;  // surface samples, link frame
};

struct FingertipSpec {
  std::string name;
  int link = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

struct HandSpec {
  std::vector<JointSpec> joints;
  std::vector<LinkSpec> links;
  std::vector<FingertipSpec> fingertips;
  // Extra contact pads (e.g. the palm) that take part in contact extraction
  // but not in the task rules.
  std::vector<FingertipSpec> palm_sites;

  int dof() const { return static_cast<int>(joints.size()); }
  int link_index(const std::string& name) const;  // -1 if absent
  // Throws ValidationError on any schema violation.
  void validate() const;
};

struct Fingertip {
  std::string name;
  Eigen::Vector3d position;
  Eigen::Vector3d normal;
  Eigen::Vector3d tangent;  // unit, orthogonal to normal; fixed in the link
};

// Posed hand: surface cloud (3 x N2) with the owning link per column, the
// fingertip pads and the world transform of every link.
struct HandPoints {
  Eigen::Matrix3Xd points;
  std::vector<int> point_link;
  std::vector<Fingertip> fingertips;
  std::vector<Fingertip> palm_sites;
  std::vector<Eigen::Isometry3d> link_poses;

  const Fingertip& fingertip(const std::string& name) const;
  const Fingertip* find_fingertip(const std::string& name) const;
};

// Convex hull of one link's samples in its own frame, with the facet planes
// kept for exact depth queries.
struct LinkHull {
  TriMesh mesh;
  std::vector<Eigen::Vector3d> normals;  // outward unit
  std::vector<double> offsets;           // inside: n.x <= offset
  Eigen::Vector3d center;
  double radius = 0.0;

  // Depth below the hull surface of a point in the link frame, 0 outside.
  double sigma_local(const Eigen::Vector3d& p) const;
};

// Validated, immutable hand with its precomputed link hulls.
class HandModel {
 public:
  explicit HandModel(HandSpec spec);

  const HandSpec& spec() const { return spec_; }
  int dof() const { return spec_.dof(); }
  int point_count() const { return point_count_; }
  const std::vector<LinkHull>& hulls() const { return hulls_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }

  GraspPose clamp_joints(const GraspPose& pose) const;
  // Joints are clamped before evaluation; throws DimensionMismatch on a
  // wrong joint count and DegenerateRotation on a degenerate 6D rotation.
  HandPoints forward_kinematics(const GraspPose& pose) const;
  // Link transforms only (cheaper than full FK).
  std::vector<Eigen::Isometry3d> link_poses(const GraspPose& pose) const;

  // Joint angles mapped to [0, 1] by the limits.
  Eigen::VectorXd normalized_joints(const GraspPose& pose) const;

  // Links in the subtree below a joint (its child link and descendants).
  std::vector<int> subtree_links(int joint) const;
  // Joints on the chain from the root to a link, root first.
  std::vector<int> chain_joints(int link) const;

 private:
  HandSpec spec_;
  std::vector<LinkHull> hulls_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
  int point_count_ = 0;
};

// Union of posed link hulls; the hand "mesh" used for penetration queries.
class PosedHandSolid : public Solid {
 public:
  PosedHandSolid(const HandModel& hand, std::vector<Eigen::Isometry3d> poses);
  double sigma(const Eigen::Vector3d& p) const override;
  // Depth of p into the given link only.
  double sigma_link(int link, const Eigen::Vector3d& p) const;

 private:
  const HandModel* hand_;
  std::vector<Eigen::Isometry3d> poses_;
  std::vector<Eigen::Isometry3d> inverses_;
};

// Fixed three-finger hand (thumb, index, middle; two flexion joints each).
//
// Palm: 70 x 70 x 20 mm box, front face on the wrist z = 0 plane, so the palm
// faces +z. Index and middle roots sit on the +y edge at x = +/-18 mm and
// point along +y; the thumb root sits on the -y edge and points along -y.
// Phalanges are 16 x 16 mm boxes: index/middle 45 + 35 mm, thumb 40 + 30 mm.
// All joints flex toward +z over [0, 1.6] rad. Each distal link carries an
// 8 x 8 mm pad raised 3 mm on its inner face, 8 mm from the tip; the
// fingertip point is the pad center with normal +z in the link frame. One palm
// contact site sits at the center of the palm face.
// Every link has 64 surface samples (N2 = 448).
HandSpec builtin_test_hand();

HandSpec load_hand_spec(const std::filesystem::path& path);
void save_hand_spec(const HandSpec& spec, const std::filesystem::path& path);

// "builtin:test-hand" or a JSON hand file.
HandSpec resolve_hand_spec(const std::string& ref);

}  // namespace tograsp
