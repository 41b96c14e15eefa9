#include "tograsp/handmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "tograsp/convex_hull.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/rng.hpp"

namespace tograsp {

using nlohmann::json;

int HandSpec::link_index(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(links.size()); ++i) {
    if (links[i].name == name) return i;
  }
  return -1;
}

void HandSpec::validate() const {
  if (links.size() != joints.size() + 1) {
    throw ValidationError("hand spec: expected one link per joint plus root");
  }
  for (int j = 0; j < dof(); ++j) {
    const auto& joint = joints[j];
    if (joint.parent_link < 0 || joint.parent_link > j) {
      throw ValidationError("hand spec: joint '" + joint.name +
                            "' has a parent that does not precede its link");
    }
    if (std::abs(joint.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError("hand spec: joint '" + joint.name +
                            "' axis is not unit length");
    }
    if (!(joint.lower <= joint.upper)) {
      throw ValidationError("hand spec: joint '" + joint.name +
                            "' has lower > upper");
    }
  }
  for (const auto& link : links) {
    if (link.points.size() < 4) {
      throw ValidationError("hand spec: link '" + link.name +
                            "' needs at least 4 surface points");
    }
  }
  for (const char* required : {"thumb", "index", "middle"}) {
    const bool found =
        std::any_of(fingertips.begin(), fingertips.end(),
                    [&](const FingertipSpec& f) { return f.name == required; });
    if (!found) {
      throw ValidationError(std::string("hand spec: missing fingertip '") +
                            required + "'");
    }
  }
  for (const auto& tip : palm_sites) {
    if (tip.link < 0 || tip.link >= static_cast<int>(links.size()) ||
        std::abs(tip.normal.norm() - 1.0) > 1e-9) {
      throw ValidationError("hand spec: palm site '" + tip.name +
                            "' has an unknown link or a non-unit normal");
    }
  }
  for (const auto& tip : fingertips) {
    if (tip.link < 0 || tip.link >= static_cast<int>(links.size())) {
      throw ValidationError("hand spec: fingertip '" + tip.name +
                            "' references an unknown link");
    }
    if (std::abs(tip.normal.norm() - 1.0) > 1e-9) {
      throw ValidationError("hand spec: fingertip '" + tip.name +
                            "' normal is not unit length");
    }
  }
}

const Fingertip* HandPoints::find_fingertip(const std::string& name) const {
  for (const auto& f : fingertips) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const Fingertip& HandPoints::fingertip(const std::string& name) const {
  if (const auto* f = find_fingertip(name)) return *f;
  throw Error("hand has no fingertip '" + name + "'");
}

double LinkHull::sigma_local(const Eigen::Vector3d& p) const {
  if ((p - center).squaredNorm() > radius * radius) return 0.0;
  double depth = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < normals.size(); ++f) {
    const double gap = offsets[f] - normals[f].dot(p);
    if (gap <= 0.0) return 0.0;
    depth = std::min(depth, gap);
  }
  return depth;
}

HandModel::HandModel(HandSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const int nj = spec_.dof();
  lower_.resize(nj);
  upper_.resize(nj);
  for (int j = 0; j < nj; ++j) {
    lower_[j] = spec_.joints[j].lower;
    upper_[j] = spec_.joints[j].upper;
  }
  for (const auto& link : spec_.links) {
    LinkHull hull;
    try {
      hull.mesh = convex_hull_mesh(link.points);
    } catch (const DegenerateHull&) {
      throw ValidationError("hand spec: link '" + link.name +
                            "' samples do not enclose a volume");
    }
    Aabb box = hull.mesh.bounds();
    hull.center = box.center();
    for (const auto& v : hull.mesh.vertices) {
      hull.radius = std::max(hull.radius, (v - hull.center).norm());
    }
    hull.radius *= 1.0 + 1e-9;
    for (int f = 0; f < static_cast<int>(hull.mesh.triangles.size()); ++f) {
      const Eigen::Vector3d n = hull.mesh.face_normal(f);
      hull.normals.push_back(n);
      hull.offsets.push_back(n.dot(hull.mesh.vertices[hull.mesh.triangles[f][0]]));
    }
    hulls_.push_back(std::move(hull));
    point_count_ += static_cast<int>(link.points.size());
  }
}

GraspPose HandModel::clamp_joints(const GraspPose& pose) const {
  GraspPose out = pose;
  if (out.joints.size() == lower_.size()) {
    out.joints = out.joints.cwiseMax(lower_).cwiseMin(upper_);
  }
  return out;
}

std::vector<Eigen::Isometry3d> HandModel::link_poses(
    const GraspPose& pose) const {
  if (pose.dof() != dof()) {
    throw DimensionMismatch("pose has " + std::to_string(pose.dof()) +
                            " joints, hand has " + std::to_string(dof()));
  }
  const Eigen::VectorXd q = pose.joints.cwiseMax(lower_).cwiseMin(upper_);
  std::vector<Eigen::Isometry3d> poses(spec_.links.size());
  poses[0].setIdentity();
  poses[0].linear() = rotation_of(pose);
  poses[0].translation() = pose.translation;
  for (int j = 0; j < dof(); ++j) {
    const auto& joint = spec_.joints[j];
    Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
    local.translation() = joint.origin;
    local.linear() = Eigen::AngleAxisd(q[j], joint.axis).toRotationMatrix();
    poses[j + 1] = poses[joint.parent_link] * local;
  }
  return poses;
}

HandPoints HandModel::forward_kinematics(const GraspPose& pose) const {
  HandPoints out;
  out.link_poses = link_poses(pose);
  out.points.resize(3, point_count_);
  out.point_link.resize(point_count_);
  int col = 0;
  for (int l = 0; l < static_cast<int>(spec_.links.size()); ++l) {
    const auto& T = out.link_poses[l];
    for (const auto& p : spec_.links[l].points) {
      out.points.col(col) = T * p;
      out.point_link[col] = l;
      ++col;
    }
  }
  auto pose_site = [&](const FingertipSpec& tip) {
    const auto& T = out.link_poses[tip.link];
    Eigen::Vector3d t = Eigen::Vector3d::UnitX() -
                        tip.normal.x() * tip.normal;
    if (t.norm() < 1e-6) t = Eigen::Vector3d::UnitY() - tip.normal.y() * tip.normal;
    return Fingertip{tip.name, T * tip.point, T.linear() * tip.normal,
                     T.linear() * t.normalized()};
  };
  for (const auto& tip : spec_.fingertips) out.fingertips.push_back(pose_site(tip));
  for (const auto& tip : spec_.palm_sites) out.palm_sites.push_back(pose_site(tip));
  return out;
}

Eigen::VectorXd HandModel::normalized_joints(const GraspPose& pose) const {
  Eigen::VectorXd n(dof());
  for (int j = 0; j < dof(); ++j) {
    const double span = upper_[j] - lower_[j];
    n[j] = span > 0.0
               ? std::clamp((pose.joints[j] - lower_[j]) / span, 0.0, 1.0)
               : 0.0;
  }
  return n;
}

std::vector<int> HandModel::subtree_links(int joint) const {
  std::vector<int> links = {joint + 1};
  for (int j = joint + 1; j < dof(); ++j) {
    const int parent = spec_.joints[j].parent_link;
    if (std::find(links.begin(), links.end(), parent) != links.end()) {
      links.push_back(j + 1);
    }
  }
  return links;
}

std::vector<int> HandModel::chain_joints(int link) const {
  std::vector<int> chain;
  while (link > 0) {
    chain.push_back(link - 1);
    link = spec_.joints[link - 1].parent_link;
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

PosedHandSolid::PosedHandSolid(const HandModel& hand,
                               std::vector<Eigen::Isometry3d> poses)
    : hand_(&hand), poses_(std::move(poses)) {
  inverses_.reserve(poses_.size());
  for (const auto& T : poses_) inverses_.push_back(T.inverse());
}

double PosedHandSolid::sigma_link(int link, const Eigen::Vector3d& p) const {
  return hand_->hulls()[link].sigma_local(inverses_[link] * p);
}

double PosedHandSolid::sigma(const Eigen::Vector3d& p) const {
  double depth = 0.0;
  for (int l = 0; l < static_cast<int>(poses_.size()); ++l) {
    depth = std::max(depth, sigma_link(l, p));
  }
  return depth;
}

namespace {

// Deterministic area-weighted samples on the surface of an axis-aligned box,
// always including its 8 corners.
std::vector<Eigen::Vector3d> box_samples(const Eigen::Vector3d& lo,
                                         const Eigen::Vector3d& hi, int count,
                                         std::uint64_t seed) {
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 8; ++i) {
    pts.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                     (i & 4) ? hi.z() : lo.z());
  }
  const Eigen::Vector3d e = hi - lo;
  const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
  const double total = areas[0] + areas[1] + areas[2];
  Rng rng(seed);
  while (static_cast<int>(pts.size()) < count) {
    double u = rng.uniform() * total;
    int axis = 0;
    while (axis < 2 && u > areas[axis]) u -= areas[axis++];
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) p[k] = lo[k] + rng.uniform() * e[k];
    p[axis] = rng.uniform() < 0.5 ? lo[axis] : hi[axis];
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

HandSpec builtin_test_hand() {
  constexpr double kHalfWidth = 0.008;
  constexpr double kPadRaise = 0.003;
  constexpr double kPadHalf = 0.004;
  constexpr double kPadFromTip = 0.008;
  constexpr int kPointsPerLink = 64;

  HandSpec spec;
  spec.links.push_back(
      {"palm", box_samples({-0.035, -0.035, -0.02}, {0.035, 0.035, 0.0},
                           kPointsPerLink, 101)});

  struct Finger {
    const char* name;
    double root_x;
    double direction;  // +1 along +y, -1 along -y
    double proximal;
    double distal;
  };
  const Finger fingers[] = {{"thumb", 0.0, -1.0, 0.040, 0.030},
                            {"index", 0.018, 1.0, 0.045, 0.035},
                            {"middle", -0.018, 1.0, 0.045, 0.035}};
  std::uint64_t seed = 200;
  for (const auto& f : fingers) {
    const double s = f.direction;
    // Positive flexion about +x (or -x for the thumb) curls toward +z.
    const Eigen::Vector3d axis(s, 0.0, 0.0);
    auto span = [&](double len) {
      return std::pair<Eigen::Vector3d, Eigen::Vector3d>(
          {-kHalfWidth, std::min(0.0, s * len), -kHalfWidth},
          {kHalfWidth, std::max(0.0, s * len), kHalfWidth});
    };

    const int palm = 0;
    spec.joints.push_back({std::string(f.name) + "_proximal", palm, axis,
                           Eigen::Vector3d(f.root_x, s * 0.035, 0.0), 0.0,
                           1.6});
    auto [plo, phi] = span(f.proximal);
    spec.links.push_back({std::string(f.name) + "_proximal_link",
                          box_samples(plo, phi, kPointsPerLink, seed++)});
    const int proximal_link = static_cast<int>(spec.links.size()) - 1;

    spec.joints.push_back({std::string(f.name) + "_distal", proximal_link,
                           axis, Eigen::Vector3d(0.0, s * f.proximal, 0.0),
                           0.0, 1.6});
    auto [dlo, dhi] = span(f.distal);
    const double pad_y = s * (f.distal - kPadFromTip);
    const double pad_z = kHalfWidth + kPadRaise;
    std::vector<Eigen::Vector3d> pad = {
        {0.0, pad_y, pad_z},
        {-kPadHalf, pad_y - kPadHalf, pad_z},
        {kPadHalf, pad_y - kPadHalf, pad_z},
        {-kPadHalf, pad_y + kPadHalf, pad_z},
        {kPadHalf, pad_y + kPadHalf, pad_z}};
    auto pts = box_samples(dlo, dhi, kPointsPerLink - 5, seed++);
    pts.insert(pts.begin() + 8, pad.begin(), pad.end());
    spec.links.push_back({std::string(f.name) + "_distal_link", pts});
    const int distal_link = static_cast<int>(spec.links.size()) - 1;
    spec.fingertips.push_back(
        {f.name, distal_link, pad.front(), Eigen::Vector3d::UnitZ()});
  }
  spec.palm_sites.push_back(
      {"palm", 0, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ()});
  return spec;
}

namespace {

Eigen::Vector3d vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(what + ": expected a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

HandSpec load_hand_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open hand spec " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("hand spec " + path.string() + ": " + e.what());
  }
  HandSpec spec;
  try {
    for (const auto& l : doc.at("links")) {
      LinkSpec link{l.at("name").get<std::string>(), {}};
      for (const auto& p : l.at("points")) link.points.push_back(vec3(p, "link point"));
      spec.links.push_back(std::move(link));
    }
    for (const auto& j : doc.at("joints")) {
      JointSpec joint;
      joint.name = j.at("name").get<std::string>();
      const auto parent = j.at("parent").get<std::string>();
      joint.parent_link = spec.link_index(parent);
      if (joint.parent_link < 0) {
        throw ParseError("joint '" + joint.name + "': unknown parent '" + parent + "'");
      }
      joint.axis = vec3(j.at("axis"), "joint axis");
      joint.origin = vec3(j.at("origin"), "joint origin");
      const auto& lim = j.at("limits");
      if (!lim.is_array() || lim.size() != 2) throw ParseError("joint limits must be [lo, hi]");
      joint.lower = lim[0].get<double>();
      joint.upper = lim[1].get<double>();
      spec.joints.push_back(std::move(joint));
    }
    for (const auto& f : doc.at("fingertips")) {
      FingertipSpec tip;
      tip.name = f.at("name").get<std::string>();
      const auto link = f.at("link").get<std::string>();
      tip.link = spec.link_index(link);
      if (tip.link < 0) throw ParseError("fingertip '" + tip.name + "': unknown link");
      tip.point = vec3(f.at("point"), "fingertip point");
      tip.normal = vec3(f.at("normal"), "fingertip normal");
      spec.fingertips.push_back(std::move(tip));
    }
    if (doc.contains("palm_sites")) {
      for (const auto& f : doc.at("palm_sites")) {
        FingertipSpec site;
        site.name = f.at("name").get<std::string>();
        site.link = spec.link_index(f.at("link").get<std::string>());
        if (site.link < 0) throw ParseError("palm site '" + site.name + "': unknown link");
        site.point = vec3(f.at("point"), "palm site point");
        site.normal = vec3(f.at("normal"), "palm site normal");
        spec.palm_sites.push_back(std::move(site));
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("hand spec " + path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void save_hand_spec(const HandSpec& spec, const std::filesystem::path& path) {
  json doc;
  doc["joints"] = json::array();
  for (const auto& j : spec.joints) {
    doc["joints"].push_back({{"name", j.name},
                             {"parent", spec.links[j.parent_link].name},
                             {"axis", to_json(j.axis)},
                             {"origin", to_json(j.origin)},
                             {"limits", {j.lower, j.upper}}});
  }
  doc["links"] = json::array();
  for (const auto& l : spec.links) {
    json pts = json::array();
    for (const auto& p : l.points) pts.push_back(to_json(p));
    doc["links"].push_back({{"name", l.name}, {"points", pts}});
  }
  doc["fingertips"] = json::array();
  for (const auto& f : spec.fingertips) {
    doc["fingertips"].push_back({{"name", f.name},
                                 {"link", spec.links[f.link].name},
                                 {"point", to_json(f.point)},
                                 {"normal", to_json(f.normal)}});
  }
  doc["palm_sites"] = json::array();
  for (const auto& f : spec.palm_sites) {
    doc["palm_sites"].push_back({{"name", f.name},
                                 {"link", spec.links[f.link].name},
                                 {"point", to_json(f.point)},
                                 {"normal", to_json(f.normal)}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

HandSpec resolve_hand_spec(const std::string& ref) {
  if (ref == "builtin:test-hand") return builtin_test_hand();
  if (ref.rfind("builtin:", 0) == 0) {
    throw ValidationError("unknown builtin hand '" + ref + "'");
  }
  return load_hand_spec(ref);
}

}  // namespace tograsp
