#include "tograsp/object_model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/rng.hpp"

namespace tograsp {

using nlohmann::json;

const NamedSurface& ObjectModel::surface(const std::string& name) const {
  auto it = surfaces.find(name);
  if (it == surfaces.end()) {
    throw MissingSurface("object '" + id + "' has no surface '" + name + "'");
  }
  return it->second;
}

void ObjectModel::finalize() {
  if (points.cols() == 0) throw ValidationError("object '" + id + "' has no points");
  if (normals.cols() != points.cols()) {
    throw ValidationError("object '" + id + "': normals/points size mismatch");
  }
  for (const auto& [name, s] : surfaces) {
    for (int i : s.indices) {
      if (i < 0 || i >= points.cols()) {
        throw ValidationError("object '" + id + "': surface '" + name +
                              "' index out of range");
      }
    }
    if (std::abs(s.normal.norm() - 1.0) > 1e-9) {
      throw ValidationError("object '" + id + "': surface '" + name +
                            "' normal is not unit length");
    }
  }
  if (articulation.theta < 0.0 || articulation.theta > 1.0) {
    throw ValidationError("object '" + id + "': articulation theta outside [0, 1]");
  }
  query = std::make_shared<const MeshQuery>(mesh);
  center = mesh.bounds().center();
  radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, (v - center).norm());
}

namespace {

struct SampleSet {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;
};

SampleSet sample_mesh_surface(const TriMesh& mesh, int count,
                              std::uint64_t seed) {
  const int nf = static_cast<int>(mesh.triangles.size());
  std::vector<double> cdf(nf);
  double total = 0.0;
  for (int f = 0; f < nf; ++f) {
    total += mesh.face_area(f);
    cdf[f] = total;
  }
  Rng rng(seed);
  SampleSet out;
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform() * total;
    const int f = static_cast<int>(
        std::min<std::ptrdiff_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), nf - 1));
    double a = rng.uniform();
    double b = rng.uniform();
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& t = mesh.triangles[f];
    const auto& v0 = mesh.vertices[t[0]];
    out.points.push_back(v0 + a * (mesh.vertices[t[1]] - v0) +
                         b * (mesh.vertices[t[2]] - v0));
    out.normals.push_back(mesh.face_normal(f));
  }
  return out;
}

// Polar grid on a disk of radius r at height z with normal +z; includes the
// center.
SampleSet disk_samples(double r, double z, int rings, int per_ring) {
  SampleSet s;
  s.points.emplace_back(0.0, 0.0, z);
  s.normals.push_back(Eigen::Vector3d::UnitZ());
  for (int i = 1; i <= rings; ++i) {
    const double rr = r * i / rings;
    for (int k = 0; k < per_ring; ++k) {
      const double a = 2.0 * std::numbers::pi * (k + 0.5 * (i % 2)) / per_ring;
      s.points.emplace_back(rr * std::cos(a), rr * std::sin(a), z);
      s.normals.push_back(Eigen::Vector3d::UnitZ());
    }
  }
  return s;
}

// Grid on the cylinder side r, angles [a0, a1], heights [z0, z1].
SampleSet cylinder_patch(double r, double a0, double a1, double z0, double z1,
                         int na, int nz) {
  SampleSet s;
  for (int i = 0; i < na; ++i) {
    const double a = a0 + (a1 - a0) * i / std::max(1, na - 1);
    for (int k = 0; k < nz; ++k) {
      const double z = z0 + (z1 - z0) * k / std::max(1, nz - 1);
      s.points.emplace_back(r * std::cos(a), r * std::sin(a), z);
      s.normals.emplace_back(std::cos(a), std::sin(a), 0.0);
    }
  }
  return s;
}

// Grid on an axis-aligned rectangle; `axis` is the face normal axis.
SampleSet rect_patch(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                     int axis, double sign, int n) {
  SampleSet s;
  const int u = (axis + 1) % 3;
  const int v = (axis + 2) % 3;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      Eigen::Vector3d p;
      p[axis] = sign > 0 ? hi[axis] : lo[axis];
      p[u] = lo[u] + (hi[u] - lo[u]) * (i + 0.5) / n;
      p[v] = lo[v] + (hi[v] - lo[v]) * (k + 0.5) / n;
      s.points.push_back(p);
      Eigen::Vector3d nrm = Eigen::Vector3d::Zero();
      nrm[axis] = sign;
      s.normals.push_back(nrm);
    }
  }
  return s;
}

class ObjectBuilder {
 public:
  ObjectBuilder(std::string id, TriMesh mesh, int base_samples, double mass) {
    obj_.id = std::move(id);
    obj_.mesh = std::move(mesh);
    obj_.mass = mass;
    base_ = sample_mesh_surface(obj_.mesh, base_samples, fnv1a(obj_.id));
  }

  void add_surface(const std::string& name, const SampleSet& s) {
    NamedSurface surf;
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      surf.indices.push_back(static_cast<int>(base_.points.size()));
      base_.points.push_back(s.points[i]);
      base_.normals.push_back(s.normals[i]);
      n += s.normals[i];
    }
    surf.normal = n.normalized();
    obj_.surfaces[name] = std::move(surf);
  }

  ObjectModel& object() { return obj_; }

  ObjectModel finish() {
    const int n = static_cast<int>(base_.points.size());
    obj_.points.resize(3, n);
    obj_.normals.resize(3, n);
    for (int i = 0; i < n; ++i) {
      obj_.points.col(i) = base_.points[i];
      obj_.normals.col(i) = base_.normals[i];
    }
    obj_.finalize();
    return std::move(obj_);
  }

 private:
  ObjectModel obj_;
  SampleSet base_;
};

std::vector<Eigen::Vector2d> sphere_profile(double r, double top_radius,
                                            int rings) {
  // Bottom pole up to the latitude where the sphere radius is top_radius.
  const double top_polar = std::asin(top_radius / r);
  std::vector<Eigen::Vector2d> prof;
  prof.emplace_back(0.0, -r);
  for (int i = 1; i <= rings; ++i) {
    const double polar =
        std::numbers::pi - (std::numbers::pi - top_polar) * i / rings;
    prof.emplace_back(r * std::sin(polar), r * std::cos(polar));
  }
  return prof;
}

constexpr int kSegments = 48;
constexpr int kBaseSamples = 512;

}  // namespace

ObjectModel object_from_mesh(std::string id, TriMesh mesh, int samples,
                             double mass) {
  ObjectBuilder b(std::move(id), std::move(mesh), samples, mass);
  return b.finish();
}

std::vector<std::string> builtin_object_names() {
  return {"sphere", "sphere-button", "box", "stapler", "spray-bottle",
          "bottle", "pen"};
}

// sphere:        r = 30 mm at the origin.
// sphere-button: the same sphere with a 6 mm radius, 5 mm tall button on the
//                +z pole; surface "button" is its top disk.
// box:           60 x 40 x 30 mm.
// stapler:       120 x 30 x 30 mm block; "top" (+z) and "bottom" (-z) faces,
//                hinge along y at the -x end.
// spray-bottle:  25 mm body to z = 100 mm, 12 mm head to 130 mm, 6 mm button
//                to 135 mm ("button" = top disk); "trigger" = +x patch of the
//                head side, z in [112, 128] mm.
// bottle:        30 mm body to 140 mm, 14 mm neck, 16 mm cap z in
//                [165, 185] mm; cap center at z = 175 mm, surface "cap".
// pen:           5 mm barrel to 140 mm, 3 mm button to 150 mm ("button").
ObjectModel make_builtin_object(const std::string& name) {
  if (name == "sphere") {
    ObjectBuilder b(name, make_sphere(0.03, kSegments, 24), kBaseSamples, 0.3);
    return b.finish();
  }
  if (name == "sphere-button") {
    constexpr double r = 0.03, br = 0.006, bh = 0.005;
    auto prof = sphere_profile(r, br, 24);
    const double zb = prof.back().y();
    prof.emplace_back(br, zb + bh);
    prof.emplace_back(0.0, zb + bh);
    ObjectBuilder b(name, make_lathe(prof, kSegments), kBaseSamples, 0.3);
    b.add_surface("button", disk_samples(br * 0.95, zb + bh, 3, 12));
    b.object().articulation = {Eigen::Vector3d::UnitZ(),
                               Eigen::Vector3d(0.0, 0.0, zb), 0.0};
    return b.finish();
  }
  if (name == "box") {
    ObjectBuilder b(name, make_box({0.03, 0.02, 0.015}), kBaseSamples, 0.3);
    b.add_surface("top", rect_patch({-0.03, -0.02, -0.015}, {0.03, 0.02, 0.015}, 2, 1.0, 8));
    return b.finish();
  }
  if (name == "stapler") {
    const Eigen::Vector3d lo(-0.06, -0.015, -0.015), hi(0.06, 0.015, 0.015);
    ObjectBuilder b(name, make_box(0.5 * (hi - lo)), kBaseSamples, 0.3);
    b.add_surface("top", rect_patch(lo, hi, 2, 1.0, 10));
    b.add_surface("bottom", rect_patch(lo, hi, 2, -1.0, 10));
    b.object().articulation = {Eigen::Vector3d::UnitY(),
                               Eigen::Vector3d(-0.06, 0.0, 0.0), 0.0};
    return b.finish();
  }
  if (name == "spray-bottle") {
    const std::vector<Eigen::Vector2d> prof = {
        {0.0, 0.0},     {0.025, 0.0},   {0.025, 0.100}, {0.012, 0.110},
        {0.012, 0.130}, {0.006, 0.130}, {0.006, 0.135}, {0.0, 0.135}};
    ObjectBuilder b(name, make_lathe(prof, kSegments), kBaseSamples, 0.3);
    b.add_surface("button", disk_samples(0.0057, 0.135, 3, 12));
    b.add_surface("trigger", cylinder_patch(0.0119, -0.5, 0.5, 0.112, 0.128, 7, 7));
    b.object().articulation = {Eigen::Vector3d::UnitZ(),
                               Eigen::Vector3d(0.0, 0.0, 0.130), 0.0};
    return b.finish();
  }
  if (name == "bottle") {
    const std::vector<Eigen::Vector2d> prof = {
        {0.0, 0.0},     {0.030, 0.0},   {0.030, 0.140}, {0.014, 0.160},
        {0.014, 0.165}, {0.016, 0.165}, {0.016, 0.185}, {0.0, 0.185}};
    ObjectBuilder b(name, make_lathe(prof, kSegments), kBaseSamples, 0.3);
    SampleSet cap = cylinder_patch(0.016, 0.0, 2.0 * std::numbers::pi * 23 / 24,
                                   0.166, 0.184, 24, 5);
    const SampleSet top = disk_samples(0.0155, 0.185, 3, 12);
    cap.points.insert(cap.points.end(), top.points.begin(), top.points.end());
    cap.normals.insert(cap.normals.end(), top.normals.begin(), top.normals.end());
    b.add_surface("cap", cap);
    b.object().cap_center = Eigen::Vector3d(0.0, 0.0, 0.175);
    b.object().articulation = {Eigen::Vector3d::UnitZ(),
                               Eigen::Vector3d(0.0, 0.0, 0.175), 0.0};
    return b.finish();
  }
  if (name == "pen") {
    const std::vector<Eigen::Vector2d> prof = {
        {0.0, 0.0},     {0.005, 0.0},   {0.005, 0.140},
        {0.003, 0.140}, {0.003, 0.150}, {0.0, 0.150}};
    ObjectBuilder b(name, make_lathe(prof, 32), kBaseSamples, 0.1);
    b.add_surface("button", disk_samples(0.0028, 0.150, 2, 8));
    b.object().articulation = {Eigen::Vector3d::UnitZ(),
                               Eigen::Vector3d(0.0, 0.0, 0.140), 0.0};
    return b.finish();
  }
  throw ValidationError("unknown builtin object '" + name + "'");
}

namespace {

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

ObjectModel load_object_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open object file " + path.string());
  ObjectModel obj;
  try {
    const json doc = json::parse(in);
    obj.id = doc.at("id").get<std::string>();
    obj.mesh = read_mesh(path.parent_path() / doc.at("mesh").get<std::string>());
    obj.mass = doc.value("mass", 0.3);
    const auto& pts = doc.at("points");
    const auto& nrm = doc.at("normals");
    obj.points.resize(3, pts.size());
    obj.normals.resize(3, nrm.size());
    for (std::size_t i = 0; i < pts.size(); ++i) obj.points.col(i) = vec3(pts[i]);
    for (std::size_t i = 0; i < nrm.size(); ++i) obj.normals.col(i) = vec3(nrm[i]);
    if (doc.contains("surfaces")) {
      for (const auto& [name, s] : doc.at("surfaces").items()) {
        NamedSurface surf;
        surf.indices = s.at("indices").get<std::vector<int>>();
        surf.normal = vec3(s.at("normal"));
        obj.surfaces[name] = std::move(surf);
      }
    }
    if (doc.contains("articulation")) {
      const auto& a = doc.at("articulation");
      obj.articulation.axis = vec3(a.at("axis"));
      obj.articulation.origin = vec3(a.at("origin"));
      obj.articulation.theta = a.at("theta").get<double>();
    }
    if (doc.contains("cap_center")) obj.cap_center = vec3(doc.at("cap_center"));
  } catch (const json::exception& e) {
    throw ParseError("object file " + path.string() + ": " + e.what());
  }
  obj.finalize();
  return obj;
}

void save_object_model(const ObjectModel& obj,
                       const std::filesystem::path& path) {
  const auto mesh_name = path.stem().string() + ".off";
  write_off(obj.mesh, path.parent_path() / mesh_name);
  json doc;
  doc["id"] = obj.id;
  doc["mesh"] = mesh_name;
  doc["mass"] = obj.mass;
  doc["points"] = json::array();
  doc["normals"] = json::array();
  for (int i = 0; i < obj.point_count(); ++i) {
    doc["points"].push_back(to_json(obj.points.col(i)));
    doc["normals"].push_back(to_json(obj.normals.col(i)));
  }
  doc["surfaces"] = json::object();
  for (const auto& [name, s] : obj.surfaces) {
    doc["surfaces"][name] = {{"indices", s.indices}, {"normal", to_json(s.normal)}};
  }
  doc["articulation"] = {{"axis", to_json(obj.articulation.axis)},
                         {"origin", to_json(obj.articulation.origin)},
                         {"theta", obj.articulation.theta}};
  if (obj.cap_center) doc["cap_center"] = to_json(*obj.cap_center);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

ObjectModel resolve_object(const std::string& ref) {
  if (ref.rfind("builtin:", 0) == 0) return make_builtin_object(ref.substr(8));
  return load_object_model(ref);
}

}  // namespace tograsp
