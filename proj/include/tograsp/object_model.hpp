#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tograsp/mesh.hpp"

namespace tograsp {

struct NamedSurface {
  std::vector<int> indices;  // into ObjectModel::points
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // average, unit
};

struct Articulation {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double theta = 0.0;  // normalized, [0, 1]
};

struct ObjectModel {
  std::string id;
  TriMesh mesh;
  Eigen::Matrix3Xd points;   // surface samples (N1)
  Eigen::Matrix3Xd normals;  // outward unit normal per sample
  std::map<std::string, NamedSurface> surfaces;
  Articulation articulation;
  std::optional<Eigen::Vector3d> cap_center;
  double mass = 0.3;

  // Filled by finalize().
  std::shared_ptr<const MeshQuery> query;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // bounding-box center
  double radius = 0.0;                               // bounding sphere

  // Validates invariants and builds the mesh query. Throws ValidationError or
  // NonWatertightMesh.
  void finalize();

  int point_count() const { return static_cast<int>(points.cols()); }
  const NamedSurface& surface(const std::string& name) const;  // MissingSurface
  bool has_surface(const std::string& name) const {
    return surfaces.count(name) > 0;
  }
};

// Plain object with `samples` area-uniform surface samples and no named
// surfaces.
ObjectModel object_from_mesh(std::string id, TriMesh mesh, int samples = 512,
                             double mass = 0.3);

// Procedural objects: sphere, sphere-button, box, stapler, spray-bottle,
// bottle, pen. Dimensions are documented in object_model.cpp.
std::vector<std::string> builtin_object_names();
ObjectModel make_builtin_object(const std::string& name);

ObjectModel load_object_model(const std::filesystem::path& path);
// Writes the JSON wrapper and, next to it, <stem>.off for the mesh.
void save_object_model(const ObjectModel& obj,
                       const std::filesystem::path& path);

// "builtin:<name>" or an object JSON file.
ObjectModel resolve_object(const std::string& ref);

}  // namespace tograsp
