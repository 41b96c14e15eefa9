#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace tograsp {

struct Aabb {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(
      std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(
      -std::numeric_limits<double>::infinity());

  void extend(const Eigen::Vector3d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& o) {
    lo = lo.cwiseMin(o.lo);
    hi = hi.cwiseMax(o.hi);
  }
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  double squared_distance(const Eigen::Vector3d& p) const {
    const Eigen::Vector3d d =
        (lo - p).cwiseMax(Eigen::Vector3d::Zero()).cwiseMax(p - hi);
    return d.squaredNorm();
  }
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
};

// A closed body that reports how deep a point lies below its surface.
class Solid {
 public:
  virtual ~Solid() = default;
  // Distance to the surface if p is strictly inside, else 0.
  virtual double sigma(const Eigen::Vector3d& p) const = 0;
};

// Indexed triangle mesh in meters. Triangles are counter-clockwise seen from
// outside when the mesh is a closed solid.
struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<Eigen::Vector3i> triangles;

  Aabb bounds() const;
  Eigen::Vector3d face_normal(int f) const;  // unit
  double face_area(int f) const;
  double signed_volume() const;

  // Every directed edge paired with exactly one opposite edge: closed,
  // manifold along edges and consistently oriented.
  bool is_closed() const;
  // Closed with positive signed volume.
  bool is_watertight() const;

  void transform(const Eigen::Matrix3d& rotation,
                 const Eigen::Vector3d& translation);
  // Appends another mesh as a separate shell.
  void append(const TriMesh& other);
};

TriMesh make_box(const Eigen::Vector3d& half_extents,
                 const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// Solid of revolution about +z. `profile` holds (radius, z) pairs running from
// the bottom axis point (radius 0) to the top axis point (radius 0).
TriMesh make_lathe(std::span<const Eigen::Vector2d> profile, int segments);

TriMesh make_sphere(double radius, int segments = 32, int rings = 16,
                    const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

TriMesh make_cylinder(double radius, double z0, double z1, int segments = 32);

TriMesh read_off(const std::filesystem::path& path);
void write_off(const TriMesh& mesh, const std::filesystem::path& path);
// Binary STL; coincident float vertices are welded to recover connectivity.
TriMesh read_stl(const std::filesystem::path& path);
void write_stl(const TriMesh& mesh, const std::filesystem::path& path);
// Dispatches on extension (.off / .stl).
TriMesh read_mesh(const std::filesystem::path& path);

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c);

// Read-only acceleration structure over a watertight mesh: closest surface
// point and generalized inside test by signed ray crossings. Construction
// throws NonWatertightMesh. Safe to query concurrently.
class MeshQuery : public Solid {
 public:
  explicit MeshQuery(TriMesh mesh);

  struct Closest {
    double distance;
    Eigen::Vector3d point;
    int face;
  };

  const TriMesh& mesh() const { return mesh_; }
  const Aabb& bounds() const { return nodes_.front().box; }
  const Eigen::Vector3d& normal(int face) const { return normals_[face]; }

  Closest closest(const Eigen::Vector3d& p) const;
  // Number of shells enclosing p (signed crossings of a ray from p).
  int winding_number(const Eigen::Vector3d& p) const;
  bool inside(const Eigen::Vector3d& p) const;
  double sigma(const Eigen::Vector3d& p) const override;

 private:
  struct Node {
    Aabb box;
    int left = -1;
    int right = -1;
    int first = 0;
    int count = 0;
  };

  int build(int first, int count);
  // Returns false if the ray grazes an edge and another direction is needed.
  bool ray_winding(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                   int& winding) const;

  TriMesh mesh_;
  std::vector<Eigen::Vector3d> normals_;
  std::vector<Aabb> tri_boxes_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace tograsp
