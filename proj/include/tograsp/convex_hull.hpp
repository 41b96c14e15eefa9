#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tograsp/mesh.hpp"

namespace tograsp {

// One simplicial facet. Points x of the hull satisfy normal.x <= offset, with
// |normal| = 1.
struct HullFacet {
  std::vector<int> vertices;  // sorted ascending
  Eigen::VectorXd normal;
  double offset = 0.0;
};

struct ConvexHull {
  int dim = 0;
  std::vector<HullFacet> facets;

  // Largest signed facet distance of p; <= 0 inside.
  double max_facet_distance(const Eigen::VectorXd& p) const;
};

// Quickhull in arbitrary dimension over the columns of `points` (d x n).
// `rel_eps` scales with the point-cloud extent and decides which points count
// as outside a facet. Throws DegenerateHull when the points do not span d
// dimensions.
ConvexHull convex_hull(const Eigen::MatrixXd& points, double rel_eps = 1e-10);

// 3-D hull of a point set as an outward-oriented watertight mesh (only the
// hull vertices are kept).
TriMesh convex_hull_mesh(const std::vector<Eigen::Vector3d>& points);

}  // namespace tograsp
