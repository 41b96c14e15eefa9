#include "tograsp/convex_hull.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "tograsp/errors.hpp"

namespace tograsp {

namespace {

struct WorkFacet {
  HullFacet facet;
  std::vector<int> outside;
  bool alive = true;
};

// Plane through the given vertices, oriented away from `interior`.
HullFacet make_facet(const Eigen::MatrixXd& pts, std::vector<int> verts,
                     const Eigen::VectorXd& interior) {
  std::sort(verts.begin(), verts.end());
  const int d = static_cast<int>(pts.rows());
  Eigen::MatrixXd edges(d - 1, d);
  for (int i = 1; i < d; ++i) {
    edges.row(i - 1) = (pts.col(verts[i]) - pts.col(verts[0])).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(edges, Eigen::ComputeFullV);
  Eigen::VectorXd n = svd.matrixV().col(d - 1);
  n.normalize();
  double offset = n.dot(pts.col(verts[0]));
  if (n.dot(interior) > offset) {
    n = -n;
    offset = -offset;
  }
  return HullFacet{std::move(verts), std::move(n), offset};
}

}  // namespace

double ConvexHull::max_facet_distance(const Eigen::VectorXd& p) const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& f : facets) best = std::max(best, f.normal.dot(p) - f.offset);
  return best;
}

ConvexHull convex_hull(const Eigen::MatrixXd& pts, double rel_eps) {
  const int d = static_cast<int>(pts.rows());
  const int n = static_cast<int>(pts.cols());
  if (d < 2 || n < d + 1) {
    throw DegenerateHull("too few points for a full-dimensional hull");
  }
  const double extent =
      (pts.rowwise().maxCoeff() - pts.rowwise().minCoeff()).maxCoeff();
  const double eps = rel_eps * std::max(extent, 1e-300);

  // Initial simplex: greedily add the point farthest from the affine span.
  std::vector<int> simplex;
  {
    int first = 0;
    for (int i = 1; i < n; ++i) {
      if (pts(0, i) < pts(0, first)) first = i;
    }
    simplex.push_back(first);
    std::vector<Eigen::VectorXd> basis;
    while (static_cast<int>(simplex.size()) < d + 1) {
      int best = -1;
      double best_dist = eps;
      for (int i = 0; i < n; ++i) {
        Eigen::VectorXd r = pts.col(i) - pts.col(simplex[0]);
        for (const auto& b : basis) r -= b.dot(r) * b;
        const double dist = r.norm();
        if (dist > best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      if (best < 0) throw DegenerateHull("points are not full-dimensional");
      Eigen::VectorXd r = pts.col(best) - pts.col(simplex[0]);
      for (const auto& b : basis) r -= b.dot(r) * b;
      basis.push_back(r.normalized());
      simplex.push_back(best);
    }
  }
  Eigen::VectorXd interior = Eigen::VectorXd::Zero(d);
  for (int v : simplex) interior += pts.col(v);
  interior /= static_cast<double>(d + 1);

  std::vector<WorkFacet> facets;
  for (int skip = 0; skip <= d; ++skip) {
    std::vector<int> verts;
    for (int j = 0; j <= d; ++j) {
      if (j != skip) verts.push_back(simplex[j]);
    }
    facets.push_back({make_facet(pts, std::move(verts), interior), {}, true});
  }
  std::vector<char> used(n, 0);
  for (int v : simplex) used[v] = 1;
  auto assign = [&](int p, std::size_t begin) {
    for (std::size_t f = begin; f < facets.size(); ++f) {
      if (!facets[f].alive) continue;
      const auto& fa = facets[f].facet;
      if (fa.normal.dot(pts.col(p)) - fa.offset > eps) {
        facets[f].outside.push_back(p);
        return;
      }
    }
  };
  for (int p = 0; p < n; ++p) {
    if (!used[p]) assign(p, 0);
  }

  for (;;) {
    int current = -1;
    for (std::size_t f = 0; f < facets.size(); ++f) {
      if (facets[f].alive && !facets[f].outside.empty()) {
        current = static_cast<int>(f);
        break;
      }
    }
    if (current < 0) break;

    const auto& cf = facets[current].facet;
    int eye = -1;
    double eye_dist = -1.0;
    for (int p : facets[current].outside) {
      const double dist = cf.normal.dot(pts.col(p)) - cf.offset;
      if (dist > eye_dist) {
        eye_dist = dist;
        eye = p;
      }
    }
    const Eigen::VectorXd eye_pt = pts.col(eye);

    std::vector<int> visible;
    std::map<std::vector<int>, int> ridge_count;
    for (std::size_t f = 0; f < facets.size(); ++f) {
      if (!facets[f].alive) continue;
      const auto& fa = facets[f].facet;
      if (fa.normal.dot(eye_pt) - fa.offset > eps) {
        visible.push_back(static_cast<int>(f));
        for (int skip = 0; skip < d; ++skip) {
          std::vector<int> ridge;
          ridge.reserve(d - 1);
          for (int j = 0; j < d; ++j) {
            if (j != skip) ridge.push_back(fa.vertices[j]);
          }
          ++ridge_count[ridge];
        }
      }
    }

    std::vector<int> orphans;
    for (int f : visible) {
      facets[f].alive = false;
      for (int p : facets[f].outside) {
        if (p != eye) orphans.push_back(p);
      }
      facets[f].outside.clear();
    }
    used[eye] = 1;

    const std::size_t first_new = facets.size();
    for (const auto& [ridge, count] : ridge_count) {
      if (count != 1) continue;
      std::vector<int> verts = ridge;
      verts.push_back(eye);
      facets.push_back({make_facet(pts, std::move(verts), interior), {}, true});
    }
    std::sort(orphans.begin(), orphans.end());
    for (int p : orphans) assign(p, first_new);
  }

  ConvexHull hull;
  hull.dim = d;
  for (auto& f : facets) {
    if (f.alive) hull.facets.push_back(std::move(f.facet));
  }
  return hull;
}

TriMesh convex_hull_mesh(const std::vector<Eigen::Vector3d>& points) {
  Eigen::MatrixXd pts(3, points.size());
  for (std::size_t i = 0; i < points.size(); ++i) pts.col(i) = points[i];
  const ConvexHull hull = convex_hull(pts);
  TriMesh mesh;
  std::map<int, int> remap;
  auto vertex = [&](int i) {
    auto [it, inserted] =
        remap.try_emplace(i, static_cast<int>(mesh.vertices.size()));
    if (inserted) mesh.vertices.push_back(points[i]);
    return it->second;
  };
  for (const auto& f : hull.facets) {
    int a = f.vertices[0], b = f.vertices[1], c = f.vertices[2];
    const Eigen::Vector3d n =
        (points[b] - points[a]).cross(points[c] - points[a]);
    if (n.dot(f.normal.head<3>()) < 0.0) std::swap(b, c);
    mesh.triangles.emplace_back(vertex(a), vertex(b), vertex(c));
  }
  return mesh;
}

}  // namespace tograsp
