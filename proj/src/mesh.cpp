#include "tograsp/mesh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>

#include "tograsp/errors.hpp"

namespace tograsp {

Aabb TriMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

Eigen::Vector3d TriMesh::face_normal(int f) const {
  const auto& t = triangles[f];
  const Eigen::Vector3d n = (vertices[t[1]] - vertices[t[0]])
                                .cross(vertices[t[2]] - vertices[t[0]]);
  const double len = n.norm();
  return len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
}

double TriMesh::face_area(int f) const {
  const auto& t = triangles[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]])
                   .cross(vertices[t[2]] - vertices[t[0]])
                   .norm();
}

double TriMesh::signed_volume() const {
  double v = 0.0;
  for (const auto& t : triangles) {
    v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  return v / 6.0;
}

bool TriMesh::is_closed() const {
  if (triangles.empty()) return false;
  std::map<std::pair<int, int>, int> edges;
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[k];
      const int b = t[(k + 1) % 3];
      if (a < 0 || a >= nv || a == b) return false;
      if (++edges[{a, b}] > 1) return false;
    }
  }
  for (const auto& [e, n] : edges) {
    auto it = edges.find({e.second, e.first});
    if (it == edges.end() || it->second != 1) return false;
  }
  return true;
}

bool TriMesh::is_watertight() const {
  return is_closed() && signed_volume() > 0.0;
}

void TriMesh::transform(const Eigen::Matrix3d& rotation,
                        const Eigen::Vector3d& translation) {
  for (auto& v : vertices) v = rotation * v + translation;
}

void TriMesh::append(const TriMesh& other) {
  const int offset = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(),
                  other.vertices.end());
  for (const auto& t : other.triangles) {
    triangles.push_back(t + Eigen::Vector3i::Constant(offset));
  }
}

TriMesh make_box(const Eigen::Vector3d& h, const Eigen::Vector3d& c) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(c.x() + ((i & 1) ? h.x() : -h.x()),
                            c.y() + ((i & 2) ? h.y() : -h.y()),
                            c.z() + ((i & 4) ? h.z() : -h.z()));
  }
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : faces) {
    m.triangles.emplace_back(f[0], f[1], f[2]);
    m.triangles.emplace_back(f[0], f[2], f[3]);
  }
  return m;
}

TriMesh make_lathe(std::span<const Eigen::Vector2d> profile, int segments) {
  if (profile.size() < 3 || segments < 3) {
    throw InvalidRange("lathe needs >= 3 profile points and >= 3 segments");
  }
  if (profile.front().x() != 0.0 || profile.back().x() != 0.0) {
    throw InvalidRange("lathe profile must start and end on the axis");
  }
  TriMesh m;
  const int rings = static_cast<int>(profile.size()) - 2;
  m.vertices.emplace_back(0.0, 0.0, profile.front().y());
  for (int r = 0; r < rings; ++r) {
    const auto& pr = profile[r + 1];
    if (pr.x() <= 0.0) throw InvalidRange("lathe ring radius must be > 0");
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * s / segments;
      m.vertices.emplace_back(pr.x() * std::cos(a), pr.x() * std::sin(a),
                              pr.y());
    }
  }
  const int top = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0.0, 0.0, profile.back().y());
  auto ring = [&](int r, int s) { return 1 + r * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) {
    m.triangles.emplace_back(0, ring(0, s + 1), ring(0, s));
  }
  for (int r = 0; r + 1 < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = ring(r, s);
      const int b = ring(r, s + 1);
      const int c = ring(r + 1, s + 1);
      const int d = ring(r + 1, s);
      m.triangles.emplace_back(a, b, c);
      m.triangles.emplace_back(a, c, d);
    }
  }
  for (int s = 0; s < segments; ++s) {
    m.triangles.emplace_back(top, ring(rings - 1, s), ring(rings - 1, s + 1));
  }
  return m;
}

TriMesh make_sphere(double radius, int segments, int rings,
                    const Eigen::Vector3d& center) {
  std::vector<Eigen::Vector2d> profile;
  for (int i = 0; i <= rings; ++i) {
    const double polar = std::numbers::pi * (1.0 - static_cast<double>(i) / rings);
    profile.emplace_back(i == 0 || i == rings ? 0.0 : radius * std::sin(polar),
                         radius * std::cos(polar));
  }
  TriMesh m = make_lathe(profile, segments);
  m.transform(Eigen::Matrix3d::Identity(), center);
  return m;
}

TriMesh make_cylinder(double radius, double z0, double z1, int segments) {
  const std::array<Eigen::Vector2d, 4> profile = {
      Eigen::Vector2d(0.0, z0), Eigen::Vector2d(radius, z0),
      Eigen::Vector2d(radius, z1), Eigen::Vector2d(0.0, z1)};
  return make_lathe(profile, segments);
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  throw ParseError("unexpected end of mesh file");
}

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ParseError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ParseError("bad number '" + s + "'");
  }
}

}  // namespace

TriMesh read_off(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  if (next_token(in) != "OFF") throw ParseError(path.string() + ": not OFF");
  const int nv = static_cast<int>(to_double(next_token(in)));
  const int nf = static_cast<int>(to_double(next_token(in)));
  next_token(in);
  if (nv < 0 || nf < 0) throw ParseError(path.string() + ": bad counts");
  TriMesh m;
  m.vertices.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    Eigen::Vector3d v;
    for (int k = 0; k < 3; ++k) v[k] = to_double(next_token(in));
    m.vertices.push_back(v);
  }
  for (int i = 0; i < nf; ++i) {
    const int n = static_cast<int>(to_double(next_token(in)));
    if (n < 3) throw ParseError(path.string() + ": face with < 3 vertices");
    std::vector<int> idx(n);
    for (auto& x : idx) {
      x = static_cast<int>(to_double(next_token(in)));
      if (x < 0 || x >= nv) throw ParseError(path.string() + ": bad index");
    }
    for (int k = 1; k + 1 < n; ++k) {
      m.triangles.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  return m;
}

void write_off(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "OFF\n"
      << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) {
    out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  }
}

TriMesh read_stl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  char header[80];
  std::uint32_t count = 0;
  if (!in.read(header, 80) ||
      !in.read(reinterpret_cast<char*>(&count), sizeof(count))) {
    throw ParseError(path.string() + ": truncated STL header");
  }
  TriMesh m;
  std::map<std::tuple<float, float, float>, int> index;
  for (std::uint32_t i = 0; i < count; ++i) {
    float data[12];
    std::uint16_t attr;
    if (!in.read(reinterpret_cast<char*>(data), sizeof(data)) ||
        !in.read(reinterpret_cast<char*>(&attr), sizeof(attr))) {
      throw ParseError(path.string() + ": truncated STL body");
    }
    Eigen::Vector3i tri;
    for (int k = 0; k < 3; ++k) {
      const auto key = std::make_tuple(data[3 + 3 * k], data[4 + 3 * k],
                                       data[5 + 3 * k]);
      auto [it, inserted] =
          index.try_emplace(key, static_cast<int>(m.vertices.size()));
      if (inserted) {
        m.vertices.emplace_back(std::get<0>(key), std::get<1>(key),
                                std::get<2>(key));
      }
      tri[k] = it->second;
    }
    m.triangles.push_back(tri);
  }
  return m;
}

void write_stl(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  char header[80] = {};
  std::strncpy(header, "tograsp binary stl", sizeof(header));
  out.write(header, 80);
  const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (int f = 0; f < static_cast<int>(mesh.triangles.size()); ++f) {
    float data[12];
    const Eigen::Vector3d n = mesh.face_normal(f);
    for (int k = 0; k < 3; ++k) data[k] = static_cast<float>(n[k]);
    for (int v = 0; v < 3; ++v) {
      for (int k = 0; k < 3; ++k) {
        data[3 + 3 * v + k] =
            static_cast<float>(mesh.vertices[mesh.triangles[f][v]][k]);
      }
    }
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(data), sizeof(data));
    out.write(reinterpret_cast<const char*>(&attr), sizeof(attr));
  }
}

TriMesh read_mesh(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".off") return read_off(path);
  if (ext == ".stl") return read_stl(path);
  throw ParseError("unsupported mesh format: " + path.string());
}

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                          const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b,
                                          const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a;
  const Eigen::Vector3d ac = c - a;
  const Eigen::Vector3d ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + (d1 / (d1 - d3)) * ab;
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + (d2 / (d2 - d6)) * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshQuery::MeshQuery(TriMesh mesh) : mesh_(std::move(mesh)) {
  if (!mesh_.is_watertight()) {
    throw NonWatertightMesh("mesh is not a closed, outward-oriented solid");
  }
  const int nf = static_cast<int>(mesh_.triangles.size());
  normals_.resize(nf);
  tri_boxes_.resize(nf);
  order_.resize(nf);
  for (int f = 0; f < nf; ++f) {
    normals_[f] = mesh_.face_normal(f);
    for (int k = 0; k < 3; ++k) {
      tri_boxes_[f].extend(mesh_.vertices[mesh_.triangles[f][k]]);
    }
    order_[f] = f;
  }
  nodes_.reserve(2 * nf);
  build(0, nf);
}

int MeshQuery::build(int first, int count) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centroids;
  for (int i = first; i < first + count; ++i) {
    box.extend(tri_boxes_[order_[i]]);
    centroids.extend(tri_boxes_[order_[i]].center());
  }
  nodes_[id].box = box;
  if (count <= 4) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  (centroids.hi - centroids.lo).maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid,
                   order_.begin() + first + count, [&](int a, int b) {
                     const double ca = tri_boxes_[a].center()[axis];
                     const double cb = tri_boxes_[b].center()[axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

MeshQuery::Closest MeshQuery::closest(const Eigen::Vector3d& p) const {
  Closest best{std::numeric_limits<double>::infinity(), p, -1};
  double best_sq = std::numeric_limits<double>::infinity();
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squared_distance(p) >= best_sq) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[i];
        const auto& t = mesh_.triangles[f];
        const Eigen::Vector3d q = closest_point_on_triangle(
            p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
            mesh_.vertices[t[2]]);
        const double d = (q - p).squaredNorm();
        if (d < best_sq || (d == best_sq && f < best.face)) {
          best_sq = d;
          best.point = q;
          best.face = f;
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squared_distance(p);
    const double dr = nodes_[node.right].box.squared_distance(p);
    // Push the farther child first so the nearer one is visited next.
    if (dl < dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

bool MeshQuery::ray_winding(const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir, int& winding) const {
  constexpr double kEdgeEps = 1e-10;
  const Eigen::Vector3d inv = dir.cwiseInverse();
  winding = 0;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Slab test against the node box.
    const Eigen::Vector3d t0 = (node.box.lo - origin).cwiseProduct(inv);
    const Eigen::Vector3d t1 = (node.box.hi - origin).cwiseProduct(inv);
    const double tmin = t0.cwiseMin(t1).maxCoeff();
    const double tmax = t0.cwiseMax(t1).minCoeff();
    if (tmax < 0.0 || tmin > tmax) continue;
    if (node.left >= 0) {
      stack[top++] = node.left;
      stack[top++] = node.right;
      continue;
    }
    for (int i = node.first; i < node.first + node.count; ++i) {
      const int f = order_[i];
      const auto& t = mesh_.triangles[f];
      const Eigen::Vector3d& a = mesh_.vertices[t[0]];
      const Eigen::Vector3d e1 = mesh_.vertices[t[1]] - a;
      const Eigen::Vector3d e2 = mesh_.vertices[t[2]] - a;
      const Eigen::Vector3d pv = dir.cross(e2);
      const double det = e1.dot(pv);
      if (std::abs(det) < 1e-300) continue;
      const double inv_det = 1.0 / det;
      const Eigen::Vector3d tv = origin - a;
      const double u = tv.dot(pv) * inv_det;
      if (u < -kEdgeEps || u > 1.0 + kEdgeEps) continue;
      const Eigen::Vector3d qv = tv.cross(e1);
      const double v = dir.dot(qv) * inv_det;
      if (v < -kEdgeEps || u + v > 1.0 + kEdgeEps) continue;
      const double dist = e2.dot(qv) * inv_det;
      if (dist <= 0.0) continue;
      if (u < kEdgeEps || v < kEdgeEps || u + v > 1.0 - kEdgeEps) {
        return false;
      }
      winding += normals_[f].dot(dir) > 0.0 ? 1 : -1;
    }
  }
  return true;
}

int MeshQuery::winding_number(const Eigen::Vector3d& p) const {
  static const Eigen::Vector3d kDirs[] = {
      Eigen::Vector3d(0.5773502691896258, 0.5773502691896257,
                      0.5773502691896259),
      Eigen::Vector3d(-0.2672612419124244, 0.5345224838248488,
                      0.8017837257372731),
      Eigen::Vector3d(0.8728715609439696, -0.2182178902359924,
                      -0.4364357804719848),
      Eigen::Vector3d(-0.6246950475544243, -0.7808688094430304,
                      0.0000000000000001),
  };
  int winding = 0;
  for (const auto& d : kDirs) {
    if (ray_winding(p, d, winding)) return winding;
  }
  return winding;
}

bool MeshQuery::inside(const Eigen::Vector3d& p) const {
  if (!bounds().contains(p)) return false;
  return winding_number(p) > 0;
}

double MeshQuery::sigma(const Eigen::Vector3d& p) const {
  if (!inside(p)) return 0.0;
  return closest(p).distance;
}

}  // namespace tograsp
