#include "tograsp/quality.hpp"

#include <cmath>
#include <numbers>

#include "tograsp/convex_hull.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/penetration.hpp"

namespace tograsp {

ContactSet extract_contacts(const HandPoints& hand, const ObjectModel& obj,
                            double tol, double mu) {
  ContactSet set;
  set.reference = obj.center;
  std::vector<const Fingertip*> sites;
  for (const auto& tip : hand.fingertips) sites.push_back(&tip);
  for (const auto& tip : hand.palm_sites) sites.push_back(&tip);
  for (const Fingertip* site : sites) {
    const Fingertip& tip = *site;
    const auto hit = obj.query->closest(tip.position);
    if (hit.distance > tol && !obj.query->inside(tip.position)) continue;
    Contact c;
    c.position = hit.point;
    c.normal = -obj.query->normal(hit.face);
    Eigen::Vector3d t = tip.tangent - tip.tangent.dot(c.normal) * c.normal;
    if (t.norm() < 1e-6) t = c.normal.unitOrthogonal();
    c.tangent = t.normalized();
    c.mu = mu;
    c.finger = tip.name;
    set.contacts.push_back(std::move(c));
  }
  return set;
}

std::vector<Wrench> contact_wrenches(const ContactSet& contacts,
                                     double torque_scale, int edges) {
  std::vector<Wrench> out;
  for (const auto& c : contacts.contacts) {
    const Eigen::Vector3d n = c.normal.normalized();
    Eigen::Vector3d t1 = c.tangent - c.tangent.dot(n) * n;
    t1 = t1.norm() > 1e-9 ? Eigen::Vector3d(t1.normalized()) : n.unitOrthogonal();
    const Eigen::Vector3d t2 = n.cross(t1);
    const Eigen::Vector3d arm = c.position - contacts.reference;
    for (int j = 0; j < edges; ++j) {
      const double a = 2.0 * std::numbers::pi * j / edges;
      const Eigen::Vector3d f =
          n + c.mu * (std::cos(a) * t1 + std::sin(a) * t2);
      Wrench w;
      w.head<3>() = f;
      w.tail<3>() = arm.cross(f) / torque_scale;
      out.push_back(w);
    }
  }
  return out;
}

double q1(const ContactSet& contacts, double torque_scale, int edges) {
  const auto wrenches = contact_wrenches(contacts, torque_scale, edges);
  if (wrenches.size() < 7) return 0.0;
  Eigen::MatrixXd pts(6, wrenches.size());
  for (std::size_t i = 0; i < wrenches.size(); ++i) pts.col(i) = wrenches[i];
  ConvexHull hull;
  try {
    hull = convex_hull(pts);
  } catch (const DegenerateHull&) {
    return 0.0;
  }
  double radius = std::numeric_limits<double>::infinity();
  for (const auto& f : hull.facets) {
    if (f.offset <= 1e-12) return 0.0;
    radius = std::min(radius, f.offset);
  }
  return radius;
}

QualityReport make_report(double raw_q1, double penetration_cm,
                          bool collision_free) {
  QualityReport r;
  r.penetration_cm = penetration_cm;
  r.collision_free = collision_free;
  r.q1 = penetration_cm > kQ1PenetrationCutoffCm ? 0.0 : raw_q1;
  return r;
}

GraspAssessment assess_grasp(const HandModel& hand, const HandPoints& posed,
                             const ObjectModel& obj,
                             const QualityOptions& options) {
  GraspAssessment a;
  a.contacts = extract_contacts(posed, obj, options.contact_tol, options.mu);
  const double scale =
      options.torque_scale > 0.0 ? options.torque_scale : obj.radius;
  a.raw_q1 = q1(a.contacts, scale, options.cone_edges);
  const PosedHandSolid solid(hand, posed.link_poses);
  const double pen_cm = max_penetration_depth_cm(obj.points, solid);
  a.energy = penetration_energy(posed.points, solid, obj.points, *obj.query);
  a.report = make_report(a.raw_q1, pen_cm, a.energy < kCollisionFreeEnergy);
  return a;
}

double collision_free_fraction(std::span<const QualityReport> reports) {
  if (reports.empty()) throw EmptyInput("collision_free_fraction: no reports");
  std::size_t free = 0;
  for (const auto& r : reports) free += r.collision_free ? 1 : 0;
  return static_cast<double>(free) / static_cast<double>(reports.size());
}

}  // namespace tograsp
