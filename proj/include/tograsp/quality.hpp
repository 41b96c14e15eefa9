#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "tograsp/handmodel.hpp"
#include "tograsp/object_model.hpp"

namespace tograsp {

using Wrench = Eigen::Matrix<double, 6, 1>;

// Penetration above this depth zeroes Q1.
inline constexpr double kQ1PenetrationCutoffCm = 0.5;
// Hand/object energy below this counts as collision-free.
inline constexpr double kCollisionFreeEnergy = 1e-3;

struct Contact {
  Eigen::Vector3d position;
  Eigen::Vector3d normal;   // inward: the direction the finger pushes
  Eigen::Vector3d tangent;  // orientation of the discretized friction cone
  double mu = 0.5;
  std::string finger;
};

struct ContactSet {
  std::vector<Contact> contacts;
  Eigen::Vector3d reference = Eigen::Vector3d::Zero();  // torque origin
};

struct QualityOptions {
  double contact_tol = 0.002;
  double mu = 0.5;
  int cone_edges = 8;
  double torque_scale = 0.0;  // <= 0: object bounding-sphere radius
};

struct QualityReport {
  double q1 = 0.0;
  double penetration_cm = 0.0;
  bool collision_free = false;
};

// One contact per fingertip or palm site whose pad point lies within tol of the object
// surface (or inside it). Position is the nearest surface point and the
// normal the negated face normal there.
ContactSet extract_contacts(const HandPoints& hand, const ObjectModel& obj,
                            double tol = 0.002, double mu = 0.5);

// m edge wrenches per contact: f = n + mu (cos a t1 + sin a t2), torque
// (p - reference) x f / torque_scale.
std::vector<Wrench> contact_wrenches(const ContactSet& contacts,
                                     double torque_scale, int edges = 8);

// Radius of the largest origin-centered ball inside the convex hull of the
// edge wrenches; 0 when the origin is not strictly inside or the hull is
// degenerate.
double q1(const ContactSet& contacts, double torque_scale, int edges = 8);

// Applies the zeroing rule (q1 = 0 when penetration exceeds 0.5 cm).
QualityReport make_report(double raw_q1, double penetration_cm,
                          bool collision_free);

struct GraspAssessment {
  ContactSet contacts;
  double raw_q1 = 0.0;
  double energy = 0.0;
  QualityReport report;
};

GraspAssessment assess_grasp(const HandModel& hand, const HandPoints& posed,
                             const ObjectModel& obj,
                             const QualityOptions& options = {});

// Throws EmptyInput for an empty list.
double collision_free_fraction(std::span<const QualityReport> reports);

}  // namespace tograsp
