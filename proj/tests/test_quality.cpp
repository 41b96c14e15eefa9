#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/quality.hpp"
#include "tograsp/rng.hpp"

using namespace tograsp;

namespace {

Contact sphere_contact(const Eigen::Vector3d& direction, double mu) {
  const Eigen::Vector3d u = direction.normalized();
  return {u, -u, u.unitOrthogonal(), mu, ""};
}

ContactSet pinch(double mu) {
  ContactSet set;
  set.contacts = {sphere_contact({1, 0, 0}, mu), sphere_contact({-1, 0, 0.25}, mu),
                  sphere_contact({-1, 0, -0.25}, mu)};
  return set;
}

}  // namespace

TEST_CASE("q1 trivial cases") {
  ContactSet one;
  one.contacts = {sphere_contact({1, 0, 0}, 0.5)};
  CHECK(q1(one, 1.0) == 0.0);
  CHECK(q1(ContactSet{}, 1.0) == 0.0);

  ContactSet same_side;
  same_side.contacts = {sphere_contact({1, 0, 0}, 0.5), sphere_contact({1, 0.2, 0}, 0.5),
                        sphere_contact({1, -0.2, 0.1}, 0.5)};
  CHECK(q1(same_side, 1.0) == 0.0);
}

TEST_CASE("q1 agrees with facet enumeration") {
  const ContactSet set = pinch(0.5);
  const double value = q1(set, 1.0, 4);
  CHECK(value > 0.0);
  CHECK(std::abs(value - oracle::facet_enumeration_q1(set, 1.0, 4)) <= 1e-6);

  Rng rng(41);
  for (int i = 0; i < 10; ++i) {
    ContactSet random;
    for (int c = 0; c < 3; ++c) {
      random.contacts.push_back(sphere_contact({rng.normal(), rng.normal(), rng.normal()},
                                               rng.uniform(0.2, 1.0)));
    }
    CHECK(std::abs(q1(random, 1.0, 4) - oracle::facet_enumeration_q1(random, 1.0, 4)) <= 1e-6);
  }
}

TEST_CASE("q1 is rotation invariant and monotone in mu") {
  Rng rng(42);
  const ContactSet base = pinch(0.5);
  const double q = q1(base, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Eigen::Matrix3d r = orthonormalize_6d({rng.normal(), rng.normal(), rng.normal()},
                                                {rng.normal(), rng.normal(), rng.normal()});
    ContactSet rotated = base;
    for (auto& c : rotated.contacts) {
      c.position = r * c.position;
      c.normal = r * c.normal;
      c.tangent = r * c.tangent;
    }
    CHECK(std::abs(q1(rotated, 1.0) - q) <= 1e-6);
  }
  double previous = 0.0;
  for (double mu : {0.1, 0.3, 0.5, 1.0}) {
    const double v = q1(pinch(mu), 1.0);
    CHECK(v >= previous);
    previous = v;
  }
}

TEST_CASE("quality report zeroing and collision-free fraction") {
  CHECK(make_report(0.3, 0.6, false).q1 == 0.0);
  CHECK(make_report(0.3, 0.5, true).q1 == 0.3);
  std::vector<QualityReport> all(5, make_report(0.1, 0.0, true));
  CHECK(collision_free_fraction(all) == 1.0);
  std::vector<QualityReport> none(5, make_report(0.1, 0.2, false));
  CHECK(collision_free_fraction(none) == 0.0);
  std::vector<QualityReport> mixed;
  for (int i = 0; i < 100; ++i) mixed.push_back(make_report(0.0, 0.0, i < 63));
  CHECK(collision_free_fraction(mixed) == doctest::Approx(0.63).epsilon(1e-15));
  CHECK_THROWS_AS(collision_free_fraction(std::vector<QualityReport>{}), EmptyInput);
}

TEST_CASE("extract_contacts") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel sphere = make_builtin_object("sphere");

  GraspPose far = GraspPose::identity(6);
  far.translation = {0.0, 0.0, 1.0};
  CHECK(extract_contacts(hand.forward_kinematics(far), sphere).contacts.empty());

  HandPoints touching;
  const Eigen::Vector3d dir = Eigen::Vector3d(0.3, -0.5, 0.8).normalized();
  touching.fingertips.push_back({"index", 0.0305 * dir, -dir, dir.unitOrthogonal()});
  const ContactSet one = extract_contacts(touching, sphere);
  REQUIRE(one.contacts.size() == 1);
  const double chord = 0.03 * (1.0 - std::cos(std::numbers::pi / 24));
  CHECK((one.contacts[0].normal + dir).norm() < 0.15);
  CHECK(std::abs(one.contacts[0].position.norm() - 0.03) <= chord);

  Rng rng(43);
  for (int i = 0; i < 50; ++i) {
    GraspPose p = GraspPose::identity(6);
    const Eigen::Vector3d d = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    rotation_to_6d(orthonormalize_6d(-d.unitOrthogonal(), d.cross(-d.unitOrthogonal())), p.p1, p.p2);
    const Eigen::Matrix3d r = orthonormalize_6d(p.p1, p.p2);
    p.translation = -r.col(2) * rng.uniform(0.03, 0.06);
    for (int j = 0; j < 6; ++j) p.joints[j] = rng.uniform(0.0, 1.6);
    const HandPoints posed = hand.forward_kinematics(p);
    int expected = 0;
    auto count = [&](const Fingertip& t) {
      if (oracle::parity_inside(sphere.mesh, t.position) ||
          oracle::brute_surface_distance(sphere.mesh, t.position) <= 0.002) {
        ++expected;
      }
    };
    for (const auto& t : posed.fingertips) count(t);
    for (const auto& t : posed.palm_sites) count(t);
    CHECK(static_cast<int>(extract_contacts(posed, sphere).contacts.size()) == expected);
  }
}
