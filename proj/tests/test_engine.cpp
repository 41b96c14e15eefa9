#include <set>

#include "doctest.h"
#include "tograsp/engine.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/posemath.hpp"

using namespace tograsp;

TEST_CASE("task-agnostic generation") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel sphere = make_builtin_object("sphere");
  CHECK(generate_agnostic(hand, sphere, 0, Rng(1)).empty());

  const auto candidates = propose_agnostic(hand, sphere, 40, Rng(2));
  REQUIRE(candidates.size() == 40);
  int stable = 0;
  for (const auto& c : candidates) {
    CHECK((c.pose.joints.array() >= hand.lower().array()).all());
    CHECK((c.pose.joints.array() <= hand.upper().array()).all());
    if (!c.labels.stable) continue;
    ++stable;
    CHECK(c.labels.q1 > 0.0);
    CHECK(c.labels.penetration_cm <= 0.5);
  }
  CHECK(stable > 0);

  const auto kept = generate_agnostic(hand, sphere, 40, Rng(2));
  CHECK(static_cast<int>(kept.size()) == stable);

  AgnosticOptions threaded;
  threaded.workers = 3;
  const auto again = propose_agnostic(hand, sphere, 40, Rng(2), threaded);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    CHECK(again[i].pose == candidates[i].pose);
  }
}

TEST_CASE("approach and closing") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel sphere = make_builtin_object("sphere");
  const GraspPose open =
      approach_pose(hand, sphere, Eigen::Vector3d(0, 0, 1), 0.3, 0.0);
  CHECK(open.joints.isZero());
  const GraspPose closed = close_fingers(hand, sphere, open);
  CHECK(closed.translation == open.translation);
  CHECK((closed.joints.array() >= open.joints.array()).all());
  const PoseLabels labels = label_pose(hand, sphere, closed, std::nullopt);
  CHECK(labels.penetration_cm < 0.5);
}

TEST_CASE("diversity statistics") {
  const HandModel hand(builtin_test_hand());
  CHECK(diversity(hand, {}).count == 0);
  GraspPose a = GraspPose::identity(hand.dof());
  GraspPose b = a;
  b.joints.setConstant(1.6);
  const DiversityStats one = diversity(hand, {a});
  CHECK(one.mean_variance == 0.0);
  CHECK(one.mean_range == 0.0);
  const DiversityStats two = diversity(hand, {a, b});
  CHECK(two.count == 2);
  CHECK(two.mean_range == doctest::Approx(1.0));
  CHECK(two.mean_variance == doctest::Approx(0.25));
}

TEST_CASE("bootstrap bookkeeping") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel obj = make_builtin_object("sphere-button");
  BootstrapConfig cfg;
  cfg.iterations = 1;
  cfg.batch = 8;
  cfg.train.steps = 3;
  cfg.warmup_steps = 2;
  cfg.train.batch = 8;
  cfg.model.hidden = 32;
  cfg.model.hand_points = 16;
  cfg.model.object_points = 32;
  cfg.sampler.K = 5;
  cfg.refine.steps = 2;
  cfg.seed = 4;
  CHECK_THROWS_AS(bootstrap(hand, obj, TaskKind::kSprayPress, {}, cfg), NoSeedGrasps);

  std::vector<GraspPose> seeds;
  for (const auto& c : propose_agnostic(hand, obj, 200, Rng(1))) {
    if (seeds.size() < 3 && c.labels.stable &&
        label_pose(hand, obj, c.pose, TaskKind::kSprayPress).rule_pass) {
      seeds.push_back(c.pose);
    }
  }
  REQUIRE_FALSE(seeds.empty());
  const BootstrapResult r = bootstrap(hand, obj, TaskKind::kSprayPress, seeds, cfg);
  REQUIRE(r.iterations.size() == 1);
  const BootstrapIteration& it = r.iterations[0];
  CHECK(it.sampled == 8);
  CHECK(it.added <= it.passed);
  CHECK(it.count == static_cast<int>(seeds.size()) + it.added);
  CHECK(static_cast<int>(r.records.size()) == it.count);
  CHECK(r.seed_stats.count == static_cast<int>(seeds.size()));
  CHECK(r.model.trained);
  for (const auto& rec : r.records) {
    CHECK(rec.task == TaskKind::kSprayPress);
    CHECK(rec.rule_pass);
    CHECK_NOTHROW(rec.check());
  }
  CHECK(r.diversity_csv().rfind("iteration,count,added,mean_variance,mean_range\n", 0) == 0);

  std::set<std::string> seed_texts;
  Eigen::MatrixXd seed_states(9 + hand.dof(), static_cast<Eigen::Index>(seeds.size()));
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seed_states.col(static_cast<Eigen::Index>(i)) = r.records[i].pose;
    seed_texts.insert(r.records[i].description);
  }
  Eigen::VectorXd floor = grasp_scale_floor(hand.dof());
  floor.tail(hand.dof()).setConstant(cfg.joint_scale_floor);
  const StateNormalizer expected = StateNormalizer::fit(seed_states, floor);
  CHECK((r.model.normalizer.mean - expected.mean).norm() == 0.0);
  CHECK((r.model.normalizer.scale - expected.scale).norm() == 0.0);
  for (std::size_t i = seeds.size(); i < r.records.size(); ++i) {
    CHECK(seed_texts.count(r.records[i].description) == 1);
  }

  const BootstrapResult again = bootstrap(hand, obj, TaskKind::kSprayPress, seeds, cfg);
  CHECK(again.diversity_csv() == r.diversity_csv());
}

TEST_CASE("evaluation of an untrained model") {
  const HandModel hand(builtin_test_hand());
  const ObjectModel obj = make_builtin_object("sphere-button");
  ModelConfig mc;
  mc.state_dim = 9 + hand.dof();
  mc.hidden = 32;
  mc.hand_points = 16;
  mc.object_points = 32;
  const DiffusionNet net(mc, 3);
  EvalOptions opts;
  opts.n = 6;
  opts.refine.steps = 3;
  opts.seed = 8;
  const NoiseSchedule sched = make_schedule(5, 1e-3, 0.3);
  const EvalReport report =
      evaluate(hand, net, {&obj}, {TaskKind::kSprayPress}, sched, opts);
  CHECK(report.label == "baseline-random");
  REQUIRE(report.rows.size() == 1);
  const EvalRow& row = report.rows[0];
  CHECK(row.n == 6);
  CHECK(row.refined.penetration_cm <= row.unrefined.penetration_cm + 1e-12);
  CHECK(row.refined.eta_f >= 0.0);
  CHECK(row.refined.eta_f <= 1.0);
  CHECK(report.to_csv().find("baseline-random") != std::string::npos);

  opts.workers = 2;
  CHECK(evaluate(hand, net, {&obj}, {TaskKind::kSprayPress}, sched, opts).to_csv() ==
        report.to_csv());
}

TEST_CASE("summarize") {
  PoseLabels a;
  a.q1 = 0.2;
  a.penetration_cm = 0.1;
  a.collision_free = true;
  a.rule_pass = true;
  PoseLabels b;
  b.penetration_cm = 0.3;
  b.rule_pass = false;
  const EvalMetrics m = summarize({a, b});
  CHECK(m.q1 == doctest::Approx(0.1));
  CHECK(m.penetration_cm == doctest::Approx(0.2));
  CHECK(m.eta_f == 0.5);
  CHECK(m.rule_pass == 0.5);
  CHECK(summarize({}).eta_f == 0.0);
}
