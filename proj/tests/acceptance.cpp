// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Tolerances are the pinned ones; nothing here is tuned per run.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "rule_cases.hpp"
#include "tograsp/dataset.hpp"
#include "tograsp/diffusion.hpp"
#include "tograsp/engine.hpp"
#include "tograsp/errors.hpp"
#include "tograsp/nets.hpp"
#include "tograsp/penetration.hpp"
#include "tograsp/posemath.hpp"
#include "tograsp/quality.hpp"
#include "tograsp/rng.hpp"
#include "tograsp/taskdesc.hpp"
#include "tograsp/taskeval.hpp"

using namespace tograsp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failed sub-checks of one criterion.
class Verdict {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool ok() const { return failures_.empty(); }
  std::string detail() const {
    std::string out;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + ("failed: " + f);
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Eigen::Vector3d normal3(Rng& rng) { return {rng.normal(), rng.normal(), rng.normal()}; }

GraspPose random_pose(const HandModel& hand, Rng& rng) {
  GraspPose p = GraspPose::identity(hand.dof());
  p.p1 = normal3(rng);
  p.p2 = normal3(rng);
  p.translation = Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                  rng.uniform(-0.2, 0.2));
  for (int j = 0; j < hand.dof(); ++j) {
    p.joints[j] = rng.uniform(hand.lower()[j] - 0.2, hand.upper()[j] + 0.2);
  }
  return p;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string records_text(const std::vector<DatasetRecord>& records) {
  std::string s;
  for (const auto& r : records) s += to_json_line(r) + "\n";
  return s;
}

std::string poses_text(const std::vector<GraspPose>& poses) {
  std::string s;
  for (const auto& p : poses) {
    const Eigen::VectorXd v = flatten(p);
    for (Eigen::Index i = 0; i < v.size(); ++i) s += fmt("%.17g,", v[i]);
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------- 1

Verdict rotation_suite() {
  Verdict v;
  Rng rng(101);
  const auto t0 = Clock::now();
  double orth = 0.0, det = 0.0, scale = 0.0, oracle_err = 0.0, round = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const Eigen::Vector3d p1 = normal3(rng);
    const Eigen::Vector3d p2 = normal3(rng);
    const Eigen::Matrix3d r = orthonormalize_6d(p1, p2);
    orth = std::max(orth, (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
    det = std::max(det, std::abs(r.determinant() - 1.0));
    const double a = std::exp(rng.uniform(-3.0, 3.0));
    const double b = std::exp(rng.uniform(-3.0, 3.0));
    scale = std::max(scale, (orthonormalize_6d(a * p1, b * p2) - r).cwiseAbs().maxCoeff());
    oracle_err = std::max(oracle_err, (oracle::gram_schmidt(p1, p2) - r).cwiseAbs().maxCoeff());
    Eigen::Vector3d q1, q2;
    rotation_to_6d(r, q1, q2);
    round = std::max(round, (orthonormalize_6d(q1, q2) - r).cwiseAbs().maxCoeff());
  }
  const double elapsed = seconds_since(t0);
  v.expect(orth <= 1e-9, "orthonormality " + fmt("%.2e", orth));
  v.expect(det <= 1e-9, "determinant " + fmt("%.2e", det));
  v.expect(scale <= 1e-9, "scale invariance " + fmt("%.2e", scale));
  v.expect(oracle_err <= 1e-9, "Gram-Schmidt oracle " + fmt("%.2e", oracle_err));
  v.expect(round <= 1e-9, "round trip " + fmt("%.2e", round));
  v.expect(elapsed < 5.0, "runtime " + fmt("%.2fs", elapsed));
  v.note("max err " + fmt("%.1e", std::max({orth, det, scale, oracle_err, round})) + ", " +
         fmt("%.2fs", elapsed));
  return v;
}

// ---------------------------------------------------------------- 2

Verdict fk_oracle() {
  Verdict v;
  const HandModel hand(builtin_test_hand());
  const HandPoints rest = hand.forward_kinematics(GraspPose::identity(hand.dof()));
  Rng rng(102);
  double worst = 0.0, rigid = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GraspPose pose = random_pose(hand, rng);
    const HandPoints fk = hand.forward_kinematics(pose);
    const oracle::FkResult ref = oracle::matrix_chain_fk(hand.spec(), pose);
    for (Eigen::Index c = 0; c < fk.points.cols(); ++c) {
      worst = std::max(worst, (fk.points.col(c) - ref.points[static_cast<std::size_t>(c)]).norm());
    }
    for (std::size_t t = 0; t < fk.fingertips.size(); ++t) {
      worst = std::max(worst, (fk.fingertips[t].position - ref.tip_positions[t]).norm());
      worst = std::max(worst, (fk.fingertips[t].normal - ref.tip_normals[t]).norm());
    }
    for (Eigen::Index a = 0; a < fk.points.cols(); a += 11) {
      for (Eigen::Index b = a + 1; b < fk.points.cols(); b += 13) {
        if (fk.point_link[a] != fk.point_link[b]) continue;
        rigid = std::max(rigid, std::abs((fk.points.col(a) - fk.points.col(b)).norm() -
                                         (rest.points.col(a) - rest.points.col(b)).norm()));
      }
    }
  }
  v.expect(worst <= 1e-9, "oracle agreement " + fmt("%.2e", worst));
  v.expect(rigid <= 1e-12, "rigid link distances " + fmt("%.2e", rigid));
  v.note("max oracle err " + fmt("%.1e", worst) + ", rigid " + fmt("%.1e", rigid));
  return v;
}

// ---------------------------------------------------------------- 3

Verdict geometry_oracle() {
  Verdict v;
  Rng rng(103);
  std::vector<TriMesh> meshes;
  for (const auto& name : builtin_object_names()) meshes.push_back(make_builtin_object(name).mesh);
  meshes.push_back(make_sphere(0.05, 20, 10));
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const TriMesh& mesh = meshes[static_cast<std::size_t>(i) % meshes.size()];
    const Aabb box = mesh.bounds();
    Eigen::Vector3d p;
    for (int k = 0; k < 3; ++k) {
      const double pad = 0.15 * (box.hi[k] - box.lo[k]);
      p[k] = rng.uniform(box.lo[k] - pad, box.hi[k] + pad);
    }
    worst = std::max(worst, std::abs(penetration_sigma(p, mesh) - oracle::brute_sigma(mesh, p)));
  }
  v.expect(worst <= 1e-9, "sigma vs brute force " + fmt("%.2e", worst));

  auto vertices = [](const TriMesh& m) {
    Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(m.vertices.size()));
    for (std::size_t i = 0; i < m.vertices.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.vertices[i];
    return out;
  };
  for (int i = 0; i < 20; ++i) {
    const TriMesh a = make_box({rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)});
    const TriMesh b = make_sphere(rng.uniform(0.1, 0.5), 16, 8);
    const double ab = penetration_energy(vertices(a), a, vertices(b), b);
    const double ba = penetration_energy(vertices(b), b, vertices(a), a);
    v.expect(ab == ba, "E_pene symmetry");
  }

  const int segments = 48;
  const TriMesh big = make_sphere(1.0, segments, 24);
  const TriMesh small = make_sphere(0.5, segments, 24);
  const double e = penetration_energy(vertices(small), small, vertices(big), big);
  const double chord = (1.0 + 0.5) * (1.0 - std::cos(std::numbers::pi / segments));
  v.expect(std::abs(e - 0.5) <= chord, "concentric spheres " + fmt("%.6f", e));
  v.note("max sigma err " + fmt("%.1e", worst) + ", concentric " + fmt("%.5f", e) +
         " (chord bound " + fmt("%.5f", chord) + ")");
  return v;
}

// ---------------------------------------------------------------- 4

Verdict refinement() {
  Verdict v;
  const HandModel hand(builtin_test_hand());
  const ObjectModel box = object_from_mesh("big-box", make_box({0.06, 0.06, 0.04}), 1024);
  const Eigen::Matrix3d down = Eigen::AngleAxisd(std::numbers::pi, Eigen::Vector3d::UnitX()).toRotationMatrix();
  const GraspPose pushed = pose_from_rotation(down, Eigen::Vector3d(0, 0, 0.04 - 0.02),
                                              Eigen::VectorXd::Zero(hand.dof()));
  const RefineResult r = refine_pose(pushed, hand, box);
  v.expect(r.initial_energy() >= 0.0199, "constructed pose penetrates 2 cm, E0 " + fmt("%.4f", r.initial_energy()));
  v.expect(r.final_energy() < 1e-3, "final E " + fmt("%.5f", r.final_energy()));
  v.expect(r.accepted_steps <= 200, "within 200 steps");
  bool monotone = true;
  for (std::size_t k = 1; k < r.trace.size(); ++k) monotone = monotone && r.trace[k] <= r.trace[k - 1];
  v.expect(monotone, "non-increasing trace");
  v.note("E " + fmt("%.4f", r.initial_energy()) + " -> " + fmt("%.5f", r.final_energy()) + " in " +
         std::to_string(r.accepted_steps) + " steps");

  // Paired evaluation: generated grasps disturbed into the object, labelled
  // before and after refinement.
  std::string eta;
  for (const auto& name : builtin_object_names()) {
    const ObjectModel obj = make_builtin_object(name);
    const auto candidates = propose_agnostic(hand, obj, 12, Rng(104));
    Rng rng(105);
    std::vector<PoseLabels> before, after;
    for (const auto& c : candidates) {
      GraspPose p = c.pose;
      p.translation += (obj.center - p.translation).normalized() * rng.uniform(0.005, 0.015);
      for (int j = 0; j < hand.dof(); ++j) p.joints[j] += 0.15 * rng.normal();
      p = hand.clamp_joints(p);
      before.push_back(label_pose(hand, obj, p, std::nullopt));
      after.push_back(label_pose(hand, obj, refine_pose(p, hand, obj).pose, std::nullopt));
    }
    const double u = summarize(before).eta_f;
    const double f = summarize(after).eta_f;
    v.expect(f >= u, "eta_f on " + name);
    eta += " " + name + " " + fmt("%.2f", u) + "->" + fmt("%.2f", f);
  }
  v.note("eta_f" + eta);
  return v;
}

// ---------------------------------------------------------------- 5

Verdict diffusion_identities() {
  Verdict v;
  for (auto [K, b0, b1] : {std::tuple{50, 1e-4, 0.2}, {100, 1e-4, 0.02}, {1, 0.3, 0.3}}) {
    for (SigmaMode mode : {SigmaMode::kBeta, SigmaMode::kPosterior, SigmaMode::kZero}) {
      const NoiseSchedule s = make_schedule(K, b0, b1, mode);
      double prod = 1.0;
      bool exact = true;
      for (int k = 1; k <= K; ++k) {
        prod *= 1.0 - s.beta_at(k);
        exact = exact && s.alpha_at(k) == 1.0 - s.beta_at(k) && s.alpha_bar_at(k) == prod;
        exact = exact && (k == 1 || (s.beta_at(k) >= s.beta_at(k - 1) &&
                                     s.alpha_bar_at(k) < s.alpha_bar_at(k - 1)));
        double sigma = 0.0;
        if (mode == SigmaMode::kBeta) sigma = std::sqrt(s.beta_at(k));
        if (mode == SigmaMode::kPosterior && k > 1) {
          sigma = std::sqrt(s.beta_at(k) * (1.0 - s.alpha_bar_at(k - 1)) / (1.0 - s.alpha_bar_at(k)));
        }
        exact = exact && s.sigma_at(k) == sigma;
      }
      v.expect(exact, "schedule invariants K=" + std::to_string(K));
    }
  }

  Rng rng(106);
  const Eigen::VectorXd g = Eigen::VectorXd::NullaryExpr(9, [&] { return rng.normal(); });
  const Eigen::VectorXd eps = Eigen::VectorXd::NullaryExpr(9, [&] { return rng.normal(); });
  const NoiseSchedule tiny = schedule_from_betas(Eigen::VectorXd::Constant(1, 1e-12));
  const NoiseSchedule huge = schedule_from_betas(Eigen::VectorXd::Constant(1, 1.0 - 1e-12));
  for (QSampleMode mode : {QSampleMode::kSingleStep, QSampleMode::kCumulative}) {
    v.expect((q_sample(g, 1, eps, tiny, mode) - g).cwiseAbs().maxCoeff() <= 1e-6 * eps.cwiseAbs().maxCoeff() + 1e-12,
             "q_sample at beta -> 0");
    v.expect((q_sample(g, 1, eps, huge, mode) - eps).cwiseAbs().maxCoeff() <= 1e-6 * g.cwiseAbs().maxCoeff() + 1e-12,
             "q_sample at beta -> 1");
  }

  const NoiseSchedule s = make_schedule(10, 0.05, 0.4);
  const int k = 6;
  const int n = 100000;
  double sum = 0, sum_sq = 0, sum_c = 0, sum_c_sq = 0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 2.0 * rng.normal());
    const Eigen::VectorXd e = Eigen::VectorXd::Constant(1, rng.normal());
    const double a = q_sample(x, k, e, s, QSampleMode::kSingleStep)[0];
    const double c = q_sample(x, k, e, s, QSampleMode::kCumulative)[0];
    sum += a;
    sum_sq += a * a;
    sum_c += c;
    sum_c_sq += c * c;
  }
  const double var = sum_sq / n - (sum / n) * (sum / n);
  const double var_c = sum_c_sq / n - (sum_c / n) * (sum_c / n);
  const double expect = (1 - s.beta_at(k)) * 4.0 + s.beta_at(k);
  const double expect_c = s.alpha_bar_at(k) * 4.0 + 1 - s.alpha_bar_at(k);
  const double dev = std::max(std::abs(var / expect - 1), std::abs(var_c / expect_c - 1));
  v.expect(dev <= 0.02, "Monte-Carlo variance " + fmt("%.4f", dev));

  const NoiseSchedule chain = make_schedule(50, 1e-4, 0.2, SigmaMode::kPosterior);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(15, [&] { return rng.normal(); });
    Eigen::VectorXd x = q_sample(x0, 50, Eigen::VectorXd::NullaryExpr(15, [&] { return rng.normal(); }),
                                 chain, QSampleMode::kCumulative);
    for (int step = 50; step >= 1; --step) {
      const Eigen::VectorXd e =
          (x - std::sqrt(chain.alpha_bar_at(step)) * x0) / std::sqrt(1.0 - chain.alpha_bar_at(step));
      x = reverse_step(x, step, e, chain, rng);
    }
    worst = std::max(worst, (x - x0).norm() / x0.norm());
  }
  v.expect(worst <= 0.1, "oracle-denoiser reconstruction " + fmt("%.4f", worst));
  v.note("MC dev " + fmt("%.4f", dev) + ", reconstruction err " + fmt("%.4f", worst));
  return v;
}

// ---------------------------------------------------------------- 6

Verdict multimodality() {
  Verdict v;
  const auto t0 = Clock::now();
  const double sig = 0.25;
  const Eigen::Vector2d modes[2] = {{-2.0, 1.0}, {2.0, -1.0}};
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    TrainingSet set;
    for (int i = 0; i < 2000; ++i) {
      set.add(modes[i % 2] + sig * Eigen::Vector2d(rng.normal(), rng.normal()));
    }
    ModelConfig mc;
    mc.state_dim = 2;
    mc.conditioned = false;
    mc.hidden = 64;
    DiffusionNet net(mc, seed);
    const NoiseSchedule sched = make_schedule(50, 1e-4, 0.2, SigmaMode::kPosterior);
    TrainOptions opts;
    opts.steps = 6000;
    opts.batch = 128;
    opts.lambda_r = 0.0;
    opts.seed = seed;
    Trainer trainer(net, sched, nullptr, opts);
    trainer.fit(set);
    const Denoiser denoiser = [&](const Eigen::MatrixXd& x, int k) {
      const std::vector<int> steps(static_cast<std::size_t>(x.cols()), k);
      return net.predict_batch(x, Eigen::MatrixXd(0, x.cols()), steps);
    };
    const Eigen::MatrixXd out =
        net.normalizer.denormalize(run_reverse_chains(denoiser, 2, 1000, sched, Rng(seed + 100)));
    int count[2] = {0, 0};
    int near = 0;
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      const double d0 = (out.col(i) - modes[0]).norm();
      const double d1 = (out.col(i) - modes[1]).norm();
      ++count[d0 < d1 ? 0 : 1];
      near += std::min(d0, d1) <= 3.0 * sig;
    }
    const double n = static_cast<double>(out.cols());
    v.expect(count[0] >= 0.2 * n && count[1] >= 0.2 * n, "both modes covered, seed " + std::to_string(seed));
    v.expect(near >= 0.9 * n, "90% within 3 sigma, seed " + std::to_string(seed));
    detail += " " + std::to_string(count[0]) + "/" + std::to_string(count[1]) + "/" + std::to_string(near);
  }
  const double elapsed = seconds_since(t0);
  v.expect(elapsed < 600.0, "runtime " + fmt("%.0fs", elapsed));
  v.note("mode A/mode B/within 3sigma per 1000:" + detail + ", " + fmt("%.0fs", elapsed));
  return v;
}

// ---------------------------------------------------------------- 7

double gradient_error(const std::vector<ParamSlot>& slots, const std::function<double()>& loss,
                      const std::function<void()>& backprop, Rng& rng) {
  for (const auto& s : slots) std::fill(s.grad, s.grad + s.size(), 0.0);
  backprop();
  double worst = 0.0;
  const double h = 1e-5;
  for (const ParamSlot& s : slots) {
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index i = rng.uniform_int(0, static_cast<int>(s.size()) - 1);
      const double saved = s.value[i];
      s.value[i] = saved + h;
      const double up = loss();
      s.value[i] = saved - h;
      const double down = loss();
      s.value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::abs(numeric), std::abs(s.grad[i]), 1e-4});
      worst = std::max(worst, std::abs(numeric - s.grad[i]) / scale);
    }
  }
  return worst;
}

Verdict losses() {
  Verdict v;
  Rng rng(107);
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return rng.normal(); }).eval();
  };

  const HandModel hand(builtin_test_hand());
  const NoiseSchedule sched = make_schedule(50, 1e-4, 0.2);
  const Eigen::MatrixXd eps = random(15, 8);
  Eigen::MatrixXd clean(15, 8);
  for (Eigen::Index c = 0; c < 8; ++c) clean.col(c) = flatten(random_pose(hand, rng));
  const std::vector<int> steps = {1, 5, 9, 17, 25, 33, 41, 50};
  v.expect(loss_diffusion(eps, eps) == 0.0, "L_D(eps, eps) = 0");
  v.expect(loss_reconstruction(hand, clean, eps, eps, steps, sched) == 0.0, "L_R(eps, eps) = 0");
  v.expect(kDefaultLambdaR == 1.0 && TrainOptions{}.lambda_r == 1.0, "lambda_R default 1");

  double worst = 0.0;
  for (Activation act : {Activation::kIdentity, Activation::kRelu, Activation::kSilu}) {
    Dense layer(6, 4, act);
    layer.init(rng);
    layer.bias = random(4, 1) * 0.1;
    const Eigen::MatrixXd x = random(6, 5);
    const Eigen::MatrixXd w = random(4, 5);
    std::vector<ParamSlot> slots;
    layer.collect(slots);
    worst = std::max(worst, gradient_error(
                                slots, [&] { return (layer.forward(x, nullptr).array() * w.array()).sum(); },
                                [&] {
                                  Dense::Tape tape;
                                  layer.forward(x, &tape);
                                  layer.backward(w, tape);
                                },
                                rng));
  }
  {
    Mlp mlp({5, 12, 12, 3}, {Activation::kRelu, Activation::kSilu, Activation::kIdentity});
    mlp.init(rng);
    const Eigen::MatrixXd x = random(5, 4);
    const Eigen::MatrixXd w = random(3, 4);
    std::vector<ParamSlot> slots;
    mlp.collect(slots);
    worst = std::max(worst, gradient_error(
                                slots, [&] { return (mlp.forward(x, nullptr).array() * w.array()).sum(); },
                                [&] {
                                  Mlp::Tape tape;
                                  mlp.forward(x, &tape);
                                  mlp.backward(w, tape);
                                },
                                rng));
  }
  {
    PointEncoder enc;
    enc.init(rng);
    const std::vector<Eigen::Matrix3Xd> clouds = {random(3, 7) * 0.05, random(3, 5) * 0.05};
    const Eigen::MatrixXd w = random(kPointFeatureDim, 2);
    std::vector<ParamSlot> slots;
    enc.collect(slots);
    worst = std::max(worst, gradient_error(
                                slots,
                                [&] { return (enc.encode_batch(clouds, 1.0, nullptr).array() * w.array()).sum(); },
                                [&] {
                                  PointEncoder::Tape tape;
                                  enc.encode_batch(clouds, 1.0, &tape);
                                  enc.backward(w, tape);
                                },
                                rng));
  }
  {
    NoisePredictor net(5, 10, 16, 2);
    net.init(rng);
    const Eigen::MatrixXd s = random(5, 3);
    const Eigen::MatrixXd c = random(10, 3);
    Eigen::MatrixXd t(kTimeDim, 3);
    for (int i = 0; i < 3; ++i) t.col(i) = timestep_embedding(7 * i + 2);
    const Eigen::MatrixXd w = random(5, 3);
    std::vector<ParamSlot> slots;
    net.collect(slots);
    worst = std::max(worst, gradient_error(
                                slots, [&] { return (net.forward(s, c, t, nullptr).array() * w.array()).sum(); },
                                [&] {
                                  NoisePredictor::Tape tape;
                                  net.forward(s, c, t, &tape);
                                  net.backward(w, tape);
                                },
                                rng));
  }
  v.expect(worst <= 1e-4, "gradient check " + fmt("%.2e", worst));

  // Single-batch overfit of the full conditional model with L_R.
  const ObjectModel obj = make_builtin_object("sphere-button");
  ModelConfig mc;
  mc.hidden = 64;
  mc.hand_points = 32;
  mc.object_points = 64;
  DiffusionNet net(mc, 3);
  TrainingSet set;
  set.object_clouds.push_back(obj.points);
  set.text_embeddings.push_back(StubTextEmbedder().embed("press the button"));
  for (const auto& c : propose_agnostic(hand, obj, 16, Rng(108))) set.add(flatten(c.pose));
  TrainOptions opts;
  opts.batch = 16;
  opts.scale_floor = grasp_scale_floor(hand.dof());
  Trainer trainer(net, sched, &hand, opts);
  Eigen::MatrixXd states(15, static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) states.col(static_cast<Eigen::Index>(i)) = set.states[i];
  net.normalizer = StateNormalizer::fit(states, opts.scale_floor);
  Rng brng(109);
  const TrainBatch batch = trainer.draw_batch(set, brng);
  const double before = trainer.evaluate(set, batch).total;
  for (int i = 0; i < 500; ++i) trainer.step(set, batch);
  const double after = trainer.evaluate(set, batch).total;
  v.expect(after * 10.0 <= before, "overfit " + fmt("%.4f", before) + " -> " + fmt("%.4f", after));
  v.note("grad err " + fmt("%.1e", worst) + ", overfit " + fmt("%.3f", before) + " -> " + fmt("%.4f", after) +
         " (" + fmt("%.0fx", before / after) + ")");
  return v;
}

// ---------------------------------------------------------------- 8

Contact sphere_contact(const Eigen::Vector3d& direction, double mu) {
  const Eigen::Vector3d u = direction.normalized();
  return {u, -u, u.unitOrthogonal(), mu, ""};
}

ContactSet antipodal(double mu) {
  ContactSet set;
  set.contacts = {sphere_contact({1, 0, 0}, mu), sphere_contact({-1, 0, 0.25}, mu),
                  sphere_contact({-1, 0, -0.25}, mu)};
  return set;
}

Verdict q1_metric() {
  Verdict v;
  ContactSet single;
  single.contacts = {sphere_contact({0, 0, 1}, 0.5)};
  v.expect(q1(single, 1.0) == 0.0, "single contact");
  const ContactSet set = antipodal(0.5);
  const double value = q1(set, 1.0);
  const double ref = oracle::facet_enumeration_q1(set, 1.0, 8);
  v.expect(value > 0.0, "antipodal q1 > 0");
  v.expect(std::abs(value - ref) <= 1e-6, "facet oracle " + fmt("%.3e", std::abs(value - ref)));
  v.expect(make_report(value, 0.51, false).q1 == 0.0, "penetration above 0.5 cm zeroes q1");
  v.expect(make_report(value, 0.5, false).q1 == value, "penetration of 0.5 cm keeps q1");
  double previous = 0.0;
  bool monotone = true;
  for (double mu : {0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0}) {
    const double q = q1(antipodal(mu), 1.0);
    monotone = monotone && q >= previous;
    previous = q;
  }
  v.expect(monotone, "mu monotone");
  v.note("q1 " + fmt("%.6f", value) + " oracle " + fmt("%.6f", ref));
  return v;
}

// ---------------------------------------------------------------- 9

Verdict rule_filters() {
  Verdict v;
  int correct = 0, total = 0;
  for (const auto& c : cases::curated_rule_cases()) {
    const ObjectModel obj = make_builtin_object(c.object);
    const bool ok = rule_filter(c.task, c.hand, obj).pass == c.expected;
    v.expect(ok, c.label);
    correct += ok;
    ++total;
  }
  v.expect(total == 100, "100 curated cases");
  v.note(std::to_string(correct) + "/" + std::to_string(total) + " correct");
  return v;
}

// ---------------------------------------------------------------- 10

Verdict reward_table() {
  Verdict v;
  struct Row {
    double theta0, theta, h0, h, dist, expected;
  };
  const Row rows[] = {
      {0.3, 0.3, 0.0, 0.0, 0.0, 0.0},      {0.0, 0.1, 0.0, 0.0, 0.0, 8.0},
      {0.0, 0.0, 0.0, 0.2, 0.0, 1.5},      {0.0, 0.7, 0.0, 0.12, 0.0, 107.2},
      {0.0, 0.0, 0.0, 0.0, 0.05, -0.5},    {0.0, 0.7, 0.0, 0.10, 0.0, 57.0},
      {0.0, 0.6, 0.0, 0.11, 0.0, 49.1},    {0.0, 0.0, 0.03, 0.0, 0.0, -0.3},
      {0.5, 0.2, 0.0, 0.0, 0.0, -24.0},    {0.0, 0.8, 0.0, 0.2, 0.1, 114.5},
      {1.0, 1.0, 0.0, 0.15, 0.0, 51.5},    {0.65, 0.65, 0.0, 0.11, 0.02, 50.9},
  };
  int i = 0;
  for (const Row& row : rows) {
    ExecState s;
    s.theta0 = row.theta0;
    s.theta = row.theta;
    s.h0 = row.h0;
    s.h = row.h;
    s.t_object = Eigen::Vector3d(0.1, 0.2, 0.3);
    s.t_hand = s.t_object + Eigen::Vector3d(0.0, row.dist, 0.0);
    const double r = reward(s).r;
    v.expect(std::abs(r - row.expected) <= 1e-12,
             "state " + std::to_string(i) + ": " + fmt("%.15g", r) + " vs " + fmt("%g", row.expected));
    ++i;
  }
  const RewardWeights w;
  v.expect(w.alpha1 == 80 && w.alpha2 == 10 && w.alpha3 == 50 && w.alpha4 == 10, "weights");
  v.note("12 states");
  return v;
}

// ---------------------------------------------------------------- 11

Verdict bootstrap_desk_scale() {
  Verdict v;
  const HandModel hand(builtin_test_hand());
  const ObjectModel obj = make_builtin_object("sphere-button");
  const auto t0 = Clock::now();
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    std::vector<GraspPose> seeds;
    for (const auto& c : propose_agnostic(hand, obj, 400, Rng(seed))) {
      if (seeds.size() < 5 && c.labels.stable &&
          label_pose(hand, obj, c.pose, TaskKind::kSprayPress).rule_pass) {
        seeds.push_back(c.pose);
      }
    }
    if (seeds.empty()) {
      v.expect(false, "seed grasps for seed " + std::to_string(seed));
      continue;
    }
    BootstrapConfig cfg;
    cfg.batch = 256;
    cfg.iterations = 5;
    cfg.min_growth = 0.0;
    cfg.seed = seed;
    const BootstrapResult r = bootstrap(hand, obj, TaskKind::kSprayPress, seeds, cfg);
    int grew = 0;
    int previous = r.seed_stats.count;
    std::string counts = std::to_string(previous);
    for (const auto& it : r.iterations) {
      grew += it.count > previous;
      previous = it.count;
      counts += ">" + std::to_string(it.count);
    }
    const double final_range = r.iterations.empty() ? 0.0 : r.iterations.back().stats.mean_range;
    const double ratio = r.seed_stats.mean_range > 0 ? final_range / r.seed_stats.mean_range : 0.0;
    v.expect(seeds.size() <= 5, "at most 5 seeds");
    v.expect(grew >= 3, "strict growth in >= 3 iterations, seed " + std::to_string(seed));
    v.expect(ratio >= 2.0, "joint range x" + fmt("%.2f", ratio) + ", seed " + std::to_string(seed));
    detail += " [seed " + std::to_string(seed) + ": " + counts + ", range x" + fmt("%.2f", ratio) + "]";
  }
  const double elapsed = seconds_since(t0);
  v.expect(elapsed < 1800.0, "runtime " + fmt("%.0fs", elapsed));
  v.note(detail.substr(1) + ", " + fmt("%.0fs", elapsed));
  return v;
}

// ---------------------------------------------------------------- 12

Verdict reproducibility() {
  Verdict v;
  const HandModel hand(builtin_test_hand());
  const ObjectModel obj = make_builtin_object("sphere-button");
  const auto dir = std::filesystem::temp_directory_path() / "tograsp_acceptance";
  std::filesystem::create_directories(dir);

  AgnosticOptions a1, a3;
  a3.workers = 3;
  auto agnostic = [&](const AgnosticOptions& o) {
    std::vector<DatasetRecord> out;
    for (const auto& p : generate_agnostic(hand, obj, 30, Rng(110), o)) {
      out.push_back(make_record(hand, obj, p, std::nullopt, "", "agnostic", 0, 110));
    }
    return records_text(out);
  };
  const std::string gen = agnostic(a1);
  v.expect(gen == agnostic(a1) && gen == agnostic(a3), "gen-agnostic");

  auto small_bootstrap = [&](int workers) {
    BootstrapConfig cfg;
    cfg.iterations = 2;
    cfg.batch = 12;
    cfg.train.steps = 10;
    cfg.warmup_steps = 5;
    cfg.train.batch = 8;
    cfg.model.hidden = 32;
    cfg.model.hand_points = 16;
    cfg.model.object_points = 32;
    cfg.sampler.K = 10;
    cfg.refine.steps = 10;
    cfg.seed = 111;
    cfg.workers = workers;
    const auto seeds = generate_agnostic(hand, obj, 60, Rng(111));
    std::vector<GraspPose> valid;
    for (const auto& p : seeds) {
      if (label_pose(hand, obj, p, TaskKind::kSprayPress).rule_pass) valid.push_back(p);
    }
    return bootstrap(hand, obj, TaskKind::kSprayPress, valid, cfg);
  };
  const BootstrapResult b1 = small_bootstrap(1);
  const BootstrapResult b3 = small_bootstrap(3);
  v.expect(records_text(b1.records) == records_text(b3.records) &&
               b1.diversity_csv() == b3.diversity_csv(),
           "bootstrap");

  b1.model.save(dir / "m1.ckpt");
  small_bootstrap(1).model.save(dir / "m2.ckpt");
  b3.model.save(dir / "m3.ckpt");
  const std::string ckpt = file_bytes(dir / "m1.ckpt");
  v.expect(!ckpt.empty() && ckpt == file_bytes(dir / "m2.ckpt") && ckpt == file_bytes(dir / "m3.ckpt"),
           "train checkpoint bytes");

  const NoiseSchedule sched = make_schedule(10, 1e-4, 0.35);
  SampleOptions s1, s3;
  s3.workers = 3;
  const auto samples = sample(hand, obj, "press the button", b1.model, sched, 20, Rng(112), s1);
  v.expect(poses_text(samples) == poses_text(sample(hand, obj, "press the button", b1.model, sched, 20, Rng(112), s3)),
           "sample");

  std::string refined_a, refined_b;
  for (const auto& p : samples) {
    refined_a += poses_text({refine_pose(p, hand, obj).pose});
    refined_b += poses_text({refine_pose(p, hand, obj).pose});
  }
  v.expect(refined_a == refined_b, "refine");

  EvalOptions e1, e3;
  e1.n = 8;
  e1.seed = 113;
  e1.refine.steps = 20;
  e3 = e1;
  e3.workers = 3;
  v.expect(evaluate(hand, b1.model, {&obj}, {TaskKind::kSprayPress}, sched, e1).to_csv() ==
               evaluate(hand, b1.model, {&obj}, {TaskKind::kSprayPress}, sched, e3).to_csv(),
           "evaluate");

  std::vector<DatasetRecord> pool = b1.records;
  for (auto& r : pool) r.validated = r.rule_pass;
  QuotaConfig quota;
  quota.task_oriented = 3;
  quota.agnostic = 0;
  quota.allow_partial = true;
  write_dataset(dir / "d1.jsonl", aggregate_dataset(pool, quota, 114));
  write_dataset(dir / "d2.jsonl", aggregate_dataset(pool, quota, 114));
  v.expect(file_bytes(dir / "d1.jsonl") == file_bytes(dir / "d2.jsonl"), "make-dataset");

  Rng t1(115), t2(115);
  v.expect(generate(default_bank(), TaskKind::kCapTwist, t1).text ==
               generate(default_bank(), TaskKind::kCapTwist, t2).text,
           "describe-task");
  std::filesystem::remove_all(dir);
  v.note("gen-agnostic, train, sample, refine, evaluate, bootstrap, make-dataset, describe-task");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all = {
      {1, "rotation suite", rotation_suite},
      {2, "forward kinematics oracle", fk_oracle},
      {3, "geometry oracle", geometry_oracle},
      {4, "refinement", refinement},
      {5, "diffusion identities", diffusion_identities},
      {6, "multi-modality", multimodality},
      {7, "losses and gradients", losses},
      {8, "Q1 metric", q1_metric},
      {9, "rule filters", rule_filters},
      {10, "reward table", reward_table},
      {11, "bootstrap desk-scale", bootstrap_desk_scale},
      {12, "reproducibility", reproducibility},
  };
  // Optional arguments select criteria by number.
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.expect(false, std::string("exception: ") + e.what());
    }
    failed += !v.ok();
    std::printf("[%2d] %s %-26s (%.1fs) %s\n", c.id, v.ok() ? "PASS" : "FAIL", c.name, seconds_since(t0),
                v.detail().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
