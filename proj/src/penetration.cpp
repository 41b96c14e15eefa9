#include "tograsp/penetration.hpp"

#include <algorithm>

namespace tograsp {

double penetration_sigma(const Eigen::Vector3d& u, const TriMesh& mesh) {
  return MeshQuery(mesh).sigma(u);
}

double penetration_energy(const Eigen::Matrix3Xd& a_points, const Solid& a,
                          const Eigen::Matrix3Xd& b_points, const Solid& b) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < a_points.cols(); ++i) {
    e = std::max(e, b.sigma(a_points.col(i)));
  }
  for (Eigen::Index i = 0; i < b_points.cols(); ++i) {
    e = std::max(e, a.sigma(b_points.col(i)));
  }
  return e;
}

double penetration_energy(const Eigen::Matrix3Xd& a_points,
                          const TriMesh& a_mesh,
                          const Eigen::Matrix3Xd& b_points,
                          const TriMesh& b_mesh) {
  const MeshQuery a(a_mesh);
  const MeshQuery b(b_mesh);
  return penetration_energy(a_points, a, b_points, b);
}

double max_penetration_depth_cm(const Eigen::Matrix3Xd& object_points,
                                const Solid& hand) {
  double depth = 0.0;
  for (Eigen::Index i = 0; i < object_points.cols(); ++i) {
    depth = std::max(depth, hand.sigma(object_points.col(i)));
  }
  return 100.0 * depth;
}

double hand_object_energy(const HandModel& hand, const HandPoints& posed,
                          const ObjectModel& obj) {
  const PosedHandSolid solid(hand, posed.link_poses);
  return penetration_energy(posed.points, solid, obj.points, *obj.query);
}

double hand_object_energy(const HandModel& hand, const GraspPose& pose,
                          const ObjectModel& obj) {
  return hand_object_energy(hand, hand.forward_kinematics(pose), obj);
}

PenetrationStats penetration_stats(const Eigen::Matrix3Xd& a_points,
                                   const Solid& a,
                                   const Eigen::Matrix3Xd& b_points,
                                   const Solid& b) {
  PenetrationStats stats;
  auto add = [&](double d) {
    stats.max = std::max(stats.max, d);
    stats.sum_sq += d * d;
  };
  for (Eigen::Index i = 0; i < a_points.cols(); ++i) add(b.sigma(a_points.col(i)));
  for (Eigen::Index i = 0; i < b_points.cols(); ++i) add(a.sigma(b_points.col(i)));
  return stats;
}

RefineResult refine_pose(const GraspPose& pose, const HandModel& hand,
                         const ObjectModel& obj, const RefineOptions& options) {
  const int nj = hand.dof();
  auto evaluate = [&](const Eigen::VectorXd& x) {
    const HandPoints posed = hand.forward_kinematics(unflatten(x, nj));
    const PosedHandSolid solid(hand, posed.link_poses);
    return penetration_stats(posed.points, solid, obj.points, *obj.query);
  };
  auto clamp = [&](Eigen::VectorXd& x) {
    x.tail(nj) = x.tail(nj).cwiseMax(hand.lower()).cwiseMin(hand.upper());
  };

  RefineResult result;
  Eigen::VectorXd x = flatten(hand.clamp_joints(pose));
  PenetrationStats current = evaluate(x);
  result.trace.push_back(current.max);
  const Eigen::Index n = x.size();
  Eigen::VectorXd grad(n);
  const double max_alpha = 8.0 * options.step_size;
  double trial = options.step_size;
  for (int step = 0; step < options.steps && current.max > 0.0; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += options.fd_step;
      xm[i] -= options.fd_step;
      grad[i] = (evaluate(xp).max - evaluate(xm).max) / (2.0 * options.fd_step);
    }
    bool accepted = false;
    double alpha = trial;
    for (int h = 0; h <= options.max_halvings && grad.squaredNorm() > 0.0;
         ++h, alpha *= 0.5) {
      Eigen::VectorXd candidate = x - alpha * grad;
      clamp(candidate);
      const PenetrationStats sc = evaluate(candidate);
      if (sc.max < current.max) {
        x = std::move(candidate);
        current = sc;
        accepted = true;
        break;
      }
    }
    trial = accepted ? std::clamp(2.0 * alpha, options.step_size, max_alpha)
                     : options.step_size;
    alpha = options.step_size;
    for (int h = 0; !accepted && h <= options.max_halvings; ++h, alpha *= 0.5) {
      Eigen::VectorXd best;
      PenetrationStats best_stats = current;
      for (Eigen::Index i = 0; i < 2 * n; ++i) {
        Eigen::VectorXd candidate = x;
        candidate[i / 2] += (i % 2 == 0 ? alpha : -alpha);
        clamp(candidate);
        const PenetrationStats sc = evaluate(candidate);
        if (sc.max <= current.max && sc.sum_sq < best_stats.sum_sq) {
          best = std::move(candidate);
          best_stats = sc;
        }
      }
      if (best.size() > 0) {
        x = std::move(best);
        current = best_stats;
        accepted = true;
      }
    }
    if (!accepted) break;
    result.trace.push_back(current.max);
    ++result.accepted_steps;
  }
  result.pose = unflatten(x, nj);
  return result;
}

}  // namespace tograsp
