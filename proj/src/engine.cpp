#include "tograsp/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "tograsp/errors.hpp"
#include "tograsp/format.hpp"
#include "tograsp/parallel.hpp"

namespace tograsp {

namespace {

Eigen::Matrix3d palm_frame(const Eigen::Vector3d& direction, double roll) {
  const Eigen::Vector3d z = -direction.normalized();
  const Eigen::Vector3d a = std::abs(z.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                                  : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d x0 = (a - a.dot(z) * z).normalized();
  const Eigen::Vector3d y0 = z.cross(x0);
  const Eigen::Vector3d x = std::cos(roll) * x0 + std::sin(roll) * y0;
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return r;
}

// Deepest mutual penetration between the object and the given links only.
double links_penetration(const HandModel& hand, const ObjectModel& obj,
                         const GraspPose& pose, const std::vector<int>& links) {
  const HandPoints posed = hand.forward_kinematics(pose);
  const PosedHandSolid solid(hand, posed.link_poses);
  std::vector<char> wanted(posed.link_poses.size(), 0);
  for (int l : links) wanted[static_cast<std::size_t>(l)] = 1;
  double e = 0.0;
  for (Eigen::Index i = 0; i < posed.points.cols(); ++i) {
    if (wanted[static_cast<std::size_t>(posed.point_link[i])]) {
      e = std::max(e, obj.query->sigma(posed.points.col(i)));
    }
  }
  for (int l : links) {
    for (Eigen::Index i = 0; i < obj.points.cols(); ++i) {
      e = std::max(e, solid.sigma_link(l, obj.points.col(i)));
    }
  }
  return e;
}

std::string state_key(const Eigen::VectorXd& v) {
  return std::string(reinterpret_cast<const char*>(v.data()),
                     sizeof(double) * static_cast<std::size_t>(v.size()));
}

}  // namespace

GraspPose approach_pose(const HandModel& hand, const ObjectModel& obj,
                        const Eigen::Vector3d& direction, double roll,
                        double standoff, const AgnosticOptions& options) {
  const Eigen::Vector3d u = direction.normalized();
  const GraspPose base = pose_from_rotation(palm_frame(u, roll),
                                            Eigen::Vector3d::Zero(), hand.lower());
  auto at = [&](double s) {
    GraspPose p = base;
    p.translation = obj.center + s * u;
    return p;
  };
  auto touching = [&](double s) {
    return hand_object_energy(hand, at(s), obj) > 0.0;
  };
  double hi = options.inflate * obj.radius + options.margin;
  if (touching(hi)) return at(hi);
  double lo = hi;
  bool contact = false;
  while (lo > 0.0) {
    const double next = std::max(0.0, lo - options.approach_step);
    if (touching(next)) {
      hi = lo;
      lo = next;
      contact = true;
      break;
    }
    lo = next;
  }
  if (!contact) return at(0.0);
  // Invariant: lo touches, hi does not.
  while (hi - lo > options.tolerance) {
    const double mid = 0.5 * (lo + hi);
    (touching(mid) ? lo : hi) = mid;
  }
  return at(hi + standoff);
}

namespace {

// Closes joint j from its current value until its subtree touches the object
// (bisected to the tip tolerance) or the joint reaches its upper limit.
void close_joint(const HandModel& hand, const ObjectModel& obj, GraspPose& p,
                 int j, const AgnosticOptions& options) {
  const std::vector<int> links = hand.subtree_links(j);
  auto touching = [&](double q) {
    GraspPose probe = p;
    probe.joints[j] = q;
    return links_penetration(hand, obj, probe, links) > 0.0;
  };
  const double start = p.joints[j];
  if (touching(start)) return;
  const HandPoints posed = hand.forward_kinematics(p);
  const Eigen::Vector3d pivot =
      posed.link_poses[static_cast<std::size_t>(j + 1)].translation();
  double reach = 1e-3;
  for (Eigen::Index i = 0; i < posed.points.cols(); ++i) {
    if (std::find(links.begin(), links.end(), posed.point_link[i]) != links.end()) {
      reach = std::max(reach, (posed.points.col(i) - pivot).norm());
    }
  }
  const double upper = hand.upper()[j];
  double lo = start;
  double hi = start;
  bool contact = false;
  while (lo < upper) {
    hi = std::min(upper, lo + options.joint_step);
    if (touching(hi)) {
      contact = true;
      break;
    }
    lo = hi;
  }
  if (contact) {
    while ((hi - lo) * reach > options.tolerance) {
      const double mid = 0.5 * (lo + hi);
      (touching(mid) ? hi : lo) = mid;
    }
  }
  p.joints[j] = lo;
}

double pad_gap(const HandModel& hand, const ObjectModel& obj,
               const GraspPose& p, const std::string& tip) {
  const Eigen::Vector3d x = hand.forward_kinematics(p).fingertip(tip).position;
  return obj.query->closest(x).distance;
}

}  // namespace

GraspPose close_fingers(const HandModel& hand, const ObjectModel& obj,
                        const GraspPose& pose, const AgnosticOptions& options) {
  GraspPose p = hand.clamp_joints(pose);
  std::vector<char> in_chain(static_cast<std::size_t>(hand.dof()), 0);
  std::vector<std::pair<std::string, std::vector<int>>> chains;
  for (const FingertipSpec& tip : hand.spec().fingertips) {
    chains.emplace_back(tip.name, hand.chain_joints(tip.link));
    for (int j : chains.back().second) in_chain[static_cast<std::size_t>(j)] = 1;
  }
  for (int j = 0; j < hand.dof(); ++j) {
    if (!in_chain[static_cast<std::size_t>(j)]) close_joint(hand, obj, p, j, options);
  }
  for (const auto& [tip, chain] : chains) {
    if (chain.empty()) continue;
    const int root = chain.front();
    GraspPose best;
    double best_gap = std::numeric_limits<double>::infinity();
    GraspPose closed = p;
    close_joint(hand, obj, closed, root, options);
    for (int k = 0; k < options.backoff_steps; ++k) {
      GraspPose trial = closed;
      if (k > 0) {
        trial.joints[root] = std::max(hand.lower()[root],
                                      trial.joints[root] - k * options.backoff);
      }
      for (std::size_t c = 1; c < chain.size(); ++c) {
        close_joint(hand, obj, trial, chain[c], options);
      }
      const double gap = pad_gap(hand, obj, trial, tip);
      if (gap < best_gap) {
        best_gap = gap;
        best = trial;
      }
      if (best_gap <= options.pad_tolerance) break;
    }
    p = best;
  }
  return p;
}

std::vector<AgnosticCandidate> propose_agnostic(const HandModel& hand,
                                                const ObjectModel& obj, int n,
                                                const Rng& rng,
                                                const AgnosticOptions& options) {
  if (n < 0) throw InvalidRange("candidate count must be non-negative");
  std::vector<AgnosticCandidate> out(static_cast<std::size_t>(n));
  parallel_for(out.size(), options.workers, [&](std::size_t i) {
    Rng r = rng.split(i);
    Eigen::Vector3d u;
    do {
      u = Eigen::Vector3d(r.normal(), r.normal(), r.normal());
    } while (u.norm() < 1e-6);
    const double roll = r.uniform(0.0, 2.0 * std::numbers::pi);
    const double standoff = r.uniform(0.0, options.max_standoff);
    const GraspPose open = approach_pose(hand, obj, u, roll, standoff, options);
    out[i].pose = close_fingers(hand, obj, open, options);
    out[i].labels =
        label_pose(hand, obj, out[i].pose, std::nullopt, options.quality);
  });
  return out;
}

std::vector<GraspPose> generate_agnostic(const HandModel& hand,
                                         const ObjectModel& obj, int n,
                                         const Rng& rng,
                                         const AgnosticOptions& options) {
  std::vector<GraspPose> out;
  for (auto& c : propose_agnostic(hand, obj, n, rng, options)) {
    if (c.labels.stable) out.push_back(std::move(c.pose));
  }
  return out;
}

DiversityStats diversity(const HandModel& hand,
                         const std::vector<GraspPose>& poses) {
  DiversityStats s;
  s.count = static_cast<int>(poses.size());
  if (poses.empty() || hand.dof() == 0) return s;
  Eigen::MatrixXd q(hand.dof(), s.count);
  for (int i = 0; i < s.count; ++i) {
    q.col(i) = hand.normalized_joints(poses[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd mean = q.rowwise().mean();
  const Eigen::VectorXd var =
      (q.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(s.count);
  const Eigen::VectorXd range = q.rowwise().maxCoeff() - q.rowwise().minCoeff();
  s.mean_variance = var.mean();
  s.mean_range = range.mean();
  return s;
}

std::string BootstrapResult::diversity_csv() const {
  std::ostringstream os;
  os << "iteration,count,added,mean_variance,mean_range\n";
  os << 0 << ',' << seed_stats.count << ',' << seed_stats.count << ','
     << format_double(seed_stats.mean_variance) << ','
     << format_double(seed_stats.mean_range) << '\n';
  for (const BootstrapIteration& it : iterations) {
    os << it.iteration << ',' << it.count << ',' << it.added << ','
       << format_double(it.stats.mean_variance) << ','
       << format_double(it.stats.mean_range) << '\n';
  }
  return os.str();
}

BootstrapResult bootstrap(const HandModel& hand, const ObjectModel& obj,
                          TaskKind task, const std::vector<GraspPose>& seeds,
                          const BootstrapConfig& config,
                          const TemplateBank& bank) {
  if (config.iterations < 0 || config.batch < 0 || config.warmup_steps < 0) {
    throw InvalidRange("iterations, batch and warmup_steps must be non-negative");
  }
  const Rng master(config.seed);
  const StubTextEmbedder embedder;

  std::vector<GraspPose> valid;
  std::vector<DatasetRecord> records;
  std::set<std::string> seen;
  TrainingSet set;
  set.object_clouds.push_back(obj.points);
  std::map<std::string, int> text_index;
  std::vector<std::string> descriptions;
  auto add_valid = [&](const GraspPose& pose, DatasetRecord record) {
    const int t = text_index.try_emplace(record.description,
                                         static_cast<int>(set.text_embeddings.size()))
                      .first->second;
    if (t == static_cast<int>(set.text_embeddings.size())) {
      set.text_embeddings.push_back(embedder.embed(record.description));
      descriptions.push_back(record.description);
    }
    set.add(record.pose, 0, t);
    seen.insert(state_key(record.pose));
    valid.push_back(pose);
    records.push_back(std::move(record));
  };

  Rng seed_text = master.split(1);
  for (const GraspPose& seed : seeds) {
    const GraspPose pose = hand.clamp_joints(seed);
    DatasetRecord r = make_record(hand, obj, pose, task,
                                  generate(bank, task, seed_text).text, "seed", 0,
                                  config.seed, config.quality, config.thresholds);
    if (!r.rule_pass || seen.count(state_key(r.pose)) > 0) continue;
    add_valid(pose, std::move(r));
  }
  if (valid.empty()) {
    throw NoSeedGrasps("no seed grasp passes the " + to_string(task) + " rule");
  }

  ModelConfig model = config.model;
  model.state_dim = 9 + hand.dof();
  BootstrapResult result{DiffusionNet(model, mix64(config.seed ^ 0xd1ffULL)),
                         {}, diversity(hand, valid), {}};
  TrainOptions train = config.train;
  if (train.scale_floor.size() != model.state_dim) {
    train.scale_floor = grasp_scale_floor(hand.dof());
    train.scale_floor.tail(hand.dof()).setConstant(config.joint_scale_floor);
  }
  // Normalizer fitted once on the seeds and kept for every iteration.
  Eigen::MatrixXd seed_states(model.state_dim, static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    seed_states.col(static_cast<Eigen::Index>(i)) = set.states[i];
  }
  result.model.normalizer = StateNormalizer::fit(seed_states, train.scale_floor);
  train.fit_normalizer = false;
  Trainer trainer(result.model, config.sampler.schedule(), &hand, train);
  const NoiseSchedule sched = config.sampler.schedule();

  for (int it = 1; it <= config.iterations; ++it) {
    BootstrapIteration record;
    record.iteration = it;
    const int steps = train.steps + (it == 1 ? config.warmup_steps : 0);
    const auto trace = trainer.fit(
        set, mix64(config.seed ^ (0x1000ULL + static_cast<std::uint64_t>(it))), steps);
    record.final_loss = trace.empty() ? 0.0 : trace.back().total;

    // Sampling is conditioned on a description the model was trained on.
    Rng text_rng = master.split(2000 + static_cast<std::uint64_t>(it));
    const std::string description =
        descriptions[static_cast<std::size_t>(
            text_rng.uniform_int(0, static_cast<int>(descriptions.size()) - 1))];
    SampleOptions sopts;
    sopts.workers = config.workers;
    const auto samples =
        sample(hand, obj, description, result.model, sched, config.batch,
               master.split(3000 + static_cast<std::uint64_t>(it)), sopts);
    record.sampled = static_cast<int>(samples.size());

    std::vector<GraspPose> refined(samples.size());
    std::vector<DatasetRecord> labelled(samples.size());
    parallel_for(samples.size(), config.workers, [&](std::size_t i) {
      refined[i] = refine_pose(samples[i], hand, obj, config.refine).pose;
      labelled[i] = make_record(hand, obj, refined[i], task, description,
                                "bootstrap", it, config.seed, config.quality,
                                config.thresholds);
    });

    const int before = static_cast<int>(valid.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!labelled[i].validated) continue;
      ++record.passed;
      if (seen.count(state_key(labelled[i].pose)) > 0) continue;
      add_valid(refined[i], std::move(labelled[i]));
      ++record.added;
    }
    record.count = static_cast<int>(valid.size());
    record.stats = diversity(hand, valid);
    result.iterations.push_back(record);
    const double growth =
        static_cast<double>(record.count - before) / static_cast<double>(before);
    if (growth < config.min_growth) break;
  }
  result.records = std::move(records);
  return result;
}

EvalMetrics summarize(const std::vector<PoseLabels>& labels) {
  EvalMetrics m;
  if (labels.empty()) return m;
  for (const PoseLabels& l : labels) {
    m.q1 += l.q1;
    m.penetration_cm += l.penetration_cm;
    m.eta_f += l.collision_free ? 1.0 : 0.0;
    m.rule_pass += l.rule_pass ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(labels.size());
  m.q1 /= n;
  m.penetration_cm /= n;
  m.eta_f /= n;
  m.rule_pass /= n;
  return m;
}

EvalReport evaluate(const HandModel& hand, const DiffusionNet& net,
                    const std::vector<const ObjectModel*>& objects,
                    const std::vector<TaskKind>& tasks,
                    const NoiseSchedule& sched, const EvalOptions& options,
                    const TemplateBank& bank) {
  EvalReport report;
  report.label = net.trained ? "trained" : "baseline-random";
  const Rng master(options.seed);
  std::uint64_t stream = 0;
  for (const ObjectModel* obj : objects) {
    for (TaskKind task : tasks) {
      Rng text_rng = master.split(stream++);
      const std::string text = generate(bank, task, text_rng).text;
      SampleOptions sopts;
      sopts.workers = options.workers;
      sopts.allow_untrained = true;
      const auto poses = sample(hand, *obj, text, net, sched, options.n,
                                master.split(stream++), sopts);
      std::vector<PoseLabels> before(poses.size());
      std::vector<PoseLabels> after(poses.size());
      parallel_for(poses.size(), options.workers, [&](std::size_t i) {
        before[i] = label_pose(hand, *obj, poses[i], task, options.quality,
                               options.thresholds);
        const GraspPose refined =
            refine_pose(poses[i], hand, *obj, options.refine).pose;
        after[i] = label_pose(hand, *obj, refined, task, options.quality,
                              options.thresholds);
      });
      report.rows.push_back({obj->id, task, static_cast<int>(poses.size()),
                             summarize(before), summarize(after)});
    }
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "label,object,task,n,q1_unrefined,pen_cm_unrefined,eta_f_unrefined,"
        "rule_pass_unrefined,q1_refined,pen_cm_refined,eta_f_refined,"
        "rule_pass_refined\n";
  for (const EvalRow& r : rows) {
    os << label << ',' << r.object << ',' << to_string(r.task) << ',' << r.n;
    for (const EvalMetrics* m : {&r.unrefined, &r.refined}) {
      os << ',' << format_double(m->q1) << ',' << format_double(m->penetration_cm)
         << ',' << format_double(m->eta_f) << ',' << format_double(m->rule_pass);
    }
    os << '\n';
  }
  return os.str();
}

std::string EvalReport::summary() const {
  std::ostringstream os;
  os << "model: " << label << '\n';
  char line[256];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-14s %-14s n=%-4d q1 %.4f -> %.4f  pen %.3f -> %.3f cm  "
                  "eta_f %.3f -> %.3f  rule %.3f -> %.3f\n",
                  r.object.c_str(), to_string(r.task).c_str(), r.n,
                  r.unrefined.q1, r.refined.q1, r.unrefined.penetration_cm,
                  r.refined.penetration_cm, r.unrefined.eta_f, r.refined.eta_f,
                  r.unrefined.rule_pass, r.refined.rule_pass);
    os << line;
  }
  return os.str();
}

}  // namespace tograsp
