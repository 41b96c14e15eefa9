#include "tograsp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include "json.hpp"

#include "tograsp/errors.hpp"
#include "tograsp/parallel.hpp"

namespace tograsp {

using json = nlohmann::json;

namespace {

void fill_derived(NoiseSchedule& s, SigmaMode mode) {
  s.K = static_cast<int>(s.beta.size());
  s.alpha = Eigen::VectorXd::Ones(s.K) - s.beta;
  s.alpha_bar.resize(s.K);
  s.sigma.resize(s.K);
  double prod = 1.0;
  for (int i = 0; i < s.K; ++i) {
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  for (int i = 0; i < s.K; ++i) {
    switch (mode) {
      case SigmaMode::kBeta:
        s.sigma[i] = std::sqrt(s.beta[i]);
        break;
      case SigmaMode::kPosterior: {
        const double prev = i == 0 ? 1.0 : s.alpha_bar[i - 1];
        const double denom = 1.0 - s.alpha_bar[i];
        s.sigma[i] =
            denom > 0.0 ? std::sqrt(s.beta[i] * (1.0 - prev) / denom) : 0.0;
        break;
      }
      case SigmaMode::kZero:
        s.sigma[i] = 0.0;
        break;
    }
  }
}

void check_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
               const char* what) {
  if (a.size() != b.size()) {
    throw DimensionMismatch(std::string(what) + ": dimension " +
                            std::to_string(b.size()) + " != " +
                            std::to_string(a.size()));
  }
}

}  // namespace

void NoiseSchedule::check_step(int k) const {
  if (k < 1 || k > K) {
    throw InvalidRange("diffusion step " + std::to_string(k) +
                       " outside [1, " + std::to_string(K) + "]");
  }
}

NoiseSchedule make_schedule(int K, double beta_start, double beta_end,
                            SigmaMode sigma_mode) {
  if (K < 1) throw InvalidRange("schedule needs K >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidRange("schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta.resize(K);
  for (int i = 0; i < K; ++i) {
    const double t = K == 1 ? 0.0 : static_cast<double>(i) / (K - 1);
    s.beta[i] = beta_start + t * (beta_end - beta_start);
  }
  fill_derived(s, sigma_mode);
  return s;
}

NoiseSchedule schedule_from_betas(const Eigen::VectorXd& beta,
                                  SigmaMode sigma_mode) {
  if (beta.size() < 1) throw InvalidRange("schedule needs K >= 1");
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    if (!(beta[i] >= 0.0 && beta[i] < 1.0)) {
      throw InvalidRange("betas must lie in [0, 1)");
    }
  }
  NoiseSchedule s;
  s.beta = beta;
  fill_derived(s, sigma_mode);
  return s;
}

Eigen::VectorXd q_sample(const Eigen::VectorXd& pose, int k,
                         const Eigen::VectorXd& eps,
                         const NoiseSchedule& sched, QSampleMode mode) {
  check_dim(pose, eps, "q_sample noise");
  sched.check_step(k);
  if (mode == QSampleMode::kSingleStep) {
    const double b = sched.beta_at(k);
    return std::sqrt(1.0 - b) * pose + std::sqrt(b) * eps;
  }
  const double ab = sched.alpha_bar_at(k);
  return std::sqrt(ab) * pose + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd reverse_step(const Eigen::VectorXd& state, int k,
                             const Eigen::VectorXd& eps_pred,
                             const NoiseSchedule& sched,
                             const Eigen::VectorXd& z) {
  check_dim(state, eps_pred, "reverse_step noise prediction");
  sched.check_step(k);
  const double a = sched.alpha_at(k);
  const double one_minus_a = 1.0 - a;
  const double coef =
      one_minus_a == 0.0
          ? 0.0
          : one_minus_a / std::sqrt(1.0 - sched.alpha_bar_at(k));
  Eigen::VectorXd prev = (state - coef * eps_pred) / std::sqrt(a);
  if (k > 1 && sched.sigma_at(k) != 0.0) {
    check_dim(state, z, "reverse_step z");
    prev += sched.sigma_at(k) * z;
  }
  return prev;
}

Eigen::VectorXd reverse_step(const Eigen::VectorXd& state, int k,
                             const Eigen::VectorXd& eps_pred,
                             const NoiseSchedule& sched, Rng& rng) {
  Eigen::VectorXd z(state.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return reverse_step(state, k, eps_pred, sched, z);
}

Eigen::MatrixXd run_reverse_chains(const Denoiser& denoiser, int dim, int n,
                                   const NoiseSchedule& sched, const Rng& rng,
                                   int workers, int block) {
  if (n < 0 || dim < 1 || block < 1) {
    throw InvalidRange("invalid chain count, dimension or block size");
  }
  Eigen::MatrixXd out(dim, n);
  if (n == 0) return out;
  const int blocks = (n + block - 1) / block;
  parallel_for(static_cast<std::size_t>(blocks), workers, [&](std::size_t b) {
    const int begin = static_cast<int>(b) * block;
    const int width = std::min(block, n - begin);
    std::vector<Rng> rngs;
    rngs.reserve(width);
    Eigen::MatrixXd x(dim, width);
    for (int c = 0; c < width; ++c) {
      rngs.push_back(rng.split(static_cast<std::uint64_t>(begin + c)));
      for (int i = 0; i < dim; ++i) x(i, c) = rngs.back().normal();
    }
    for (int k = sched.K; k >= 1; --k) {
      const Eigen::MatrixXd eps = denoiser(x, k);
      if (eps.rows() != dim || eps.cols() != width) {
        throw DimensionMismatch("denoiser returned a wrongly shaped block");
      }
      for (int c = 0; c < width; ++c) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(dim);
        if (k > 1) {
          for (int i = 0; i < dim; ++i) z[i] = rngs[c].normal();
        }
        x.col(c) = reverse_step(x.col(c), k, eps.col(c), sched, z);
      }
    }
    out.middleCols(begin, width) = x;
  });
  return out;
}

namespace {

std::vector<Eigen::Matrix3Xd> hand_clouds(const HandModel& hand,
                                          const DiffusionNet& net,
                                          const Eigen::MatrixXd& raw) {
  std::vector<Eigen::Matrix3Xd> clouds;
  clouds.reserve(raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const GraspPose pose = unflatten(raw.col(c), hand.dof());
    clouds.push_back(net.subsample_hand(hand.forward_kinematics(pose).points));
  }
  return clouds;
}

}  // namespace

std::vector<GraspPose> sample(const HandModel& hand, const ObjectModel& obj,
                              const std::string& text, const DiffusionNet& net,
                              const NoiseSchedule& sched, int n, const Rng& rng,
                              const SampleOptions& options) {
  if (n < 0) throw InvalidRange("sample count must be non-negative");
  if (n == 0) return {};
  if (!net.trained && !options.allow_untrained) {
    throw Error("model is untrained; pass allow_untrained to sample anyway");
  }
  if (net.state_dim() != 9 + hand.dof()) {
    throw DimensionMismatch("model state dimension does not match the hand");
  }
  const int dim = net.state_dim();
  Eigen::VectorXd fixed_cond(0);
  if (net.config().conditioned) {
    const StubTextEmbedder stub;
    const TextEmbedder& embedder =
        options.text_embedder != nullptr ? *options.text_embedder : stub;
    fixed_cond.resize(kPointFeatureDim + kTextDim);
    fixed_cond << net.encode_object(obj.points),
        net.compress_text(embedder.embed(text));
  }

  const Denoiser denoiser = [&](const Eigen::MatrixXd& x, int k) {
    const Eigen::Index width = x.cols();
    Eigen::MatrixXd cond(net.predictor().cond_dim(), width);
    if (net.config().conditioned) {
      const auto clouds = hand_clouds(hand, net, net.normalizer.denormalize(x));
      cond.topRows(kPointFeatureDim) =
          net.encoder().encode_batch(clouds, 1.0, nullptr);
      cond.bottomRows(kPointFeatureDim + kTextDim) =
          fixed_cond.replicate(1, width);
    }
    const std::vector<int> steps(static_cast<std::size_t>(width), k);
    return net.predict_batch(x, cond, steps);
  };

  const Eigen::MatrixXd states = net.normalizer.denormalize(
      run_reverse_chains(denoiser, dim, n, sched, rng, options.workers,
                         options.block));
  std::vector<GraspPose> poses;
  poses.reserve(n);
  for (int c = 0; c < n; ++c) {
    poses.push_back(hand.clamp_joints(unflatten(states.col(c), hand.dof())));
  }
  return poses;
}

double loss_diffusion(const Eigen::MatrixXd& eps,
                      const Eigen::MatrixXd& eps_pred) {
  if (eps.rows() != eps_pred.rows() || eps.cols() != eps_pred.cols()) {
    throw DimensionMismatch("noise and prediction shapes differ");
  }
  if (eps.cols() == 0) throw EmptyInput("empty batch");
  return (eps - eps_pred).colwise().squaredNorm().mean();
}

namespace {

double point_distance_mean(const Eigen::Matrix3Xd& a,
                           const Eigen::Matrix3Xd& b) {
  return (a - b).colwise().norm().mean();
}

}  // namespace

double loss_reconstruction(const HandModel& hand, const Eigen::MatrixXd& clean,
                           const Eigen::MatrixXd& eps,
                           const Eigen::MatrixXd& eps_pred,
                           std::span<const int> steps,
                           const NoiseSchedule& sched) {
  if (clean.cols() == 0) throw EmptyInput("empty batch");
  if (clean.rows() != 9 + hand.dof() || eps.rows() != clean.rows() ||
      eps_pred.rows() != clean.rows() || eps.cols() != clean.cols() ||
      eps_pred.cols() != clean.cols() ||
      static_cast<Eigen::Index>(steps.size()) != clean.cols()) {
    throw DimensionMismatch("reconstruction loss inputs have mismatched shapes");
  }
  double sum = 0.0;
  for (Eigen::Index c = 0; c < clean.cols(); ++c) {
    const Eigen::VectorXd g = q_sample(clean.col(c), steps[c], eps.col(c),
                                       sched, QSampleMode::kSingleStep);
    const Eigen::VectorXd g_theta = q_sample(
        clean.col(c), steps[c], eps_pred.col(c), sched, QSampleMode::kSingleStep);
    const auto a = hand.forward_kinematics(unflatten(g, hand.dof()));
    const auto b = hand.forward_kinematics(unflatten(g_theta, hand.dof()));
    sum += point_distance_mean(a.points, b.points);
  }
  return sum / static_cast<double>(clean.cols());
}

double loss_total(double loss_d, double loss_r, double lambda_r) {
  if (!(lambda_r >= 0.0)) throw InvalidRange("lambda_R must be non-negative");
  return loss_d + lambda_r * loss_r;
}

std::string to_string(SigmaMode mode) {
  switch (mode) {
    case SigmaMode::kBeta:
      return "beta";
    case SigmaMode::kPosterior:
      return "posterior";
    case SigmaMode::kZero:
      return "zero";
  }
  return "beta";
}

std::string to_string(QSampleMode mode) {
  return mode == QSampleMode::kSingleStep ? "single-step" : "cumulative";
}

SigmaMode parse_sigma_mode(const std::string& s) {
  if (s == "beta") return SigmaMode::kBeta;
  if (s == "posterior") return SigmaMode::kPosterior;
  if (s == "zero") return SigmaMode::kZero;
  throw ParseError("unknown sigma_mode '" + s + "'");
}

QSampleMode parse_q_sample_mode(const std::string& s) {
  if (s == "single-step") return QSampleMode::kSingleStep;
  if (s == "cumulative") return QSampleMode::kCumulative;
  throw ParseError("unknown q_sample_mode '" + s + "'");
}

SamplerConfig SamplerConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open sampler config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  SamplerConfig c;
  try {
    c.K = j.value("K", c.K);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.sigma_mode = parse_sigma_mode(j.value("sigma_mode", to_string(c.sigma_mode)));
    c.q_sample_mode =
        parse_q_sample_mode(j.value("q_sample_mode", to_string(c.q_sample_mode)));
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  c.schedule();
  return c;
}

void SamplerConfig::save(const std::filesystem::path& path) const {
  json j;
  j["K"] = K;
  j["beta_start"] = beta_start;
  j["beta_end"] = beta_end;
  j["sigma_mode"] = to_string(sigma_mode);
  j["q_sample_mode"] = to_string(q_sample_mode);
  j["seed"] = seed;
  std::ofstream os(path);
  if (!os) throw Error("cannot write sampler config " + path.string());
  os << j.dump(2) << '\n';
}

void TrainingSet::add(const Eigen::VectorXd& state, int object, int text) {
  states.push_back(state);
  object_of.push_back(object);
  text_of.push_back(text);
}

Eigen::VectorXd grasp_scale_floor(int joint_count) {
  Eigen::VectorXd floor(9 + joint_count);
  floor.head<6>().setConstant(0.05);
  floor.segment<3>(6).setConstant(0.005);
  floor.tail(joint_count).setConstant(0.05);
  return floor;
}

Trainer::Trainer(DiffusionNet& net, NoiseSchedule sched, const HandModel* hand,
                 TrainOptions options)
    : net_(&net),
      sched_(std::move(sched)),
      hand_(hand),
      options_(std::move(options)),
      optimizer_(options_.learning_rate) {
  if (options_.batch < 1 || options_.steps < 0) {
    throw InvalidRange("batch must be positive and steps non-negative");
  }
  if (options_.lambda_r < 0.0) throw InvalidRange("lambda_R must be >= 0");
  if (net.config().conditioned && hand == nullptr) {
    throw Error("conditioned models need a hand model");
  }
  if (hand != nullptr && net.state_dim() != 9 + hand->dof()) {
    throw DimensionMismatch("model state dimension does not match the hand");
  }
}

TrainBatch Trainer::draw_batch(const TrainingSet& set, Rng& rng) const {
  if (set.size() == 0) throw EmptyInput("training set is empty");
  const int dim = net_->state_dim();
  const int b = options_.batch;
  Eigen::MatrixXd raw(dim, b);
  TrainBatch batch;
  batch.noise.resize(dim, b);
  for (int c = 0; c < b; ++c) {
    const int idx = rng.uniform_int(0, static_cast<int>(set.size()) - 1);
    if (set.states[idx].size() != dim) {
      throw DimensionMismatch("training state has the wrong dimension");
    }
    raw.col(c) = set.states[idx];
    batch.objects.push_back(set.object_of[idx]);
    batch.texts.push_back(set.text_of[idx]);
    batch.steps.push_back(rng.uniform_int(1, sched_.K));
    for (int i = 0; i < dim; ++i) batch.noise(i, c) = rng.normal();
  }
  batch.clean = net_->normalizer.normalize(raw);
  return batch;
}

LossBreakdown Trainer::forward_backward(const TrainingSet& set,
                                        const TrainBatch& batch,
                                        bool backward) {
  DiffusionNet& net = *net_;
  const int dim = net.state_dim();
  const Eigen::Index b = batch.clean.cols();
  if (b == 0) throw EmptyInput("empty batch");

  Eigen::MatrixXd noisy(dim, b);
  Eigen::MatrixXd time(kTimeDim, b);
  for (Eigen::Index c = 0; c < b; ++c) {
    noisy.col(c) = q_sample(batch.clean.col(c), batch.steps[c],
                            batch.noise.col(c), sched_, options_.q_sample_mode);
    time.col(c) = timestep_embedding(batch.steps[c]);
  }

  const bool conditioned = net.config().conditioned;
  Eigen::MatrixXd cond(net.predictor().cond_dim(), b);
  PointEncoder::Tape hand_tape;
  PointEncoder::Tape object_tape;
  Mlp::Tape text_tape;
  std::vector<int> unique_objects;
  std::vector<int> unique_texts;
  std::map<int, int> object_slot;
  std::map<int, int> text_slot;
  if (conditioned) {
    for (int o : batch.objects) {
      if (object_slot.emplace(o, static_cast<int>(unique_objects.size())).second) {
        unique_objects.push_back(o);
      }
    }
    for (int t : batch.texts) {
      if (text_slot.emplace(t, static_cast<int>(unique_texts.size())).second) {
        unique_texts.push_back(t);
      }
    }
    std::vector<Eigen::Matrix3Xd> object_clouds;
    for (int o : unique_objects) {
      object_clouds.push_back(net.subsample_object(set.object_clouds.at(o)));
    }
    Eigen::MatrixXd text_raw(kTextRawDim,
                             static_cast<Eigen::Index>(unique_texts.size()));
    for (std::size_t i = 0; i < unique_texts.size(); ++i) {
      text_raw.col(static_cast<Eigen::Index>(i)) =
          set.text_embeddings.at(unique_texts[i]);
    }
    const auto clouds = hand_clouds(*hand_, net, net.normalizer.denormalize(noisy));
    const Eigen::MatrixXd emb_h =
        net.encoder().encode_batch(clouds, 1.0, backward ? &hand_tape : nullptr);
    const Eigen::MatrixXd emb_o = net.encoder().encode_batch(
        object_clouds, 0.0, backward ? &object_tape : nullptr);
    const Eigen::MatrixXd emb_t = net.text_compressor().forward(
        text_raw, backward ? &text_tape : nullptr);
    for (Eigen::Index c = 0; c < b; ++c) {
      cond.block(0, c, kPointFeatureDim, 1) = emb_h.col(c);
      cond.block(kPointFeatureDim, c, kPointFeatureDim, 1) =
          emb_o.col(object_slot[batch.objects[c]]);
      cond.block(2 * kPointFeatureDim, c, kTextDim, 1) =
          emb_t.col(text_slot[batch.texts[c]]);
    }
  }

  NoisePredictor::Tape tape;
  const Eigen::MatrixXd pred =
      net.predictor().forward(noisy, cond, time, backward ? &tape : nullptr);

  LossBreakdown loss;
  loss.diffusion = loss_diffusion(batch.noise, pred);
  Eigen::MatrixXd grad = 2.0 * (pred - batch.noise) / static_cast<double>(b);

  if (hand_ != nullptr && options_.lambda_r > 0.0) {
    const int joints = hand_->dof();
    const StateNormalizer& norm = net.normalizer;
    constexpr double kFd = 1e-6;
    double sum = 0.0;
    for (Eigen::Index c = 0; c < b; ++c) {
      const double sb = std::sqrt(sched_.beta_at(batch.steps[c]));
      const double sa = std::sqrt(1.0 - sched_.beta_at(batch.steps[c]));
      const Eigen::VectorXd g_raw = norm.denormalize(
          sa * batch.clean.col(c) + sb * batch.noise.col(c));
      const Eigen::VectorXd gt_raw =
          norm.denormalize(sa * batch.clean.col(c) + sb * pred.col(c));
      const Eigen::Matrix3Xd target =
          hand_->forward_kinematics(unflatten(g_raw, joints)).points;
      auto dist = [&](const Eigen::VectorXd& s) {
        return point_distance_mean(
            target, hand_->forward_kinematics(unflatten(s, joints)).points);
      };
      sum += dist(gt_raw);
      if (backward) {
        Eigen::VectorXd dl(dim);
        Eigen::VectorXd probe = gt_raw;
        for (int i = 0; i < dim; ++i) {
          probe[i] = gt_raw[i] + kFd;
          const double up = dist(probe);
          probe[i] = gt_raw[i] - kFd;
          const double down = dist(probe);
          probe[i] = gt_raw[i];
          dl[i] = (up - down) / (2.0 * kFd);
        }
        grad.col(c) += options_.lambda_r / static_cast<double>(b) * sb *
                       norm.scale.cwiseProduct(dl);
      }
    }
    loss.reconstruction = sum / static_cast<double>(b);
  }
  loss.total = loss_total(loss.diffusion, loss.reconstruction, options_.lambda_r);

  if (backward) {
    const Eigen::MatrixXd gcond = net.predictor().backward(grad, tape);
    if (conditioned) {
      net.encoder().backward(gcond.topRows(kPointFeatureDim), hand_tape);
      Eigen::MatrixXd g_obj = Eigen::MatrixXd::Zero(
          kPointFeatureDim, static_cast<Eigen::Index>(unique_objects.size()));
      Eigen::MatrixXd g_txt = Eigen::MatrixXd::Zero(
          kTextDim, static_cast<Eigen::Index>(unique_texts.size()));
      for (Eigen::Index c = 0; c < b; ++c) {
        g_obj.col(object_slot[batch.objects[c]]) +=
            gcond.block(kPointFeatureDim, c, kPointFeatureDim, 1);
        g_txt.col(text_slot[batch.texts[c]]) +=
            gcond.block(2 * kPointFeatureDim, c, kTextDim, 1);
      }
      net.encoder().backward(g_obj, object_tape);
      net.text_compressor().backward(g_txt, text_tape);
    }
  }
  return loss;
}

LossBreakdown Trainer::step(const TrainingSet& set, const TrainBatch& batch) {
  net_->zero_grad();
  const LossBreakdown loss = forward_backward(set, batch, true);
  const auto params = net_->parameters();
  if (!std::isfinite(loss.total) || !gradients_finite(params)) {
    net_->zero_grad();
    throw NonFiniteLoss("non-finite loss or gradient; step skipped");
  }
  optimizer_.step(params);
  return loss;
}

LossBreakdown Trainer::evaluate(const TrainingSet& set,
                                const TrainBatch& batch) {
  return forward_backward(set, batch, false);
}

std::vector<LossBreakdown> Trainer::fit(const TrainingSet& set,
                                        std::optional<std::uint64_t> seed,
                                        std::optional<int> steps) {
  const int count = steps.value_or(options_.steps);
  if (count < 0) throw InvalidRange("training steps must be non-negative");
  if (set.size() == 0) throw EmptyInput("training set is empty");
  if (options_.fit_normalizer) {
    const int dim = net_->state_dim();
    Eigen::MatrixXd all(dim, static_cast<Eigen::Index>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.states[i].size() != dim) {
        throw DimensionMismatch("training state has the wrong dimension");
      }
      all.col(static_cast<Eigen::Index>(i)) = set.states[i];
    }
    const Eigen::VectorXd floor = options_.scale_floor.size() == dim
                                      ? options_.scale_floor
                                      : Eigen::VectorXd::Constant(dim, 1e-6);
    net_->normalizer = StateNormalizer::fit(all, floor);
  }
  Rng rng(seed.value_or(options_.seed));
  std::vector<LossBreakdown> trace;
  trace.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    trace.push_back(step(set, draw_batch(set, rng)));
  }
  net_->trained = true;
  return trace;
}

}  // namespace tograsp
