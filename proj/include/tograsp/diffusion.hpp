#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tograsp/handmodel.hpp"
#include "tograsp/nets.hpp"
#include "tograsp/object_model.hpp"
#include "tograsp/posemath.hpp"
#include "tograsp/rng.hpp"

namespace tograsp {

inline constexpr double kDefaultLambdaR = 1.0;

// kBeta: sigma_k = sqrt(beta_k). kPosterior: the DDPM posterior standard
// deviation sqrt(beta_k (1 - abar_{k-1}) / (1 - abar_k)). kZero: sigma = 0.
enum class SigmaMode { kBeta, kPosterior, kZero };

// kSingleStep: sqrt(1 - beta_k) G + sqrt(beta_k) eps.
// kCumulative: sqrt(abar_k) G + sqrt(1 - abar_k) eps.
enum class QSampleMode { kSingleStep, kCumulative };

// Arrays are indexed by k - 1 for k = 1..K.
struct NoiseSchedule {
  int K = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  Eigen::VectorXd alpha_bar;
  Eigen::VectorXd sigma;

  double beta_at(int k) const { return beta[k - 1]; }
  double alpha_at(int k) const { return alpha[k - 1]; }
  double alpha_bar_at(int k) const { return alpha_bar[k - 1]; }
  double sigma_at(int k) const { return sigma[k - 1]; }
  void check_step(int k) const;
};

// Linear beta interpolation. Throws InvalidRange unless K >= 1 and
// 0 < beta_start <= beta_end < 1.
NoiseSchedule make_schedule(int K, double beta_start, double beta_end,
                            SigmaMode sigma_mode = SigmaMode::kBeta);
// Arbitrary betas in [0, 1); used to probe limiting cases.
NoiseSchedule schedule_from_betas(const Eigen::VectorXd& beta,
                                  SigmaMode sigma_mode = SigmaMode::kBeta);

Eigen::VectorXd q_sample(const Eigen::VectorXd& pose, int k,
                         const Eigen::VectorXd& eps,
                         const NoiseSchedule& sched,
                         QSampleMode mode = QSampleMode::kSingleStep);

// G_{k-1} = (G_k - (1 - alpha_k) / sqrt(1 - abar_k) eps_pred) / sqrt(alpha_k)
//           + sigma_k z, with z ignored at k = 1.
Eigen::VectorXd reverse_step(const Eigen::VectorXd& state, int k,
                             const Eigen::VectorXd& eps_pred,
                             const NoiseSchedule& sched,
                             const Eigen::VectorXd& z);
Eigen::VectorXd reverse_step(const Eigen::VectorXd& state, int k,
                             const Eigen::VectorXd& eps_pred,
                             const NoiseSchedule& sched, Rng& rng);

// Predicts eps for a block of states (dim x B) at step k.
using Denoiser =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& states, int k)>;

// Runs n independent reverse chains from N(0, I). Chain i draws its initial
// state and every z from rng.split(i); chains are processed in fixed blocks
// so results do not depend on the worker count.
Eigen::MatrixXd run_reverse_chains(const Denoiser& denoiser, int dim, int n,
                                   const NoiseSchedule& sched, const Rng& rng,
                                   int workers = 1, int block = 64);

struct SampleOptions {
  int workers = 1;
  int block = 64;
  // Sampling from a model that was never trained must be requested.
  bool allow_untrained = false;
  const TextEmbedder* text_embedder = nullptr;  // stub when null
};

// Conditional sampling. The object and text embeddings are computed once; the
// hand embedding is recomputed every step from FK of the current state with
// clamped joints. Returned poses have clamped joints.
std::vector<GraspPose> sample(const HandModel& hand, const ObjectModel& obj,
                              const std::string& text, const DiffusionNet& net,
                              const NoiseSchedule& sched, int n, const Rng& rng,
                              const SampleOptions& options = {});

// Mean over columns of ||eps - eps_pred||^2.
double loss_diffusion(const Eigen::MatrixXd& eps,
                      const Eigen::MatrixXd& eps_pred);

// Mean over columns of the mean per-point distance between FK(G') and
// FK(G'_theta), where G' = sqrt(1 - beta_k) G + sqrt(beta_k) eps and G'_theta
// uses eps_pred. States are raw pose vectors (dim 9 + J).
double loss_reconstruction(const HandModel& hand, const Eigen::MatrixXd& clean,
                           const Eigen::MatrixXd& eps,
                           const Eigen::MatrixXd& eps_pred,
                           std::span<const int> steps,
                           const NoiseSchedule& sched);

// L_D + lambda_r L_R; throws InvalidRange for lambda_r < 0.
double loss_total(double loss_d, double loss_r,
                  double lambda_r = kDefaultLambdaR);

struct SamplerConfig {
  int K = 100;
  double beta_start = 1e-4;
  double beta_end = 0.2;
  SigmaMode sigma_mode = SigmaMode::kBeta;
  QSampleMode q_sample_mode = QSampleMode::kCumulative;
  std::uint64_t seed = 0;

  NoiseSchedule schedule() const {
    return make_schedule(K, beta_start, beta_end, sigma_mode);
  }
  static SamplerConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

std::string to_string(SigmaMode mode);
std::string to_string(QSampleMode mode);
SigmaMode parse_sigma_mode(const std::string& s);
QSampleMode parse_q_sample_mode(const std::string& s);

// ---------------------------------------------------------------- training

// Training data: clean raw states plus the conditioning context they refer
// to. Unconditioned models ignore objects/texts.
struct TrainingSet {
  std::vector<Eigen::Matrix3Xd> object_clouds;
  std::vector<Eigen::VectorXd> text_embeddings;  // raw 1536-d
  std::vector<Eigen::VectorXd> states;
  std::vector<int> object_of;  // per state
  std::vector<int> text_of;    // per state

  void add(const Eigen::VectorXd& state, int object = 0, int text = 0);
  std::size_t size() const { return states.size(); }
};

struct TrainBatch {
  Eigen::MatrixXd clean;  // normalized states, dim x B
  Eigen::MatrixXd noise;  // dim x B
  std::vector<int> steps;
  std::vector<int> objects;
  std::vector<int> texts;
};

struct LossBreakdown {
  double diffusion = 0.0;
  double reconstruction = 0.0;
  double total = 0.0;
};

struct TrainOptions {
  int steps = 1000;
  int batch = 32;
  double learning_rate = 1e-3;
  double lambda_r = kDefaultLambdaR;
  QSampleMode q_sample_mode = QSampleMode::kCumulative;
  std::uint64_t seed = 0;
  // Refit the state normalizer on the training set before the first step.
  bool fit_normalizer = true;
  // Lower bounds on the normalizer scale; empty means 1e-6 everywhere.
  Eigen::VectorXd scale_floor;
};

// Normalizer floors for grasp states: 0.05 on the 6D rotation, 5 mm on the
// translation and 0.05 rad on joints.
Eigen::VectorXd grasp_scale_floor(int joint_count);

class Trainer {
 public:
  // `hand` may be null for unconditioned models; L_R is then skipped.
  Trainer(DiffusionNet& net, NoiseSchedule sched, const HandModel* hand,
          TrainOptions options);

  TrainBatch draw_batch(const TrainingSet& set, Rng& rng) const;
  // One optimizer step. Throws NonFiniteLoss (parameters unchanged) when the
  // loss or a gradient is not finite.
  LossBreakdown step(const TrainingSet& set, const TrainBatch& batch);
  // Loss of a batch without updating anything.
  LossBreakdown evaluate(const TrainingSet& set, const TrainBatch& batch);
  // Full run: optional normalizer fit, `steps` optimizer steps, marks the
  // model trained. Returns the per-step loss trace. Batches are drawn from
  // `seed`, or from the configured seed when absent. `steps` overrides the
  // configured step count.
  std::vector<LossBreakdown> fit(const TrainingSet& set,
                                 std::optional<std::uint64_t> seed = {},
                                 std::optional<int> steps = {});

  RmsProp& optimizer() { return optimizer_; }

 private:
  LossBreakdown forward_backward(const TrainingSet& set,
                                 const TrainBatch& batch, bool backward);

  DiffusionNet* net_;
  NoiseSchedule sched_;
  const HandModel* hand_;
  TrainOptions options_;
  RmsProp optimizer_;
};

}  // namespace tograsp
