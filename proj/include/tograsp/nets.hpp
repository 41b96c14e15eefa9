#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tograsp/rng.hpp"

namespace tograsp {

inline constexpr int kPointFeatureDim = 128;
inline constexpr int kTextRawDim = 1536;
inline constexpr int kTextDim = 256;
inline constexpr int kTimeDim = 64;
inline constexpr int kConditionDim = 2 * kPointFeatureDim + kTextDim;

enum class Activation { kIdentity, kRelu, kSilu };

// Non-owning view of one parameter tensor and its gradient buffer.
// Storage is column-major with the given shape.
struct ParamSlot {
  double* value;
  double* grad;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Index size() const { return rows * cols; }
};

// Fully connected layer on column batches: y = act(W x + b).
struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::kIdentity;
  Eigen::MatrixXd grad_weight;
  Eigen::VectorXd grad_bias;

  struct Tape {
    Eigen::MatrixXd input;
    Eigen::MatrixXd pre;
  };

  Dense() = default;
  Dense(int in, int out, Activation act);

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  // He-uniform for rectifiers, Glorot-uniform otherwise; zero bias.
  void init(Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape) const;
  // Accumulates parameter gradients and returns dL/dx.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, const Tape& tape);
  void collect(std::vector<ParamSlot>& out);
};

class Mlp {
 public:
  Mlp() = default;
  // dims = {in, h1, ..., out}; one activation per layer.
  Mlp(std::vector<int> dims, std::vector<Activation> activations);

  using Tape = std::vector<Dense::Tape>;

  void init(Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape) const;
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, const Tape& tape);
  void collect(std::vector<ParamSlot>& out);

  int in_dim() const { return layers_.front().in_dim(); }
  int out_dim() const { return layers_.back().out_dim(); }
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
};

// Shared per-point MLP (4 -> 64 -> 128) followed by a coordinate-wise max
// over points. The 4th input channel is the body flag: 1 for hand clouds, 0
// for object clouds.
class PointEncoder {
 public:
  PointEncoder();

  struct Tape {
    Mlp::Tape mlp;
    std::vector<Eigen::Index> offsets;  // first column of each cloud
    Eigen::MatrixXi argmax;             // 128 x B, absolute column
    Eigen::Index total_columns = 0;
  };

  void init(Rng& rng) { mlp_.init(rng); }
  // Throws EmptyCloud for an empty cloud.
  Eigen::VectorXd encode(const Eigen::Matrix3Xd& cloud, double flag) const;
  Eigen::MatrixXd encode_batch(std::span<const Eigen::Matrix3Xd> clouds,
                               double flag, Tape* tape) const;
  void backward(const Eigen::MatrixXd& grad_out, const Tape& tape);
  void collect(std::vector<ParamSlot>& out) { mlp_.collect(out); }
  Mlp& mlp() { return mlp_; }

 private:
  Mlp mlp_;
};

// Provider of raw 1536-d sentence embeddings.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

// Deterministic offline embedder: lowercases and splits on whitespace, maps
// every token to a pseudo-random Gaussian vector seeded by a hash of the
// token, averages and normalizes to unit length. Throws EmptyText for text
// without tokens.
class StubTextEmbedder : public TextEmbedder {
 public:
  explicit StubTextEmbedder(std::uint64_t seed = 0x5eed7e47ULL) : seed_(seed) {}
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  std::uint64_t seed_;
};

// 64-d sinusoidal features of the diffusion step.
Eigen::VectorXd timestep_embedding(int k);

struct ModelConfig {
  int state_dim = 15;
  bool conditioned = true;
  int hidden = 512;
  int units = 3;
  // Clouds are stride-subsampled to at most this many points before encoding;
  // 0 keeps every point.
  int hand_points = 0;
  int object_points = 0;
};

// Noise-prediction network: a stack of residual denoising units. Unit u maps
// [x_u; cond; emb_k] through dense(H, silu) -> dense(H, silu) -> dense(d) and
// adds the result to x_u; x_0 is the state and the output is a final linear
// layer on x_units.
class NoisePredictor {
 public:
  NoisePredictor() = default;
  NoisePredictor(int state_dim, int cond_dim, int hidden, int units);

  struct Tape {
    std::vector<Mlp::Tape> units;
    std::vector<Eigen::MatrixXd> residuals;  // x_0 .. x_units
    Dense::Tape head;
  };

  void init(Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& cond,
                          const Eigen::MatrixXd& time, Tape* tape) const;
  // Returns dL/dcond (cond_dim x B); parameter gradients accumulate.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& grad_out, const Tape& tape);
  void collect(std::vector<ParamSlot>& out);

  int state_dim() const { return state_dim_; }
  int cond_dim() const { return cond_dim_; }
  std::vector<Mlp>& units() { return units_; }
  Dense& head() { return head_; }

 private:
  int state_dim_ = 0;
  int cond_dim_ = 0;
  std::vector<Mlp> units_;
  Dense head_;
};

struct ConditionEmbeddings {
  Eigen::VectorXd hand;    // 128
  Eigen::VectorXd object;  // 128
  Eigen::VectorXd text;    // 256
  Eigen::VectorXd step;    // 64
};

// Per-dimension affine map between pose states and the unit-scale space the
// network works in: normalized = (state - mean) / scale.
struct StateNormalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static StateNormalizer identity(int dim);
  // Mean and standard deviation of the columns, with per-dimension floors on
  // the scale.
  static StateNormalizer fit(const Eigen::MatrixXd& states,
                             const Eigen::VectorXd& min_scale);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& states) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& normalized) const;
};

// The conditional denoiser and its condition encoders.
class DiffusionNet {
 public:
  explicit DiffusionNet(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }
  int state_dim() const { return config_.state_dim; }

  PointEncoder& encoder() { return encoder_; }
  Mlp& text_compressor() { return text_; }
  NoisePredictor& predictor() { return predictor_; }
  const PointEncoder& encoder() const { return encoder_; }
  const Mlp& text_compressor() const { return text_; }
  const NoisePredictor& predictor() const { return predictor_; }

  StateNormalizer normalizer;
  bool trained = false;

  Eigen::Matrix3Xd subsample_hand(const Eigen::Matrix3Xd& cloud) const;
  Eigen::Matrix3Xd subsample_object(const Eigen::Matrix3Xd& cloud) const;

  Eigen::VectorXd encode_hand(const Eigen::Matrix3Xd& cloud) const;
  Eigen::VectorXd encode_object(const Eigen::Matrix3Xd& cloud) const;
  Eigen::VectorXd compress_text(const Eigen::VectorXd& raw) const;

  // eps_theta for one (normalized) state.
  Eigen::VectorXd predict_noise(const Eigen::VectorXd& state,
                                const ConditionEmbeddings& embs) const;
  // Batched prediction; `cond` is kConditionDim x B (or 0 x B when
  // unconditioned) holding [emb_h; emb_o; emb_t] per column.
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& states,
                                const Eigen::MatrixXd& cond,
                                std::span<const int> steps) const;

  std::vector<ParamSlot> parameters();
  void zero_grad();
  Eigen::Index parameter_count();

  void save(const std::filesystem::path& path) const;
  static DiffusionNet load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  PointEncoder encoder_;
  Mlp text_;
  NoisePredictor predictor_;
};

// Momentum-free adaptive optimizer (RMSProp without momentum):
//   s <- rho s + (1 - rho) g^2
//   theta <- theta - lr g / (sqrt(s) + eps)
class RmsProp {
 public:
  explicit RmsProp(double lr = 1e-3, double rho = 0.99, double eps = 1e-8)
      : lr_(lr), rho_(rho), eps_(eps) {}

  void step(std::span<const ParamSlot> params);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_;
  double rho_;
  double eps_;
  std::vector<Eigen::VectorXd> state_;
};

bool gradients_finite(std::span<const ParamSlot> params);

}  // namespace tograsp
