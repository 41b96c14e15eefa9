#include "tograsp/nets.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tograsp/errors.hpp"

namespace tograsp {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return pre;
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kSilu:
      return pre.unaryExpr([](double x) { return x * sigmoid(x); });
  }
  return pre;
}

Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre,
                                const Eigen::MatrixXd& grad_out,
                                Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return grad_out;
    case Activation::kRelu:
      return grad_out.cwiseProduct(
          pre.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
    case Activation::kSilu:
      return grad_out.cwiseProduct(pre.unaryExpr([](double x) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      }));
  }
  return grad_out;
}

}  // namespace

Dense::Dense(int in, int out, Activation act)
    : weight(Eigen::MatrixXd::Zero(out, in)),
      bias(Eigen::VectorXd::Zero(out)),
      activation(act),
      grad_weight(Eigen::MatrixXd::Zero(out, in)),
      grad_bias(Eigen::VectorXd::Zero(out)) {}

void Dense::init(Rng& rng) {
  const double in = static_cast<double>(in_dim());
  const double out = static_cast<double>(out_dim());
  const double limit = activation == Activation::kIdentity
                           ? std::sqrt(6.0 / (in + out))
                           : std::sqrt(6.0 / in);
  for (Eigen::Index c = 0; c < weight.cols(); ++c) {
    for (Eigen::Index r = 0; r < weight.rows(); ++r) {
      weight(r, c) = rng.uniform(-limit, limit);
    }
  }
  bias.setZero();
}

Eigen::MatrixXd Dense::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (x.rows() != weight.cols()) {
    throw DimensionMismatch("dense layer expects " +
                            std::to_string(weight.cols()) + " inputs, got " +
                            std::to_string(x.rows()));
  }
  Eigen::MatrixXd pre = weight * x;
  pre.colwise() += bias;
  Eigen::MatrixXd out = activate(pre, activation);
  if (tape != nullptr) {
    tape->input = x;
    tape->pre = std::move(pre);
  }
  return out;
}

Eigen::MatrixXd Dense::backward(const Eigen::MatrixXd& grad_out,
                                const Tape& tape) {
  const Eigen::MatrixXd g = activation_grad(tape.pre, grad_out, activation);
  grad_weight.noalias() += g * tape.input.transpose();
  grad_bias += g.rowwise().sum();
  return weight.transpose() * g;
}

void Dense::collect(std::vector<ParamSlot>& out) {
  out.push_back({weight.data(), grad_weight.data(), weight.rows(),
                 weight.cols()});
  out.push_back({bias.data(), grad_bias.data(), bias.rows(), 1});
}

Mlp::Mlp(std::vector<int> dims, std::vector<Activation> activations) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw DimensionMismatch("mlp needs one activation per layer");
  }
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers_.emplace_back(dims[i], dims[i + 1], activations[i]);
  }
}

void Mlp::init(Rng& rng) {
  for (Dense& layer : layers_) layer.init(rng);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (tape != nullptr) tape->assign(layers_.size(), {});
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h, tape != nullptr ? &(*tape)[i] : nullptr);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Eigen::MatrixXd& grad_out,
                              const Tape& tape) {
  Eigen::MatrixXd g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i].backward(g, tape[i]);
  }
  return g;
}

void Mlp::collect(std::vector<ParamSlot>& out) {
  for (Dense& layer : layers_) layer.collect(out);
}

PointEncoder::PointEncoder()
    : mlp_({4, 64, kPointFeatureDim}, {Activation::kRelu, Activation::kRelu}) {}

Eigen::VectorXd PointEncoder::encode(const Eigen::Matrix3Xd& cloud,
                                     double flag) const {
  const std::array<Eigen::Matrix3Xd, 1> clouds{cloud};
  return encode_batch(clouds, flag, nullptr).col(0);
}

Eigen::MatrixXd PointEncoder::encode_batch(
    std::span<const Eigen::Matrix3Xd> clouds, double flag, Tape* tape) const {
  Eigen::Index total = 0;
  std::vector<Eigen::Index> offsets;
  offsets.reserve(clouds.size());
  for (const Eigen::Matrix3Xd& c : clouds) {
    if (c.cols() == 0) throw EmptyCloud("point cloud has no points");
    offsets.push_back(total);
    total += c.cols();
  }
  Eigen::MatrixXd input(4, total);
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    input.block(0, offsets[b], 3, clouds[b].cols()) = clouds[b];
    input.block(3, offsets[b], 1, clouds[b].cols()).setConstant(flag);
  }
  const Eigen::MatrixXd features =
      mlp_.forward(input, tape != nullptr ? &tape->mlp : nullptr);

  const auto batch = static_cast<Eigen::Index>(clouds.size());
  Eigen::MatrixXd pooled(kPointFeatureDim, batch);
  Eigen::MatrixXi argmax(kPointFeatureDim, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index begin = offsets[b];
    const Eigen::Index n = clouds[b].cols();
    for (Eigen::Index r = 0; r < kPointFeatureDim; ++r) {
      Eigen::Index best = begin;
      double value = features(r, begin);
      for (Eigen::Index c = begin + 1; c < begin + n; ++c) {
        if (features(r, c) > value) {
          value = features(r, c);
          best = c;
        }
      }
      pooled(r, b) = value;
      argmax(r, b) = static_cast<int>(best);
    }
  }
  if (tape != nullptr) {
    tape->offsets = std::move(offsets);
    tape->argmax = std::move(argmax);
    tape->total_columns = total;
  }
  return pooled;
}

void PointEncoder::backward(const Eigen::MatrixXd& grad_out,
                            const Tape& tape) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(kPointFeatureDim,
                                            tape.total_columns);
  for (Eigen::Index b = 0; b < grad_out.cols(); ++b) {
    for (Eigen::Index r = 0; r < kPointFeatureDim; ++r) {
      g(r, tape.argmax(r, b)) += grad_out(r, b);
    }
  }
  mlp_.backward(g, tape.mlp);
}

Eigen::VectorXd StubTextEmbedder::embed(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  if (tokens.empty()) throw EmptyText("text has no tokens");

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kTextRawDim);
  for (const std::string& token : tokens) {
    Rng rng(mix64(seed_ ^ fnv1a(token)));
    for (int i = 0; i < kTextRawDim; ++i) sum[i] += rng.normal();
  }
  sum /= static_cast<double>(tokens.size());
  const double norm = sum.norm();
  if (norm > 0.0) sum /= norm;
  return sum;
}

Eigen::VectorXd timestep_embedding(int k) {
  constexpr int kHalf = kTimeDim / 2;
  Eigen::VectorXd out(kTimeDim);
  for (int i = 0; i < kHalf; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / kHalf);
    out[i] = std::sin(k * freq);
    out[kHalf + i] = std::cos(k * freq);
  }
  return out;
}

NoisePredictor::NoisePredictor(int state_dim, int cond_dim, int hidden,
                               int units)
    : state_dim_(state_dim),
      cond_dim_(cond_dim),
      head_(state_dim, state_dim, Activation::kIdentity) {
  if (state_dim < 1 || cond_dim < 0 || hidden < 1 || units < 1) {
    throw InvalidRange("invalid noise predictor dimensions");
  }
  for (int u = 0; u < units; ++u) {
    units_.emplace_back(
        std::vector<int>{state_dim + cond_dim + kTimeDim, hidden, hidden,
                         state_dim},
        std::vector<Activation>{Activation::kSilu, Activation::kSilu,
                                Activation::kIdentity});
  }
}

void NoisePredictor::init(Rng& rng) {
  for (Mlp& unit : units_) unit.init(rng);
  head_.init(rng);
}

Eigen::MatrixXd NoisePredictor::forward(const Eigen::MatrixXd& states,
                                        const Eigen::MatrixXd& cond,
                                        const Eigen::MatrixXd& time,
                                        Tape* tape) const {
  const Eigen::Index batch = states.cols();
  if (states.rows() != state_dim_ || cond.rows() != cond_dim_ ||
      time.rows() != kTimeDim || cond.cols() != batch ||
      time.cols() != batch) {
    throw DimensionMismatch("noise predictor input shape mismatch");
  }
  Eigen::MatrixXd input(state_dim_ + cond_dim_ + kTimeDim, batch);
  input.middleRows(state_dim_, cond_dim_) = cond;
  input.bottomRows(kTimeDim) = time;

  if (tape != nullptr) {
    tape->units.assign(units_.size(), {});
    tape->residuals.clear();
  }
  Eigen::MatrixXd x = states;
  for (std::size_t u = 0; u < units_.size(); ++u) {
    if (tape != nullptr) tape->residuals.push_back(x);
    input.topRows(state_dim_) = x;
    x += units_[u].forward(input, tape != nullptr ? &tape->units[u] : nullptr);
  }
  if (tape != nullptr) tape->residuals.push_back(x);
  return head_.forward(x, tape != nullptr ? &tape->head : nullptr);
}

Eigen::MatrixXd NoisePredictor::backward(const Eigen::MatrixXd& grad_out,
                                         const Tape& tape) {
  Eigen::MatrixXd gx = head_.backward(grad_out, tape.head);
  Eigen::MatrixXd gcond = Eigen::MatrixXd::Zero(cond_dim_, grad_out.cols());
  for (std::size_t u = units_.size(); u-- > 0;) {
    const Eigen::MatrixXd gin = units_[u].backward(gx, tape.units[u]);
    gx += gin.topRows(state_dim_);
    gcond += gin.middleRows(state_dim_, cond_dim_);
  }
  return gcond;
}

void NoisePredictor::collect(std::vector<ParamSlot>& out) {
  for (Mlp& unit : units_) unit.collect(out);
  head_.collect(out);
}

StateNormalizer StateNormalizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

StateNormalizer StateNormalizer::fit(const Eigen::MatrixXd& states,
                                     const Eigen::VectorXd& min_scale) {
  if (states.cols() == 0) throw EmptyInput("cannot fit normalizer on no data");
  if (min_scale.size() != states.rows()) {
    throw DimensionMismatch("normalizer floor has wrong dimension");
  }
  StateNormalizer out;
  out.mean = states.rowwise().mean();
  const Eigen::MatrixXd centered = states.colwise() - out.mean;
  out.scale = (centered.rowwise().squaredNorm() /
               static_cast<double>(states.cols()))
                  .cwiseSqrt()
                  .cwiseMax(min_scale);
  return out;
}

Eigen::MatrixXd StateNormalizer::normalize(
    const Eigen::MatrixXd& states) const {
  if (states.rows() != mean.size()) {
    throw DimensionMismatch("normalizer dimension mismatch");
  }
  return (states.colwise() - mean).array().colwise() / scale.array();
}

Eigen::MatrixXd StateNormalizer::denormalize(
    const Eigen::MatrixXd& normalized) const {
  if (normalized.rows() != mean.size()) {
    throw DimensionMismatch("normalizer dimension mismatch");
  }
  Eigen::MatrixXd out = normalized.array().colwise() * scale.array();
  out.colwise() += mean;
  return out;
}

DiffusionNet::DiffusionNet(const ModelConfig& config, std::uint64_t seed)
    : normalizer(StateNormalizer::identity(config.state_dim)),
      config_(config),
      text_({kTextRawDim, 512, kTextDim, kTextDim},
            {Activation::kRelu, Activation::kRelu, Activation::kIdentity}),
      predictor_(config.state_dim, config.conditioned ? kConditionDim : 0,
                 config.hidden, config.units) {
  if (config.hand_points < 0 || config.object_points < 0) {
    throw InvalidRange("point budgets must be non-negative");
  }
  Rng rng(seed);
  Rng enc = rng.split(0);
  Rng txt = rng.split(1);
  Rng pred = rng.split(2);
  encoder_.init(enc);
  text_.init(txt);
  predictor_.init(pred);
}

namespace {

Eigen::Matrix3Xd stride_subsample(const Eigen::Matrix3Xd& cloud, int budget) {
  const Eigen::Index n = cloud.cols();
  if (budget <= 0 || n <= budget) return cloud;
  Eigen::Matrix3Xd out(3, budget);
  for (Eigen::Index i = 0; i < budget; ++i) out.col(i) = cloud.col(i * n / budget);
  return out;
}

}  // namespace

Eigen::Matrix3Xd DiffusionNet::subsample_hand(
    const Eigen::Matrix3Xd& cloud) const {
  return stride_subsample(cloud, config_.hand_points);
}

Eigen::Matrix3Xd DiffusionNet::subsample_object(
    const Eigen::Matrix3Xd& cloud) const {
  return stride_subsample(cloud, config_.object_points);
}

Eigen::VectorXd DiffusionNet::encode_hand(const Eigen::Matrix3Xd& cloud) const {
  return encoder_.encode(subsample_hand(cloud), 1.0);
}

Eigen::VectorXd DiffusionNet::encode_object(
    const Eigen::Matrix3Xd& cloud) const {
  return encoder_.encode(subsample_object(cloud), 0.0);
}

Eigen::VectorXd DiffusionNet::compress_text(const Eigen::VectorXd& raw) const {
  if (raw.size() != kTextRawDim) {
    throw DimensionMismatch("raw text embedding must have 1536 entries");
  }
  return text_.forward(raw, nullptr).col(0);
}

Eigen::VectorXd DiffusionNet::predict_noise(
    const Eigen::VectorXd& state, const ConditionEmbeddings& embs) const {
  if (state.size() != config_.state_dim) {
    throw DimensionMismatch("state has " + std::to_string(state.size()) +
                            " entries, model expects " +
                            std::to_string(config_.state_dim));
  }
  Eigen::MatrixXd cond(predictor_.cond_dim(), 1);
  if (config_.conditioned) {
    if (embs.hand.size() != kPointFeatureDim ||
        embs.object.size() != kPointFeatureDim ||
        embs.text.size() != kTextDim) {
      throw DimensionMismatch("condition embeddings have wrong dimensions");
    }
    cond << embs.hand, embs.object, embs.text;
  }
  if (embs.step.size() != kTimeDim) {
    throw DimensionMismatch("timestep embedding must have 64 entries");
  }
  return predictor_.forward(state, cond, embs.step, nullptr).col(0);
}

Eigen::MatrixXd DiffusionNet::predict_batch(const Eigen::MatrixXd& states,
                                            const Eigen::MatrixXd& cond,
                                            std::span<const int> steps) const {
  if (static_cast<Eigen::Index>(steps.size()) != states.cols()) {
    throw DimensionMismatch("one diffusion step per column required");
  }
  Eigen::MatrixXd time(kTimeDim, states.cols());
  for (Eigen::Index b = 0; b < states.cols(); ++b) {
    time.col(b) = timestep_embedding(steps[b]);
  }
  return predictor_.forward(states, cond, time, nullptr);
}

std::vector<ParamSlot> DiffusionNet::parameters() {
  std::vector<ParamSlot> out;
  if (config_.conditioned) {
    encoder_.collect(out);
    text_.collect(out);
  }
  predictor_.collect(out);
  return out;
}

void DiffusionNet::zero_grad() {
  for (const ParamSlot& p : parameters()) {
    std::fill(p.grad, p.grad + p.size(), 0.0);
  }
}

Eigen::Index DiffusionNet::parameter_count() {
  Eigen::Index n = 0;
  for (const ParamSlot& p : parameters()) n += p.size();
  return n;
}

namespace {

constexpr char kMagic[8] = {'T', 'O', 'G', 'R', 'A', 'S', 'P', 'W'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw ParseError("checkpoint is truncated");
  return value;
}

void put_vector(std::ostream& os, const Eigen::VectorXd& v) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v[i]);
}

Eigen::VectorXd get_vector(std::istream& is, Eigen::Index expected) {
  const auto n = get<std::uint64_t>(is);
  if (static_cast<Eigen::Index>(n) != expected) {
    throw ParseError("checkpoint normalizer has wrong dimension");
  }
  Eigen::VectorXd v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = get<double>(is);
  return v;
}

}  // namespace

void DiffusionNet::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::int32_t>(os, config_.state_dim);
  put<std::int32_t>(os, config_.conditioned ? 1 : 0);
  put<std::int32_t>(os, config_.hidden);
  put<std::int32_t>(os, config_.units);
  put<std::int32_t>(os, config_.hand_points);
  put<std::int32_t>(os, config_.object_points);
  put<std::int32_t>(os, trained ? 1 : 0);
  put_vector(os, normalizer.mean);
  put_vector(os, normalizer.scale);
  // Parameters are enumerated through a mutable view; nothing is modified.
  auto params = const_cast<DiffusionNet*>(this)->parameters();
  put<std::uint64_t>(os, params.size());
  for (const ParamSlot& p : params) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p.rows));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p.cols));
    for (Eigen::Index r = 0; r < p.rows; ++r) {
      for (Eigen::Index c = 0; c < p.cols; ++c) {
        put<double>(os, p.value[c * p.rows + r]);
      }
    }
  }
  if (!os) throw Error("failed writing checkpoint " + path.string());
}

DiffusionNet DiffusionNet::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " +
                     std::to_string(version));
  }
  ModelConfig config;
  config.state_dim = get<std::int32_t>(is);
  config.conditioned = get<std::int32_t>(is) != 0;
  config.hidden = get<std::int32_t>(is);
  config.units = get<std::int32_t>(is);
  config.hand_points = get<std::int32_t>(is);
  config.object_points = get<std::int32_t>(is);
  const bool trained = get<std::int32_t>(is) != 0;
  if (config.state_dim < 1 || config.hidden < 1 || config.units < 1) {
    throw ParseError("checkpoint has invalid dimensions");
  }
  DiffusionNet net(config);
  net.trained = trained;
  net.normalizer.mean = get_vector(is, config.state_dim);
  net.normalizer.scale = get_vector(is, config.state_dim);
  auto params = net.parameters();
  if (get<std::uint64_t>(is) != params.size()) {
    throw ParseError("checkpoint tensor count does not match architecture");
  }
  for (const ParamSlot& p : params) {
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (static_cast<Eigen::Index>(rows) != p.rows ||
        static_cast<Eigen::Index>(cols) != p.cols) {
      throw ParseError("checkpoint tensor shape does not match architecture");
    }
    for (Eigen::Index r = 0; r < p.rows; ++r) {
      for (Eigen::Index c = 0; c < p.cols; ++c) {
        p.value[c * p.rows + r] = get<double>(is);
      }
    }
  }
  return net;
}

void RmsProp::step(std::span<const ParamSlot> params) {
  if (state_.size() != params.size()) {
    state_.clear();
    for (const ParamSlot& p : params) {
      state_.push_back(Eigen::VectorXd::Zero(p.size()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSlot& p = params[i];
    Eigen::Map<Eigen::VectorXd> value(p.value, p.size());
    Eigen::Map<const Eigen::VectorXd> grad(p.grad, p.size());
    Eigen::VectorXd& s = state_[i];
    s = rho_ * s + (1.0 - rho_) * grad.cwiseAbs2();
    value.array() -= lr_ * grad.array() / (s.array().sqrt() + eps_);
  }
}

bool gradients_finite(std::span<const ParamSlot> params) {
  for (const ParamSlot& p : params) {
    if (!Eigen::Map<const Eigen::VectorXd>(p.grad, p.size()).allFinite()) {
      return false;
    }
  }
  return true;
}

}  // namespace tograsp
