// Copyright 2026 The textcap Authors
// SPDX-License-Identifier: Apache-2.0

#include "textcap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>

#include "textcap/adam.hpp"
#include "textcap/errors.hpp"
#include "textcap/rng.hpp"

namespace textcap {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

// ---------------------------------------------------------------------------
// Layer primitives

struct LayerNormCache {
  Matrix xhat;
  Vector rstd;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache& cache) {
  const auto n = x.rows();
  const auto d = static_cast<double>(x.cols());
  cache.xhat.resize(n, x.cols());
  cache.rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const RowVector centered = x.row(i).array() - mean;
    const double var = centered.squaredNorm() / d;
    cache.rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.xhat.row(i) = centered * cache.rstd(i);
  }
  Matrix y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dxhat.row(i).sum() / d;
    const double mean_dx = dxhat.row(i).dot(cache.xhat.row(i)) / d;
    dx.row(i) = cache.rstd(i) *
                (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx).matrix();
  }
  return dx;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

constexpr double kGeluC = 0.044715;
const double kGeluK = std::sqrt(2.0 / std::numbers::pi);

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double gelu_grad(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluC * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, SplitMix64& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.next_uniform() < rate ? 0.0 : keep;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Forward tape

struct BlockCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix normed1;
  Matrix qkv;
  std::vector<Matrix> probs;
  Matrix concat;
  Matrix attn_mask;
  Matrix x_mid;
  LayerNormCache ln2;
  Matrix normed2;
  Matrix hidden;
  Matrix activated;
  Matrix ff_mask;
};

struct Tape {
  std::size_t prefix_len = 0;
  std::vector<TokenId> tokens;
  std::optional<FuseResult> fused;
  std::vector<BlockCache> blocks;
  Matrix x_final;
  LayerNormCache lnf;
  Matrix z;
  Matrix logits;
};

void validate_inputs(const DecoderModel& model, const PrefixInput& prefix,
                     std::span<const TokenId> tokens) {
  const auto& cfg = model.config();
  if (tokens.empty() || tokens.front() != Vocabulary::kBos) {
    throw ValidationError("decoder: token sequence must start with BOS");
  }
  if (prefix.length() + tokens.size() > cfg.max_len) {
    throw ValidationError("decoder: sequence length " +
                          std::to_string(prefix.length() + tokens.size()) + " exceeds max_len " +
                          std::to_string(cfg.max_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size()) {
      throw ValidationError("decoder: unknown token id " + std::to_string(t));
    }
  }
  if (static_cast<std::size_t>(prefix.v.size()) != model.embed_dim()) {
    throw ValidationError("decoder: prefix feature dim " + std::to_string(prefix.v.size()) +
                          " != " + std::to_string(model.embed_dim()));
  }
}

Tape run_forward(const DecoderModel& model, const PrefixInput& prefix,
                 std::span<const TokenId> tokens, SplitMix64* dropout_rng,
                 AttentionMaps* attention) {
  validate_inputs(model, prefix, tokens);
  const auto& cfg = model.config();
  const auto& w = model.weights();
  const auto D = static_cast<Eigen::Index>(cfg.model_dim);
  const auto H = static_cast<Eigen::Index>(cfg.heads);
  const auto dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tape tape;
  tape.prefix_len = prefix.length();
  tape.tokens.assign(tokens.begin(), tokens.end());
  const auto P = static_cast<Eigen::Index>(tape.prefix_len);
  const auto n = P + static_cast<Eigen::Index>(tokens.size());

  Matrix x(n, D);
  x.row(0) = prefix.v.transpose() * w.prefix_v_w + w.prefix_v_b.row(0);
  if (prefix.aux) {
    tape.fused = fuse(prefix.aux->query, prefix.aux->objects, w.fusion);
    x.row(1) = tape.fused->u.transpose() * w.prefix_u_w + w.prefix_u_b.row(0);
  }
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    x.row(P + static_cast<Eigen::Index>(k)) = w.token_embedding.row(tokens[k]);
  }
  x += w.position_embedding.topRows(n);

  const bool use_dropout = dropout_rng != nullptr && cfg.dropout > 0.0;
  if (attention) attention->assign(cfg.layers, {});

  tape.blocks.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& bw = w.blocks[l];
    auto& c = tape.blocks[l];
    c.x_in = x;
    c.normed1 = layer_norm(x, bw.ln1_gain, bw.ln1_bias, c.ln1);
    c.qkv = affine(c.normed1, bw.w_qkv, bw.b_qkv);
    c.concat.resize(n, D);
    c.probs.resize(static_cast<std::size_t>(H));
    for (Eigen::Index h = 0; h < H; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(D + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * D + h * dh, dh);
      Matrix s = (q * k.transpose()) * scale;
      Matrix& p = c.probs[static_cast<std::size_t>(h)];
      p = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = s.row(i).head(i + 1);
        const RowVector e = (row.array() - row.maxCoeff()).exp().matrix();
        p.row(i).head(i + 1) = e / e.sum();
      }
      c.concat.middleCols(h * dh, dh) = p * v;
      if (attention) (*attention)[l].push_back(p);
    }
    Matrix attn = affine(c.concat, bw.w_attn_out, bw.b_attn_out);
    if (use_dropout) {
      c.attn_mask = dropout_mask(n, D, cfg.dropout, *dropout_rng);
      attn = attn.cwiseProduct(c.attn_mask);
    }
    c.x_mid = x + attn;
    c.normed2 = layer_norm(c.x_mid, bw.ln2_gain, bw.ln2_bias, c.ln2);
    c.hidden = affine(c.normed2, bw.w_ff1, bw.b_ff1);
    c.activated = c.hidden.unaryExpr([](double v) { return gelu(v); });
    Matrix ff = affine(c.activated, bw.w_ff2, bw.b_ff2);
    if (use_dropout) {
      c.ff_mask = dropout_mask(n, D, cfg.dropout, *dropout_rng);
      ff = ff.cwiseProduct(c.ff_mask);
    }
    x = c.x_mid + ff;
  }
  tape.x_final = x;
  tape.z = layer_norm(x, w.lnf_gain, w.lnf_bias, tape.lnf);
  tape.logits = affine(tape.z, w.head_w, w.head_b);
  return tape;
}

void run_backward(const DecoderModel& model, const PrefixInput& prefix, const Tape& tape,
                  const Matrix& dlogits, DecoderWeights& g) {
  const auto& cfg = model.config();
  const auto& w = model.weights();
  const auto D = static_cast<Eigen::Index>(cfg.model_dim);
  const auto H = static_cast<Eigen::Index>(cfg.heads);
  const auto dh = D / H;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto n = tape.logits.rows();

  g.head_w += tape.z.transpose() * dlogits;
  g.head_b.row(0) += dlogits.colwise().sum();
  const Matrix dz = dlogits * w.head_w.transpose();
  Matrix dx = layer_norm_backward(dz, tape.lnf, w.lnf_gain, g.lnf_gain, g.lnf_bias);

  for (std::size_t li = cfg.layers; li-- > 0;) {
    const auto& bw = w.blocks[li];
    auto& bg = g.blocks[li];
    const auto& c = tape.blocks[li];

    Matrix dx_mid = dx;
    Matrix dff = dx;
    if (c.ff_mask.size()) dff = dff.cwiseProduct(c.ff_mask);
    bg.w_ff2 += c.activated.transpose() * dff;
    bg.b_ff2.row(0) += dff.colwise().sum();
    Matrix dhidden = dff * bw.w_ff2.transpose();
    dhidden = dhidden.cwiseProduct(c.hidden.unaryExpr([](double v) { return gelu_grad(v); }));
    bg.w_ff1 += c.normed2.transpose() * dhidden;
    bg.b_ff1.row(0) += dhidden.colwise().sum();
    const Matrix dnormed2 = dhidden * bw.w_ff1.transpose();
    dx_mid += layer_norm_backward(dnormed2, c.ln2, bw.ln2_gain, bg.ln2_gain, bg.ln2_bias);

    Matrix dattn = dx_mid;
    if (c.attn_mask.size()) dattn = dattn.cwiseProduct(c.attn_mask);
    bg.w_attn_out += c.concat.transpose() * dattn;
    bg.b_attn_out.row(0) += dattn.colwise().sum();
    const Matrix dconcat = dattn * bw.w_attn_out.transpose();

    Matrix dqkv(n, 3 * D);
    for (Eigen::Index h = 0; h < H; ++h) {
      const auto q = c.qkv.middleCols(h * dh, dh);
      const auto k = c.qkv.middleCols(D + h * dh, dh);
      const auto v = c.qkv.middleCols(2 * D + h * dh, dh);
      const Matrix& p = c.probs[static_cast<std::size_t>(h)];
      const auto dout = dconcat.middleCols(h * dh, dh);
      const Matrix dp = dout * v.transpose();
      dqkv.middleCols(2 * D + h * dh, dh) = p.transpose() * dout;
      const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
      const Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      dqkv.middleCols(h * dh, dh) = ds * k;
      dqkv.middleCols(D + h * dh, dh) = ds.transpose() * q;
    }
    bg.w_qkv += c.normed1.transpose() * dqkv;
    bg.b_qkv.row(0) += dqkv.colwise().sum();
    const Matrix dnormed1 = dqkv * bw.w_qkv.transpose();
    dx = dx_mid + layer_norm_backward(dnormed1, c.ln1, bw.ln1_gain, bg.ln1_gain, bg.ln1_bias);
  }

  // Embedding layer.
  const auto P = static_cast<Eigen::Index>(tape.prefix_len);
  g.position_embedding.topRows(n) += dx;
  g.prefix_v_w += prefix.v * dx.row(0);
  g.prefix_v_b.row(0) += dx.row(0);
  if (tape.fused) {
    g.prefix_u_w += tape.fused->u * dx.row(1);
    g.prefix_u_b.row(0) += dx.row(1);
    const Vector du = (dx.row(1) * w.prefix_u_w.transpose()).transpose();
    const FuseGrads fg = fuse_backward(*tape.fused, w.fusion, du);
    FusionParams::visit(g.fusion, [&](const char* name, Matrix& m) {
      FusionParams::visit(fg.params, [&](const char* other, const Matrix& gm) {
        if (std::string_view(name) == other) m += gm;
      });
    });
  }
  for (std::size_t k = 0; k < tape.tokens.size(); ++k) {
    g.token_embedding.row(tape.tokens[k]) += dx.row(P + static_cast<Eigen::Index>(k));
  }
}

struct CaptionTargets {
  std::span<const TokenId> inputs;
  std::span<const TokenId> targets;
  std::size_t counted = 0;
};

CaptionTargets split_caption(std::span<const TokenId> tokens) {
  if (tokens.size() < 3 || tokens.front() != Vocabulary::kBos) {
    throw ValidationError("reconstruction loss: caption must be BOS w_1..w_n EOS with n >= 1");
  }
  CaptionTargets t{tokens.first(tokens.size() - 1), tokens.subspan(1), 0};
  for (TokenId id : t.targets) {
    if (id != Vocabulary::kPad) ++t.counted;
  }
  return t;
}

// Softmax cross-entropy rows; writes d(loss)/d(logits) when dlogits != nullptr.
double caption_cross_entropy(const Matrix& logits, std::size_t prefix_len,
                             const CaptionTargets& t, Matrix* dlogits) {
  double loss = 0.0;
  if (dlogits) *dlogits = Matrix::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(t.counted);
  for (std::size_t k = 0; k < t.targets.size(); ++k) {
    const TokenId target = t.targets[k];
    if (target == Vocabulary::kPad) continue;
    const auto row = static_cast<Eigen::Index>(prefix_len + k);
    const auto r = logits.row(row);
    const double mx = r.maxCoeff();
    const RowVector e = (r.array() - mx).exp().matrix();
    const double z = e.sum();
    loss += (mx + std::log(z)) - r(target);
    if (dlogits) {
      dlogits->row(row) = (e / z) * inv;
      (*dlogits)(row, target) -= inv;
    }
  }
  return loss * inv;
}

Matrix init_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, NormalStream& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.next();
  return m;
}

double item_loss_and_grads(const DecoderModel& model, const TrainingExample& ex,
                           std::optional<std::uint64_t> dropout_seed, double weight,
                           DecoderWeights& grads) {
  const CaptionTargets t = split_caption(ex.tokens);
  std::optional<SplitMix64> rng;
  if (dropout_seed) rng.emplace(*dropout_seed);
  const Tape tape = run_forward(model, ex.prefix, t.inputs, rng ? &*rng : nullptr, nullptr);
  Matrix dlogits;
  const double loss = caption_cross_entropy(tape.logits, tape.prefix_len, t, &dlogits);
  if (weight != 1.0) dlogits *= weight;
  run_backward(model, ex.prefix, tape, dlogits, grads);
  return loss;
}

}  // namespace

// ---------------------------------------------------------------------------

void DecoderConfig::validate() const {
  if (layers == 0 || heads == 0 || model_dim == 0 || ff_dim == 0) {
    throw ValidationError("decoder: layers, heads, model_dim, ff_dim must be >= 1");
  }
  if (model_dim % heads != 0) throw ValidationError("decoder: model_dim must be divisible by heads");
  if (max_len < 3) throw ValidationError("decoder: max_len must be >= 3");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("decoder: dropout must be in [0, 1)");
  if (!(learning_rate >= 0.0)) throw ValidationError("decoder: learning_rate must be >= 0");
  if (batch_size == 0) throw ValidationError("decoder: batch_size must be >= 1");
  if (fusion_heads == 0) throw ValidationError("decoder: fusion_heads must be >= 1");
}

DecoderWeights DecoderWeights::zeros_like() const {
  DecoderWeights z = *this;
  visit(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

DecoderModel DecoderModel::init(const DecoderConfig& cfg, std::size_t vocab_size,
                                std::size_t embed_dim) {
  cfg.validate();
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kNumSpecials)) {
    throw ValidationError("decoder: vocabulary has no regular tokens");
  }
  if (embed_dim == 0 || embed_dim % cfg.fusion_heads != 0) {
    throw ValidationError("decoder: embedding dim must be divisible by fusion_heads");
  }
  DecoderModel model;
  model.config_ = cfg;
  model.vocab_size_ = vocab_size;
  model.embed_dim_ = embed_dim;

  NormalStream rng(derive_seed(cfg.seed, "decoder/init"));
  const auto D = static_cast<Eigen::Index>(cfg.model_dim);
  const auto F = static_cast<Eigen::Index>(cfg.ff_dim);
  const auto V = static_cast<Eigen::Index>(vocab_size);
  const auto E = static_cast<Eigen::Index>(embed_dim);
  const double residual_std = kInitStd / std::sqrt(2.0 * static_cast<double>(cfg.layers));

  auto& w = model.weights_;
  w.token_embedding = init_matrix(V, D, kInitStd, rng);
  w.position_embedding = init_matrix(static_cast<Eigen::Index>(cfg.max_len), D, kInitStd, rng);
  w.prefix_v_w = init_matrix(E, D, kInitStd, rng);
  w.prefix_v_b = Matrix::Zero(1, D);
  w.prefix_u_w = init_matrix(E, D, kInitStd, rng);
  w.prefix_u_b = Matrix::Zero(1, D);
  w.blocks.resize(cfg.layers);
  for (auto& b : w.blocks) {
    b.ln1_gain = Matrix::Ones(1, D);
    b.ln1_bias = Matrix::Zero(1, D);
    b.w_qkv = init_matrix(D, 3 * D, kInitStd, rng);
    b.b_qkv = Matrix::Zero(1, 3 * D);
    b.w_attn_out = init_matrix(D, D, residual_std, rng);
    b.b_attn_out = Matrix::Zero(1, D);
    b.ln2_gain = Matrix::Ones(1, D);
    b.ln2_bias = Matrix::Zero(1, D);
    b.w_ff1 = init_matrix(D, F, kInitStd, rng);
    b.b_ff1 = Matrix::Zero(1, F);
    b.w_ff2 = init_matrix(F, D, residual_std, rng);
    b.b_ff2 = Matrix::Zero(1, D);
  }
  w.lnf_gain = Matrix::Ones(1, D);
  w.lnf_bias = Matrix::Zero(1, D);
  w.head_w = init_matrix(D, V, kInitStd, rng);
  w.head_b = Matrix::Zero(1, V);
  w.fusion = FusionParams::init(embed_dim, cfg.fusion_heads, derive_seed(cfg.seed, "decoder/fusion"));
  return model;
}

std::vector<std::pair<std::string, Matrix>> DecoderModel::named_tensors() const {
  std::vector<std::pair<std::string, Matrix>> out;
  DecoderWeights::visit(weights_, [&](const std::string& name, const Matrix& m) {
    out.emplace_back(name, m);
  });
  return out;
}

DecoderModel DecoderModel::from_tensors(const DecoderConfig& cfg, std::size_t vocab_size,
                                        std::size_t embed_dim,
                                        std::span<const std::pair<std::string, Matrix>> tensors) {
  DecoderModel model = init(cfg, vocab_size, embed_dim);
  std::map<std::string, const Matrix*> by_name;
  for (const auto& [name, m] : tensors) by_name[name] = &m;
  DecoderWeights::visit(model.weights_, [&](const std::string& name, Matrix& m) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ValidationError("checkpoint: missing tensor \"" + name + "\"");
    if (it->second->rows() != m.rows() || it->second->cols() != m.cols()) {
      throw ValidationError("checkpoint: tensor \"" + name + "\" has wrong shape");
    }
    m = *it->second;
    by_name.erase(it);
  });
  if (!by_name.empty()) {
    throw ValidationError("checkpoint: unexpected tensor \"" + by_name.begin()->first + "\"");
  }
  return model;
}

Matrix forward(const DecoderModel& model, const PrefixInput& prefix,
               std::span<const TokenId> tokens, AttentionMaps* attention) {
  return run_forward(model, prefix, tokens, nullptr, attention).logits;
}

double reconstruction_loss(const DecoderModel& model, const PrefixInput& prefix,
                           std::span<const TokenId> tokens) {
  const CaptionTargets t = split_caption(tokens);
  const Tape tape = run_forward(model, prefix, t.inputs, nullptr, nullptr);
  return caption_cross_entropy(tape.logits, tape.prefix_len, t, nullptr);
}

LossAndGrads reconstruction_loss_and_grads(const DecoderModel& model, const PrefixInput& prefix,
                                           std::span<const TokenId> tokens,
                                           std::optional<std::uint64_t> dropout_seed) {
  LossAndGrads out;
  out.grads = model.weights().zeros_like();
  const TrainingExample ex{prefix, std::vector<TokenId>(tokens.begin(), tokens.end())};
  out.loss = item_loss_and_grads(model, ex, dropout_seed, 1.0, out.grads);
  return out;
}

TrainResult train(DecoderModel& model, std::span<const TrainingExample> data,
                  const EpochCallback& on_epoch) {
  const auto& cfg = model.config();
  cfg.validate();
  if (data.empty()) throw ValidationError("train: empty dataset");

  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};
  std::vector<AdamState> state;
  DecoderWeights::visit(model.weights(), [&](const std::string&, Matrix&) { state.emplace_back(); });

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, "decoder/shuffle");
  const std::uint64_t dropout_seed = derive_seed(cfg.seed, "decoder/dropout");

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SplitMix64 rng(shuffle_seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next() % i]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      DecoderWeights grads = model.weights().zeros_like();
      const double weight = 1.0 / static_cast<double>(b);
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t item = order[start + k];
        std::optional<std::uint64_t> item_seed;
        if (cfg.dropout > 0.0) {
          SplitMix64 mix(dropout_seed ^ (epoch * 0x100000001b3ULL) ^ (item * 0xff51afd7ed558ccdULL));
          item_seed = mix.next();
        }
        const double loss = item_loss_and_grads(model, data[item], item_seed, weight, grads);
        if (!std::isfinite(loss)) {
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", item " + std::to_string(item));
        }
        epoch_loss += loss;
      }
      std::size_t idx = 0;
      std::vector<Matrix*> grad_list;
      DecoderWeights::visit(grads, [&](const std::string&, Matrix& m) { grad_list.push_back(&m); });
      DecoderWeights::visit(model.weights(), [&](const std::string&, Matrix& m) {
        state[idx].update(adam, m, *grad_list[idx]);
        ++idx;
      });
    }
    const double mean = epoch_loss / static_cast<double>(data.size());
    if (!std::isfinite(mean)) throw NumericalError("train: loss diverged");
    result.epoch_mean_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

namespace {

bool emittable(TokenId id) {
  return id != Vocabulary::kPad && id != Vocabulary::kBos && id != Vocabulary::kUnk;
}

struct Hypothesis {
  std::vector<TokenId> ids;  // starts with BOS
  double score = 0.0;        // summed log-probability
};

}  // namespace

std::vector<TokenId> generate(const DecoderModel& model, const PrefixInput& prefix,
                              DecodeStrategy strategy) {
  const std::size_t k = std::max<std::size_t>(strategy.beam_size, 1);
  const std::size_t limit = model.config().max_len;
  const std::size_t plen = prefix.length();
  const auto V = static_cast<TokenId>(model.vocab_size());

  std::vector<Hypothesis> live = {Hypothesis{{Vocabulary::kBos}, 0.0}};
  std::vector<std::pair<double, Hypothesis>> finished;  // (normalized score, hyp)

  while (!live.empty() && plen + live.front().ids.size() <= limit) {
    struct Candidate {
      double score;
      std::size_t hyp;
      TokenId token;
    };
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const Matrix logits = forward(model, prefix, live[h].ids);
      const auto last = logits.row(logits.rows() - 1);
      double mx = -std::numeric_limits<double>::infinity();
      for (TokenId t = 0; t < V; ++t) {
        if (emittable(t)) mx = std::max(mx, last(t));
      }
      double z = 0.0;
      for (TokenId t = 0; t < V; ++t) {
        if (emittable(t)) z += std::exp(last(t) - mx);
      }
      const double lse = mx + std::log(z);
      for (TokenId t = 0; t < V; ++t) {
        if (emittable(t)) candidates.push_back({live[h].score + (last(t) - lse), h, t});
      }
    }
    const std::size_t keep = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      Hypothesis h = live[c.hyp];
      h.score = c.score;
      if (c.token == Vocabulary::kEos) {
        const double len = static_cast<double>(h.ids.size());  // generated tokens + EOS
        finished.emplace_back(h.score / len, std::move(h));
      } else {
        h.ids.push_back(c.token);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  for (auto& h : live) {
    const double len = static_cast<double>(std::max<std::size_t>(h.ids.size() - 1, 1));
    finished.emplace_back(h.score / len, std::move(h));
  }

  const Hypothesis* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& [s, h] : finished) {
    if (best == nullptr || s > best_score) {
      best = &h;
      best_score = s;
    }
  }
  if (best == nullptr) return {};
  return std::vector<TokenId>(best->ids.begin() + 1, best->ids.end());
}

}  // namespace textcap
