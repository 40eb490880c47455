#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssf/util.hpp"

namespace ssf {

namespace nn {

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

// --- dense stack with ReLU between layers, linear head ---

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  static Mlp init(const std::vector<int>& widths, Rng& rng) {
    Mlp m;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      DenseLayer layer;
      const int in = widths[i], out = widths[i + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      layer.W.resize(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.W(r, c) = rng.uniform(-bound, bound);
      layer.b = Eigen::VectorXd::Zero(out);
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  int input_width() const { return static_cast<int>(layers.front().W.cols()); }
  int output_width() const { return static_cast<int>(layers.back().W.rows()); }
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // activation entering each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

inline Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x,
                                   MlpCache* cache = nullptr) {
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (cache) cache->inputs.push_back(a);
    Eigen::MatrixXd z =
        (a * m.layers[i].W.transpose()).rowwise() + m.layers[i].b.transpose();
    if (cache) cache->pre.push_back(z);
    a = i + 1 < m.layers.size() ? z.cwiseMax(0.0) : z;
  }
  return a;
}

/// Gradients of the loss w.r.t. every layer; returns the gradient w.r.t. the
/// MLP input.
inline Eigen::MatrixXd mlp_backward(const Mlp& m, const MlpCache& cache,
                                    const Eigen::MatrixXd& d_out, Mlp& grads) {
  Eigen::MatrixXd dz = d_out;
  for (int i = static_cast<int>(m.layers.size()) - 1; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    if (ui + 1 < m.layers.size())  // ReLU mask of this layer's output
      dz = dz.array() * (cache.pre[ui].array() > 0.0).cast<double>();
    grads.layers[ui].W.noalias() += dz.transpose() * cache.inputs[ui];
    grads.layers[ui].b += dz.colwise().sum().transpose();
    if (i > 0)
      dz = dz * m.layers[ui].W;
    else
      return dz * m.layers[ui].W;
  }
  return {};
}

// --- LSTM stack ---

struct LstmLayer {
  // gate order inside the 4H blocks: input, forget, cell candidate, output
  Eigen::MatrixXd Wx;  // 4H x in
  Eigen::MatrixXd Wh;  // 4H x H
  Eigen::VectorXd b;   // 4H

  int hidden() const { return static_cast<int>(Wh.cols()); }
  int input() const { return static_cast<int>(Wx.cols()); }

  static LstmLayer init(int in, int hidden, Rng& rng,
                        double forget_bias = 1.0) {
    LstmLayer l;
    const double bx = 1.0 / std::sqrt(static_cast<double>(in));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
    l.Wx.resize(4 * hidden, in);
    for (int r = 0; r < 4 * hidden; ++r)
      for (int c = 0; c < in; ++c) l.Wx(r, c) = rng.uniform(-bx, bx);
    l.Wh.resize(4 * hidden, hidden);
    for (int r = 0; r < 4 * hidden; ++r)
      for (int c = 0; c < hidden; ++c) l.Wh(r, c) = rng.uniform(-bh, bh);
    l.b = Eigen::VectorXd::Zero(4 * hidden);
    l.b.segment(hidden, hidden).setConstant(forget_bias);
    return l;
  }
};

struct LstmStepCache {
  Eigen::MatrixXd x, h_prev, c_prev;
  Eigen::MatrixXd gi, gf, gg, go;  // gate activations
  Eigen::MatrixXd tanh_c;
};

struct LstmCache {
  // [layer][step]
  std::vector<std::vector<LstmStepCache>> steps;
};

/// Run the stack over a sequence of step inputs (each B x in). Returns the
/// top layer's hidden state at every step.
inline std::vector<Eigen::MatrixXd> lstm_forward(
    const std::vector<LstmLayer>& layers,
    const std::vector<Eigen::MatrixXd>& inputs, LstmCache* cache = nullptr) {
  if (layers.empty()) throw std::invalid_argument("lstm: no layers");
  if (inputs.empty()) throw std::invalid_argument("lstm: empty sequence");
  const auto B = inputs.front().rows();
  if (cache) cache->steps.assign(layers.size(), {});

  std::vector<Eigen::MatrixXd> current = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const int H = layer.hidden();
    if (current.front().cols() != layer.input())
      throw std::invalid_argument("lstm: input width mismatch at layer " +
                                  std::to_string(l));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(B, H);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(B, H);
    std::vector<Eigen::MatrixXd> outputs;
    outputs.reserve(current.size());
    for (const auto& x : current) {
      Eigen::MatrixXd z = (x * layer.Wx.transpose() + h * layer.Wh.transpose())
                              .rowwise() +
                          layer.b.transpose();
      LstmStepCache sc;
      sc.gi = sigmoid(z.leftCols(H));
      sc.gf = sigmoid(z.middleCols(H, H));
      sc.gg = z.middleCols(2 * H, H).array().tanh();
      sc.go = sigmoid(z.rightCols(H));
      sc.x = x;
      sc.h_prev = h;
      sc.c_prev = c;
      c = (sc.gf.array() * c.array() + sc.gi.array() * sc.gg.array()).matrix();
      sc.tanh_c = c.array().tanh().matrix();
      h = (sc.go.array() * sc.tanh_c.array()).matrix();
      outputs.push_back(h);
      if (cache) cache->steps[l].push_back(std::move(sc));
    }
    current = std::move(outputs);
  }
  return current;
}

/// Backpropagate d(loss)/d(top hidden state per step) through the stack.
inline void lstm_backward(const std::vector<LstmLayer>& layers,
                          const LstmCache& cache,
                          std::vector<Eigen::MatrixXd> d_hidden,
                          std::vector<LstmLayer>& grads) {
  const auto n_steps = cache.steps.front().size();
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto& layer = layers[ul];
    const int H = layer.hidden();
    const auto B = d_hidden.front().rows();
    Eigen::MatrixXd dh_rec = Eigen::MatrixXd::Zero(B, H);
    Eigen::MatrixXd dc_rec = Eigen::MatrixXd::Zero(B, H);
    std::vector<Eigen::MatrixXd> d_below(
        n_steps, Eigen::MatrixXd::Zero(B, layer.input()));
    for (int t = static_cast<int>(n_steps) - 1; t >= 0; --t) {
      const auto& sc = cache.steps[ul][static_cast<std::size_t>(t)];
      const Eigen::ArrayXXd dh =
          d_hidden[static_cast<std::size_t>(t)].array() + dh_rec.array();
      const Eigen::ArrayXXd d_o = dh * sc.tanh_c.array();
      const Eigen::ArrayXXd dc = dc_rec.array() +
                                 dh * sc.go.array() *
                                     (1.0 - sc.tanh_c.array().square());
      const Eigen::ArrayXXd d_i = dc * sc.gg.array();
      const Eigen::ArrayXXd d_f = dc * sc.c_prev.array();
      const Eigen::ArrayXXd d_g = dc * sc.gi.array();

      Eigen::MatrixXd dz(B, 4 * H);
      dz.leftCols(H) = (d_i * sc.gi.array() * (1.0 - sc.gi.array())).matrix();
      dz.middleCols(H, H) =
          (d_f * sc.gf.array() * (1.0 - sc.gf.array())).matrix();
      dz.middleCols(2 * H, H) = (d_g * (1.0 - sc.gg.array().square())).matrix();
      dz.rightCols(H) = (d_o * sc.go.array() * (1.0 - sc.go.array())).matrix();

      grads[ul].Wx.noalias() += dz.transpose() * sc.x;
      grads[ul].Wh.noalias() += dz.transpose() * sc.h_prev;
      grads[ul].b += dz.colwise().sum().transpose();
      d_below[static_cast<std::size_t>(t)] = dz * layer.Wx;
      dh_rec = dz * layer.Wh;
      dc_rec = (dc * sc.gf.array()).matrix();
    }
    d_hidden = std::move(d_below);  // feeds the layer underneath
  }
}

}  // namespace nn

enum class Wiring { all_steps, last_step };

inline std::string wiring_name(Wiring w) {
  return w == Wiring::all_steps ? "all_steps" : "last_step";
}

/// LSTM encoder over the feature sequence plus a two-layer ReLU decoder.
/// all_steps concatenates every step's hidden state into the decoder input;
/// last_step feeds only the final step.
struct EncDecConfig {
  int steps = 18;
  int input_width = 88;
  int hidden = 32;        // H_dim
  int lstm_layers = 1;
  int decoder_hidden = 128;
  int output_width = 1;   // G
  Wiring wiring = Wiring::all_steps;
  double forget_bias = 1.0;
};

class EncDecNet {
 public:
  EncDecNet(const EncDecConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in = cfg.input_width;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
      lstm_.push_back(nn::LstmLayer::init(in, cfg.hidden, rng, cfg.forget_bias));
      in = cfg.hidden;
    }
    const int dec_in =
        cfg.wiring == Wiring::all_steps ? cfg.steps * cfg.hidden : cfg.hidden;
    decoder_ = nn::Mlp::init({dec_in, cfg.decoder_hidden, cfg.output_width}, rng);
  }

  const EncDecConfig& config() const { return cfg_; }
  const std::vector<nn::LstmLayer>& lstm() const { return lstm_; }
  const nn::Mlp& decoder() const { return decoder_; }

  /// Split flattened rows (slot-major, 88 per slot, target date last) into
  /// per-step batch matrices.
  std::vector<Eigen::MatrixXd> split_steps(const Eigen::MatrixXd& X) const {
    if (X.cols() != cfg_.steps * cfg_.input_width)
      throw std::invalid_argument("encdec: flattened width mismatch");
    std::vector<Eigen::MatrixXd> steps;
    steps.reserve(static_cast<std::size_t>(cfg_.steps));
    for (int s = 0; s < cfg_.steps; ++s)
      steps.push_back(X.middleCols(s * cfg_.input_width, cfg_.input_width));
    return steps;
  }

  Eigen::MatrixXd decoder_input(const std::vector<Eigen::MatrixXd>& hs) const {
    if (cfg_.wiring == Wiring::last_step) return hs.back();
    const auto B = hs.front().rows();
    Eigen::MatrixXd concat(B, cfg_.steps * cfg_.hidden);
    for (int s = 0; s < cfg_.steps; ++s)
      concat.middleCols(s * cfg_.hidden, cfg_.hidden) =
          hs[static_cast<std::size_t>(s)];
    return concat;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const {
    const auto hs = nn::lstm_forward(lstm_, split_steps(X));
    return nn::mlp_forward(decoder_, decoder_input(hs));
  }

  /// Mean-squared-error backward pass; grads land in a parallel model.
  double loss_and_gradients(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            std::vector<nn::LstmLayer>& lstm_grads,
                            nn::Mlp& decoder_grads) const {
    nn::LstmCache cache;
    const auto hs = nn::lstm_forward(lstm_, split_steps(X), &cache);
    nn::MlpCache mlp_cache;
    const Eigen::MatrixXd pred =
        nn::mlp_forward(decoder_, decoder_input(hs), &mlp_cache);
    if (pred.rows() != Y.rows() || pred.cols() != Y.cols())
      throw std::invalid_argument("encdec: target shape mismatch");
    const Eigen::MatrixXd err = pred - Y;
    const double denom = static_cast<double>(Y.rows()) * Y.cols();
    const double loss = err.squaredNorm() / denom;
    const Eigen::MatrixXd d_pred = 2.0 * err / denom;

    const Eigen::MatrixXd d_dec_in =
        nn::mlp_backward(decoder_, mlp_cache, d_pred, decoder_grads);

    const auto B = X.rows();
    std::vector<Eigen::MatrixXd> d_hidden(
        static_cast<std::size_t>(cfg_.steps),
        Eigen::MatrixXd::Zero(B, cfg_.hidden));
    if (cfg_.wiring == Wiring::all_steps) {
      for (int s = 0; s < cfg_.steps; ++s)
        d_hidden[static_cast<std::size_t>(s)] =
            d_dec_in.middleCols(s * cfg_.hidden, cfg_.hidden);
    } else {
      d_hidden.back() = d_dec_in;
    }
    nn::lstm_backward(lstm_, cache, std::move(d_hidden), lstm_grads);
    return loss;
  }

  std::vector<nn::LstmLayer> zero_lstm_grads() const {
    std::vector<nn::LstmLayer> g;
    for (const auto& l : lstm_) {
      nn::LstmLayer z;
      z.Wx = Eigen::MatrixXd::Zero(l.Wx.rows(), l.Wx.cols());
      z.Wh = Eigen::MatrixXd::Zero(l.Wh.rows(), l.Wh.cols());
      z.b = Eigen::VectorXd::Zero(l.b.size());
      g.push_back(std::move(z));
    }
    return g;
  }

  nn::Mlp zero_decoder_grads() const {
    nn::Mlp g;
    for (const auto& l : decoder_.layers) {
      nn::DenseLayer z;
      z.W = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
      z.b = Eigen::VectorXd::Zero(l.b.size());
      g.layers.push_back(z);
    }
    return g;
  }

  // flat parameter vector: lstm layers (Wx, Wh, b) then decoder layers (W, b)
  Eigen::VectorXd flatten() const {
    std::vector<double> out;
    auto push = [&](const Eigen::MatrixXd& m) {
      out.insert(out.end(), m.data(), m.data() + m.size());
    };
    for (const auto& l : lstm_) {
      push(l.Wx);
      push(l.Wh);
      push(l.b);
    }
    for (const auto& l : decoder_.layers) {
      push(l.W);
      push(l.b);
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(),
                                       static_cast<Eigen::Index>(out.size()));
  }

  void unflatten(const Eigen::VectorXd& v) {
    Eigen::Index pos = 0;
    auto pull = [&](Eigen::MatrixXd& m) {
      std::copy(v.data() + pos, v.data() + pos + m.size(), m.data());
      pos += m.size();
    };
    auto pullv = [&](Eigen::VectorXd& m) {
      std::copy(v.data() + pos, v.data() + pos + m.size(), m.data());
      pos += m.size();
    };
    for (auto& l : lstm_) {
      pull(l.Wx);
      pull(l.Wh);
      pullv(l.b);
    }
    for (auto& l : decoder_.layers) {
      pull(l.W);
      pullv(l.b);
    }
    if (pos != v.size())
      throw std::invalid_argument("encdec: parameter vector length mismatch");
  }

  Eigen::VectorXd flatten_grads(const std::vector<nn::LstmLayer>& lg,
                                const nn::Mlp& dg) const {
    std::vector<double> out;
    auto push = [&](const Eigen::MatrixXd& m) {
      out.insert(out.end(), m.data(), m.data() + m.size());
    };
    for (const auto& l : lg) {
      push(l.Wx);
      push(l.Wh);
      push(l.b);
    }
    for (const auto& l : dg.layers) {
      push(l.W);
      push(l.b);
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(),
                                       static_cast<Eigen::Index>(out.size()));
  }

 private:
  EncDecConfig cfg_;
  std::vector<nn::LstmLayer> lstm_;
  nn::Mlp decoder_;
};

/// Plain feed-forward ReLU network on the flattened feature row; the FNN
/// baseline uses hidden widths (128, 64).
class FnnNet {
 public:
  FnnNet(const std::vector<int>& widths, Rng& rng)
      : mlp_(nn::Mlp::init(widths, rng)) {}

  const nn::Mlp& mlp() const { return mlp_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const {
    return nn::mlp_forward(mlp_, X);
  }

  double loss_and_gradients(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                            nn::Mlp& grads) const {
    nn::MlpCache cache;
    const Eigen::MatrixXd pred = nn::mlp_forward(mlp_, X, &cache);
    const Eigen::MatrixXd err = pred - Y;
    const double denom = static_cast<double>(Y.rows()) * Y.cols();
    const double loss = err.squaredNorm() / denom;
    nn::mlp_backward(mlp_, cache, 2.0 * err / denom, grads);
    return loss;
  }

  nn::Mlp zero_grads() const {
    nn::Mlp g;
    for (const auto& l : mlp_.layers) {
      nn::DenseLayer z;
      z.W = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
      z.b = Eigen::VectorXd::Zero(l.b.size());
      g.layers.push_back(z);
    }
    return g;
  }

  Eigen::VectorXd flatten() const {
    std::vector<double> out;
    for (const auto& l : mlp_.layers) {
      out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
      out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(),
                                       static_cast<Eigen::Index>(out.size()));
  }

  void unflatten(const Eigen::VectorXd& v) {
    Eigen::Index pos = 0;
    for (auto& l : mlp_.layers) {
      std::copy(v.data() + pos, v.data() + pos + l.W.size(), l.W.data());
      pos += l.W.size();
      std::copy(v.data() + pos, v.data() + pos + l.b.size(), l.b.data());
      pos += l.b.size();
    }
    if (pos != v.size())
      throw std::invalid_argument("fnn: parameter vector length mismatch");
  }

  Eigen::VectorXd flatten_grads(const nn::Mlp& g) const {
    std::vector<double> out;
    for (const auto& l : g.layers) {
      out.insert(out.end(), l.W.data(), l.W.data() + l.W.size());
      out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(),
                                       static_cast<Eigen::Index>(out.size()));
  }

  nn::Mlp& mutable_mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

// --- Adam ---

struct AdamState {
  int step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m, v;

  explicit AdamState(Eigen::Index n_params = 0, double lr_ = 1e-3)
      : lr(lr_),
        m(Eigen::VectorXd::Zero(n_params)),
        v(Eigen::VectorXd::Zero(n_params)) {}
};

/// Standard bias-corrected Adam update on flat parameter vectors.
inline Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                                 const Eigen::VectorXd& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam: shape mismatch");
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v.array().matrix() +
            (1.0 - state.beta2) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  const Eigen::ArrayXd mhat = state.m.array() / bc1;
  const Eigen::ArrayXd vhat = state.v.array() / bc2;
  return params.array() - state.lr * mhat / (vhat.sqrt() + state.eps);
}

// --- training loop with fold-skill early stopping ---

struct TrainOptions {
  int max_epochs = 200;
  int patience = 10;
  int batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EvalFold {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
};

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double val_skill = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_skill = 0.0;
  int best_epoch = -1;
};

namespace detail_train {

inline double mean_spatial_cosine_rows(const Eigen::MatrixXd& pred,
                                       const Eigen::MatrixXd& truth) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const double na = pred.row(i).norm(), nb = truth.row(i).norm();
    total += (na < 1e-12 || nb < 1e-12)
                 ? 0.0
                 : pred.row(i).dot(truth.row(i)) / (na * nb);
  }
  return pred.rows() > 0 ? total / static_cast<double>(pred.rows()) : 0.0;
}

}  // namespace detail_train

/// Mini-batch Adam on MSE with early stopping on the mean spatial cosine
/// over the validation folds. The best-epoch parameters are restored before
/// returning. Deterministic for a fixed seed.
template <typename Net, typename GradFn>
TrainResult train_network(Net& net, GradFn&& grad_step,
                          const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          const std::vector<EvalFold>& folds,
                          const TrainOptions& opt) {
  if (X.rows() == 0 || X.rows() != Y.rows())
    throw std::invalid_argument("train: bad training set");
  Rng rng(opt.seed ^ 0x7274ULL);
  TrainResult result;
  Eigen::VectorXd params = net.flatten();
  AdamState adam(params.size(), opt.lr);
  Eigen::VectorXd best_params = params;

  std::vector<int> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  int since_best = 0;

  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(opt.batch_size)) {
      const auto take =
          std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size),
                                order.size() - at);
      Eigen::MatrixXd bx(static_cast<Eigen::Index>(take), X.cols());
      Eigen::MatrixXd by(static_cast<Eigen::Index>(take), Y.cols());
      for (std::size_t i = 0; i < take; ++i) {
        bx.row(static_cast<Eigen::Index>(i)) = X.row(order[at + i]);
        by.row(static_cast<Eigen::Index>(i)) = Y.row(order[at + i]);
      }
      Eigen::VectorXd grads;
      const double loss = grad_step(bx, by, grads);
      if (!std::isfinite(loss))
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch));
      params = adam_step(adam, params, grads);
      net.unflatten(params);
      loss_sum += loss;
      ++batches;
    }

    double skill = 0.0;
    if (!folds.empty()) {
      for (const auto& f : folds)
        skill += detail_train::mean_spatial_cosine_rows(net.forward(f.X), f.Y);
      skill /= static_cast<double>(folds.size());
    } else {
      skill = -loss_sum / std::max(batches, 1);  // fall back to train loss
    }
    result.history.push_back({epoch, loss_sum / std::max(batches, 1), skill});

    if (result.best_epoch < 0 || skill > result.best_skill) {
      result.best_skill = skill;
      result.best_epoch = epoch;
      best_params = params;
      since_best = 0;
    } else {
      ++since_best;
      if (since_best > opt.patience) break;
    }
  }
  net.unflatten(best_params);
  return result;
}

inline TrainResult train_encdec(EncDecNet& net, const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& Y,
                                const std::vector<EvalFold>& folds,
                                const TrainOptions& opt) {
  auto grad_step = [&](const Eigen::MatrixXd& bx, const Eigen::MatrixXd& by,
                       Eigen::VectorXd& grads) {
    auto lg = net.zero_lstm_grads();
    auto dg = net.zero_decoder_grads();
    const double loss = net.loss_and_gradients(bx, by, lg, dg);
    grads = net.flatten_grads(lg, dg);
    return loss;
  };
  return train_network(net, grad_step, X, Y, folds, opt);
}

inline TrainResult train_fnn(FnnNet& net, const Eigen::MatrixXd& X,
                             const Eigen::MatrixXd& Y,
                             const std::vector<EvalFold>& folds,
                             const TrainOptions& opt) {
  auto grad_step = [&](const Eigen::MatrixXd& bx, const Eigen::MatrixXd& by,
                       Eigen::VectorXd& grads) {
    auto g = net.zero_grads();
    const double loss = net.loss_and_gradients(bx, by, g);
    grads = net.flatten_grads(g);
    return loss;
  };
  return train_network(net, grad_step, X, Y, folds, opt);
}

// --- checkpointing: JSON header + float64 parameter payload ---

inline void save_encdec(const EncDecNet& net, const std::string& header_path) {
  namespace fs = std::filesystem;
  const auto& cfg = net.config();
  const auto payload_name = fs::path(header_path).stem().string() + ".f64";
  nlohmann::json j{{"kind", "encdec"},
                   {"steps", cfg.steps},
                   {"input_width", cfg.input_width},
                   {"hidden", cfg.hidden},
                   {"lstm_layers", cfg.lstm_layers},
                   {"decoder_hidden", cfg.decoder_hidden},
                   {"output_width", cfg.output_width},
                   {"wiring", wiring_name(cfg.wiring)},
                   {"payload", payload_name}};
  const auto dir = fs::path(header_path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  std::ofstream out(header_path);
  if (!out) throw DataError("cannot open for writing: " + header_path);
  out << j.dump(2) << "\n";
  const Eigen::VectorXd flat = net.flatten();
  write_f64_payload((dir / payload_name).string(),
                    std::vector<double>(flat.data(), flat.data() + flat.size()));
}

inline EncDecNet load_encdec(const std::string& header_path) {
  std::ifstream in(header_path);
  if (!in) throw DataError("cannot open checkpoint: " + header_path);
  nlohmann::json j;
  in >> j;
  if (j.at("kind").get<std::string>() != "encdec")
    throw DataError("checkpoint is not an encoder-decoder model");
  EncDecConfig cfg;
  cfg.steps = j.at("steps").get<int>();
  cfg.input_width = j.at("input_width").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.lstm_layers = j.at("lstm_layers").get<int>();
  cfg.decoder_hidden = j.at("decoder_hidden").get<int>();
  cfg.output_width = j.at("output_width").get<int>();
  cfg.wiring = j.at("wiring").get<std::string>() == "last_step"
                   ? Wiring::last_step
                   : Wiring::all_steps;
  Rng rng(0);
  EncDecNet net(cfg, rng);
  const auto payload =
      read_f64_payload((std::filesystem::path(header_path).parent_path() /
                        j.at("payload").get<std::string>())
                           .string());
  net.unflatten(Eigen::Map<const Eigen::VectorXd>(
      payload.data(), static_cast<Eigen::Index>(payload.size())));
  return net;
}

/// Write `epoch,train_mse,val_skill` rows.
inline void save_history_csv(const std::vector<EpochRecord>& history,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "epoch,train_mse,val_skill\n";
  char buf[64];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g", r.epoch, r.train_mse,
                  r.val_skill);
    out << buf << "\n";
  }
}

}  // namespace ssf
