#ifndef GBIAS_LSTM_HPP
#define GBIAS_LSTM_HPP

// Dense LSTM stack with softmax output, templated on the scalar type.
// Activations are laid out column-per-(time, batch) pair: column t * B + b
// holds time step t of batch lane b.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gbias {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Token ids, one row per batch lane and one column per time step.
using IdBlock = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct LstmLayer {
  MatrixX<Scalar> w_input;      // 4H x in; row blocks are gates i, f, g, o
  MatrixX<Scalar> w_recurrent;  // 4H x H
  VectorX<Scalar> bias;         // 4H

  Eigen::Index hidden() const { return w_recurrent.cols(); }
};

template <typename Scalar>
struct LstmParameters {
  MatrixX<Scalar> embedding;  // emb_dim x |V|; column w embeds word w
  std::vector<LstmLayer<Scalar>> layers;
  MatrixX<Scalar> out_weight;  // |V| x H
  VectorX<Scalar> out_bias;    // |V|

  static LstmParameters zeros(Eigen::Index vocab, Eigen::Index emb_dim, Eigen::Index hidden, int num_layers) {
    LstmParameters p;
    p.embedding = MatrixX<Scalar>::Zero(emb_dim, vocab);
    for (int l = 0; l < num_layers; ++l) {
      const Eigen::Index in = l == 0 ? emb_dim : hidden;
      p.layers.push_back({MatrixX<Scalar>::Zero(4 * hidden, in), MatrixX<Scalar>::Zero(4 * hidden, hidden),
                          VectorX<Scalar>::Zero(4 * hidden)});
    }
    p.out_weight = MatrixX<Scalar>::Zero(vocab, hidden);
    p.out_bias = VectorX<Scalar>::Zero(vocab);
    return p;
  }

  Eigen::Index vocab_size() const { return out_weight.rows(); }
  Eigen::Index emb_dim() const { return embedding.rows(); }
  Eigen::Index hidden() const { return out_weight.cols(); }
  int num_layers() const { return static_cast<int>(layers.size()); }

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f(std::string("embedding"), embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "lstm" + std::to_string(l) + ".";
      f(prefix + "w_input", layers[l].w_input);
      f(prefix + "w_recurrent", layers[l].w_recurrent);
      f(prefix + "bias", layers[l].bias);
    }
    f(std::string("out_weight"), out_weight);
    f(std::string("out_bias"), out_bias);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<LstmParameters*>(this)->for_each([&](const std::string& name, const auto& t) { f(name, t); });
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  void set_zero() {
    for_each([](const std::string&, auto& t) { t.setZero(); });
  }
};

template <typename Scalar>
struct LstmState {
  std::vector<MatrixX<Scalar>> h;  // per layer, H x B
  std::vector<MatrixX<Scalar>> c;

  static LstmState zeros(int num_layers, Eigen::Index hidden, Eigen::Index batch) {
    LstmState s;
    for (int l = 0; l < num_layers; ++l) {
      s.h.push_back(MatrixX<Scalar>::Zero(hidden, batch));
      s.c.push_back(MatrixX<Scalar>::Zero(hidden, batch));
    }
    return s;
  }
};

/// Inverted dropout: kept units are scaled by 1 / (1 - rate).
template <typename Scalar>
struct Dropout {
  Scalar rate = Scalar(0);
  std::mt19937_64* rng = nullptr;

  bool active() const { return rng != nullptr && rate > Scalar(0); }

  MatrixX<Scalar> mask(Eigen::Index rows, Eigen::Index cols) const {
    MatrixX<Scalar> m(rows, cols);
    const Scalar keep = Scalar(1) / (Scalar(1) - rate);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
      m.data()[i] = u < static_cast<double>(rate) ? Scalar(0) : keep;
    }
    return m;
  }
};

/// Everything the backward pass needs from one forward window.
template <typename Scalar>
struct ForwardCache {
  Eigen::Index steps = 0;
  Eigen::Index batch = 0;
  IdBlock inputs;
  std::vector<MatrixX<Scalar>> layer_input;  // per layer, after dropout
  std::vector<MatrixX<Scalar>> input_mask;   // empty when dropout inactive
  std::vector<MatrixX<Scalar>> gates;        // 4H x TB, post-activation
  std::vector<MatrixX<Scalar>> cell;         // H x TB
  std::vector<MatrixX<Scalar>> cell_tanh;    // H x TB
  std::vector<MatrixX<Scalar>> hidden;       // H x TB
  std::vector<MatrixX<Scalar>> h0;           // initial state per layer
  std::vector<MatrixX<Scalar>> c0;
  MatrixX<Scalar> log_probs;                 // |V| x TB
};

namespace detail {

template <typename Derived>
auto logistic(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

// Columns [0, B) hold the initial state, followed by all but the last step.
template <typename Scalar>
MatrixX<Scalar> shifted(const MatrixX<Scalar>& initial, const MatrixX<Scalar>& sequence, Eigen::Index batch) {
  MatrixX<Scalar> out(sequence.rows(), sequence.cols());
  out.leftCols(batch) = initial;
  out.rightCols(sequence.cols() - batch) = sequence.leftCols(sequence.cols() - batch);
  return out;
}

}  // namespace detail

/// Runs the network over `inputs` (B x T) starting from `state`, which is
/// replaced by the final state. Fills `cache.log_probs` with per-column
/// log-softmax distributions over the vocabulary.
template <typename Scalar>
void lstm_forward(const LstmParameters<Scalar>& p, const IdBlock& inputs, LstmState<Scalar>& state,
                  ForwardCache<Scalar>& cache, const Dropout<Scalar>& dropout = {}) {
  const Eigen::Index B = inputs.rows();
  const Eigen::Index T = inputs.cols();
  const Eigen::Index TB = T * B;
  const int L = p.num_layers();
  cache.steps = T;
  cache.batch = B;
  cache.inputs = inputs;
  cache.layer_input.assign(static_cast<std::size_t>(L), {});
  cache.input_mask.assign(static_cast<std::size_t>(L), {});
  cache.gates.assign(static_cast<std::size_t>(L), {});
  cache.cell.assign(static_cast<std::size_t>(L), {});
  cache.cell_tanh.assign(static_cast<std::size_t>(L), {});
  cache.hidden.assign(static_cast<std::size_t>(L), {});
  cache.h0 = state.h;
  cache.c0 = state.c;

  MatrixX<Scalar> x(p.emb_dim(), TB);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) x.col(t * B + b) = p.embedding.col(inputs(b, t));
  }

  for (int l = 0; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const LstmLayer<Scalar>& layer = p.layers[li];
    const Eigen::Index H = layer.hidden();
    if (dropout.active()) {
      cache.input_mask[li] = dropout.mask(x.rows(), x.cols());
      x.array() *= cache.input_mask[li].array();
    }
    cache.layer_input[li] = std::move(x);

    MatrixX<Scalar>& gates = cache.gates[li];
    gates.noalias() = layer.w_input * cache.layer_input[li];
    gates.colwise() += layer.bias;
    MatrixX<Scalar>& cell = cache.cell[li];
    MatrixX<Scalar>& cell_tanh = cache.cell_tanh[li];
    MatrixX<Scalar>& hidden = cache.hidden[li];
    cell.resize(H, TB);
    cell_tanh.resize(H, TB);
    hidden.resize(H, TB);

    MatrixX<Scalar> h_prev = state.h[li];
    MatrixX<Scalar> c_prev = state.c[li];
    for (Eigen::Index t = 0; t < T; ++t) {
      auto z = gates.middleCols(t * B, B);
      z.noalias() += layer.w_recurrent * h_prev;
      z.topRows(2 * H) = detail::logistic(z.topRows(2 * H).array()).matrix();
      z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
      z.bottomRows(H) = detail::logistic(z.bottomRows(H).array()).matrix();

      auto c = cell.middleCols(t * B, B);
      c = z.middleRows(H, H).cwiseProduct(c_prev) + z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
      auto ct = cell_tanh.middleCols(t * B, B);
      ct = c.array().tanh().matrix();
      auto h = hidden.middleCols(t * B, B);
      h = z.bottomRows(H).cwiseProduct(ct);
      h_prev = h;
      c_prev = c;
    }
    state.h[li] = std::move(h_prev);
    state.c[li] = std::move(c_prev);
    x = hidden;
  }

  MatrixX<Scalar>& lp = cache.log_probs;
  lp.noalias() = p.out_weight * cache.hidden.back();
  lp.colwise() += p.out_bias;
  for (Eigen::Index j = 0; j < TB; ++j) {
    auto col = lp.col(j);
    const Scalar m = col.maxCoeff();
    const Scalar lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
}

/// Sum over columns of -log p(target). `targets` has the shape of the inputs.
template <typename Scalar>
Scalar lstm_nll(const ForwardCache<Scalar>& cache, const IdBlock& targets) {
  Scalar total = Scalar(0);
  for (Eigen::Index t = 0; t < cache.steps; ++t) {
    for (Eigen::Index b = 0; b < cache.batch; ++b) total -= cache.log_probs(targets(b, t), t * cache.batch + b);
  }
  return total;
}

/// Accumulates into `grads` the gradient of scale * sum(-log p(target)).
/// No gradient flows into the initial state (truncated BPTT).
template <typename Scalar>
void lstm_backward(const LstmParameters<Scalar>& p, const ForwardCache<Scalar>& cache, const IdBlock& targets,
                   Scalar scale, LstmParameters<Scalar>& grads, bool embedding_grad = true) {
  const Eigen::Index B = cache.batch;
  const Eigen::Index T = cache.steps;
  const int L = p.num_layers();

  MatrixX<Scalar> d_logits = cache.log_probs.array().exp().matrix();
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) d_logits(targets(b, t), t * B + b) -= Scalar(1);
  }
  d_logits *= scale;
  grads.out_weight.noalias() += d_logits * cache.hidden.back().transpose();
  grads.out_bias += d_logits.rowwise().sum();
  MatrixX<Scalar> d_hidden = p.out_weight.transpose() * d_logits;

  for (int l = L - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const LstmLayer<Scalar>& layer = p.layers[li];
    LstmLayer<Scalar>& glayer = grads.layers[li];
    const Eigen::Index H = layer.hidden();
    const MatrixX<Scalar>& gates = cache.gates[li];
    const MatrixX<Scalar> c_prev_all = detail::shifted(cache.c0[li], cache.cell[li], B);

    MatrixX<Scalar> d_pre(4 * H, T * B);
    MatrixX<Scalar> dh_next = MatrixX<Scalar>::Zero(H, B);
    MatrixX<Scalar> dc_next = MatrixX<Scalar>::Zero(H, B);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const auto cols = [&](const MatrixX<Scalar>& m) { return m.middleCols(t * B, B).array(); };
      const auto g = gates.middleCols(t * B, B).array();
      const auto gi = g.topRows(H);
      const auto gf = g.middleRows(H, H);
      const auto gg = g.middleRows(2 * H, H);
      const auto go = g.bottomRows(H);
      const auto ct = cols(cache.cell_tanh[li]);

      const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> dh = cols(d_hidden) + dh_next.array();
      const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> dc =
          dh * go * (Scalar(1) - ct.square()) + dc_next.array();

      auto dz = d_pre.middleCols(t * B, B);
      dz.topRows(H) = (dc * gg * gi * (Scalar(1) - gi)).matrix();
      dz.middleRows(H, H) = (dc * cols(c_prev_all) * gf * (Scalar(1) - gf)).matrix();
      dz.middleRows(2 * H, H) = (dc * gi * (Scalar(1) - gg.square())).matrix();
      dz.bottomRows(H) = (dh * ct * go * (Scalar(1) - go)).matrix();

      dc_next = (dc * gf).matrix();
      dh_next.noalias() = layer.w_recurrent.transpose() * dz;
    }

    const MatrixX<Scalar> h_prev_all = detail::shifted(cache.h0[li], cache.hidden[li], B);
    glayer.w_recurrent.noalias() += d_pre * h_prev_all.transpose();
    glayer.w_input.noalias() += d_pre * cache.layer_input[li].transpose();
    glayer.bias += d_pre.rowwise().sum();

    if (l == 0 && !embedding_grad) break;
    MatrixX<Scalar> d_input = layer.w_input.transpose() * d_pre;
    if (cache.input_mask[li].size() > 0) d_input.array() *= cache.input_mask[li].array();
    if (l > 0) {
      d_hidden = std::move(d_input);
    } else {
      for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index b = 0; b < B; ++b) grads.embedding.col(cache.inputs(b, t)) += d_input.col(t * B + b);
      }
    }
  }
}

}  // namespace gbias

#endif  // GBIAS_LSTM_HPP
