#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sennet/errors.hpp"
#include "sennet/linalg.hpp"
#include "sennet/rng.hpp"

namespace sennet {

constexpr double kProbClamp = 1e-12;

// Dense layer with linear activation. The projection stacks these.
struct DenseLayer {
  Matrix weights;  // out_dim x in_dim
  Vec bias;        // out_dim

  std::size_t in_dim() const { return weights.cols; }
  std::size_t out_dim() const { return weights.rows; }
};

// Near-identity initialization: identity on the leading diagonal plus small
// Gaussian noise. The projection starts close to a no-op, so the embedding
// geometry is preserved until the objective reshapes it.
inline DenseLayer make_layer(std::size_t out_dim, std::size_t in_dim, Rng& rng, double noise = 0.01) {
  DenseLayer layer;
  layer.weights = Matrix(out_dim, in_dim);
  layer.bias = Vec(out_dim, 0.0);
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < in_dim; ++c) layer.weights(r, c) = (r == c ? 1.0 : 0.0) + rng.normal(0.0, noise);
  return layer;
}

// Intermediates of one projection forward pass, consumed by backward.
struct ForwardTrace {
  std::vector<Vec> activations;  // h_0 = x, then each affine output
  double pre_norm_len = 0.0;
  Vec output;  // l2-normalized top activation

  bool valid() const { return !activations.empty(); }
};

struct LayerGrads {
  Matrix dw;
  Vec db;
};

// The trainable projection phi(x) = l2_normalize(L_n(...L_1(x))).
// Layers are appended one at a time during sequential training;
// trained_depth counts how many have finished training.
class ProjectionNetwork {
 public:
  std::vector<DenseLayer> layers;
  std::size_t trained_depth = 0;

  std::size_t input_dim(std::size_t fallback = 0) const {
    return layers.empty() ? fallback : layers.front().in_dim();
  }
  std::size_t output_dim(std::size_t input) const { return layers.empty() ? input : layers.back().out_dim(); }

  ForwardTrace forward_trace(const Vec& x) const {
    if (!layers.empty() && x.size() != layers.front().in_dim())
      throw DimMismatchError("forward_projection: input dim " + std::to_string(x.size()) + " != layer dim " +
                             std::to_string(layers.front().in_dim()));
    ForwardTrace trace;
    trace.activations.reserve(layers.size() + 1);
    trace.activations.push_back(x);
    for (const auto& layer : layers) trace.activations.push_back(affine(layer.weights, layer.bias, trace.activations.back()));
    const Vec& top = trace.activations.back();
    trace.pre_norm_len = norm2(top);
    if (!(trace.pre_norm_len >= kZeroVectorNorm))
      throw ZeroVectorError("forward_projection: projected vector collapsed to zero");
    trace.output.resize(top.size());
    for (std::size_t i = 0; i < top.size(); ++i) trace.output[i] = top[i] / trace.pre_norm_len;
    return trace;
  }

  Vec forward(const Vec& x) const { return forward_trace(x).output; }

  std::vector<LayerGrads> make_grad_accumulators(std::size_t first_trainable) const {
    std::vector<LayerGrads> grads(layers.size());
    for (std::size_t j = first_trainable; j < layers.size(); ++j) {
      grads[j].dw = Matrix(layers[j].out_dim(), layers[j].in_dim());
      grads[j].db = Vec(layers[j].out_dim(), 0.0);
    }
    return grads;
  }

  // Accumulates scale * dL/d(params of layers >= first_trainable) given
  // dL/dphi. Chains through the l2 normalization first:
  //   dL/dz = (dL/dphi - phi (phi . dL/dphi)) / ||z||
  void backward_into(const ForwardTrace& trace, const Vec& dphi, std::size_t first_trainable, double scale,
                     std::vector<LayerGrads>& accum) const {
    if (!trace.valid()) throw NoForwardStateError("backward: no recorded forward state");
    if (layers.empty()) return;
    Vec delta(trace.output.size());
    const double proj = dot(trace.output, dphi);
    for (std::size_t i = 0; i < delta.size(); ++i)
      delta[i] = (dphi[i] - trace.output[i] * proj) / trace.pre_norm_len;
    for (std::size_t j = layers.size(); j-- > first_trainable;) {
      add_outer(accum[j].dw, scale, delta, trace.activations[j]);
      axpy(scale, delta, accum[j].db);
      if (j > first_trainable) delta = matvec_transposed(layers[j].weights, delta);
    }
  }
};

inline std::vector<Vec> apply_projection(const ProjectionNetwork& net, const std::vector<Vec>& xs) {
  std::vector<Vec> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(net.forward(x));
  return out;
}

// ---------------------------------------------------------------------------
// Softmax head
// ---------------------------------------------------------------------------

struct HeadGrads {
  Matrix dw;
  Vec db;
};

class SoftmaxHead {
 public:
  Matrix weights;  // class_count x in_dim
  Vec bias;
  int class_count = 0;

  std::size_t in_dim() const { return weights.cols; }

  static SoftmaxHead make(int classes, std::size_t in_dim, Rng& rng, double init_scale = 0.01) {
    SoftmaxHead head;
    head.class_count = classes;
    head.weights = Matrix(classes, in_dim);
    head.bias = Vec(classes, 0.0);
    for (auto& w : head.weights.data) w = rng.normal(0.0, init_scale);
    return head;
  }

  Vec logits(const Vec& z) const {
    if (z.size() != weights.cols)
      throw DimMismatchError("softmax_forward: input dim " + std::to_string(z.size()) + " != head dim " +
                             std::to_string(weights.cols));
    return affine(weights, bias, z);
  }

  // Probabilities with max-logit subtraction for stability.
  Vec forward(const Vec& z) const { return softmax(logits(z)); }

  static Vec softmax(const Vec& logit) {
    double m = logit[0];
    for (double l : logit) m = std::max(m, l);
    Vec p(logit.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logit.size(); ++i) {
      p[i] = std::exp(logit[i] - m);
      sum += p[i];
    }
    for (auto& x : p) x /= sum;
    return p;
  }

  HeadGrads make_grad_accumulator() const {
    return HeadGrads{Matrix(weights.rows, weights.cols), Vec(bias.size(), 0.0)};
  }

  // Accumulates scale * head parameter gradients given dL/dlogits; optionally
  // emits dL/dinput for backprop into the projection.
  void backward_into(const Vec& input, const Vec& dlogits, double scale, HeadGrads* accum, Vec* dinput) const {
    if (accum) {
      add_outer(accum->dw, scale, dlogits, input);
      axpy(scale, dlogits, accum->db);
    }
    if (dinput) {
      Vec g = matvec_transposed(weights, dlogits);
      axpy(scale, g, *dinput);
    }
  }
};

// dL/dlogits from dL/dp through the softmax Jacobian:
//   dl_j = p_j (g_j - g . p)
inline Vec softmax_vjp(const Vec& p, const Vec& dldp) {
  const double gp = dot(dldp, p);
  Vec dl(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) dl[i] = p[i] * (dldp[i] - gp);
  return dl;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Hinged triplet loss max(0, ||a-p||^2 - ||a-n||^2 + alpha). The hinge can be
// disabled for ablation runs.
inline double triplet_loss(const Vec& a, const Vec& p, const Vec& n, double alpha, bool hinge = true) {
  if (a.size() != p.size() || a.size() != n.size())
    throw DimMismatchError("triplet_loss: representation dimensions differ");
  const double raw = squared_distance(a, p) - squared_distance(a, n) + alpha;
  return hinge ? std::max(0.0, raw) : raw;
}

struct TripletGrad {
  double loss = 0.0;
  bool active = false;  // hinge active (nonzero gradient region)
  Vec da, dp, dn;
};

inline TripletGrad triplet_loss_grad(const Vec& a, const Vec& p, const Vec& n, double alpha, bool hinge = true) {
  TripletGrad g;
  g.loss = triplet_loss(a, p, n, alpha, hinge);
  g.active = !hinge || g.loss > 0.0;
  const std::size_t d = a.size();
  g.da.assign(d, 0.0);
  g.dp.assign(d, 0.0);
  g.dn.assign(d, 0.0);
  if (g.active) {
    for (std::size_t i = 0; i < d; ++i) {
      g.da[i] = 2.0 * (n[i] - p[i]);
      g.dp[i] = 2.0 * (p[i] - a[i]);
      g.dn[i] = 2.0 * (a[i] - n[i]);
    }
  }
  return g;
}

// Adversarial sensitive regularizer: log(1 + |target - p|). Zero exactly when
// the detector outputs the target probability for the fixed class.
inline double sensitive_regularizer(double p, double target = 0.9) {
  return std::log(1.0 + std::abs(target - p));
}

// d/dp of the regularizer; subgradient 0 at the |.| kink.
inline double sensitive_regularizer_grad(double p, double target = 0.9) {
  const double diff = target - p;
  if (diff == 0.0) return 0.0;
  const double sign = diff > 0.0 ? 1.0 : -1.0;
  return -sign / (1.0 + std::abs(diff));
}

inline double cross_entropy_loss(const Vec& p, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= p.size())
    throw BadLabelError("cross_entropy_loss: label " + std::to_string(label) + " out of range for " +
                        std::to_string(p.size()) + " classes");
  return -std::log(std::max(p[static_cast<std::size_t>(label)], kProbClamp));
}

// dL/dlogits for softmax + cross entropy: p - onehot(label). When the clamp
// is active the loss is locally constant, so the gradient is zero.
inline Vec cross_entropy_grad_logits(const Vec& p, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= p.size())
    throw BadLabelError("cross_entropy_grad: label out of range");
  Vec dl(p.size(), 0.0);
  if (p[static_cast<std::size_t>(label)] <= kProbClamp) return dl;
  dl = p;
  dl[static_cast<std::size_t>(label)] -= 1.0;
  return dl;
}

inline double bce_loss(double p_positive, int target) {
  const double p = p_positive;
  return -(target * std::log(std::max(p, kProbClamp)) + (1 - target) * std::log(std::max(1.0 - p, kProbClamp)));
}

inline double bce_grad_p(double p_positive, int target) {
  double g = 0.0;
  if (target == 1 && p_positive > kProbClamp) g -= 1.0 / p_positive;
  if (target == 0 && 1.0 - p_positive > kProbClamp) g += 1.0 / (1.0 - p_positive);
  return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamParams {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vec first_moment;
  Vec second_moment;
  long step_count = 0;
  AdamParams params;

  AdamState() = default;
  AdamState(std::size_t size, AdamParams p) : first_moment(size, 0.0), second_moment(size, 0.0), params(p) {}
};

// Standard Adam with bias correction, in place over a flat parameter vector.
inline void adam_step(AdamState& state, double* params, std::size_t size, const double* grads,
                      std::size_t grad_size) {
  if (size != grad_size || size != state.first_moment.size())
    throw ShapeMismatchError("adam_step: parameter/gradient/state sizes differ");
  state.step_count += 1;
  const double b1 = state.params.beta1, b2 = state.params.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < size; ++i) {
    const double g = grads[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (1.0 - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    const double mhat = state.first_moment[i] / bc1;
    const double vhat = state.second_moment[i] / bc2;
    params[i] -= state.params.learning_rate * mhat / (std::sqrt(vhat) + state.params.epsilon);
  }
}

inline void adam_step(AdamState& state, Vec& params, const Vec& grads) {
  adam_step(state, params.data(), params.size(), grads.data(), grads.size());
}

inline void adam_step(AdamState& state, Matrix& params, const Matrix& grads) {
  if (!params.same_shape(grads)) throw ShapeMismatchError("adam_step: matrix shapes differ");
  adam_step(state, params.data.data(), params.data.size(), grads.data.data(), grads.data.size());
}

// ---------------------------------------------------------------------------
// Softmax head training (cross entropy + Adam)
// ---------------------------------------------------------------------------

struct HeadTrainConfig {
  int epochs = 150;
  std::size_t batch_size = 128;
  AdamParams adam;
  double init_scale = 0.01;
  double l2 = 0.0;  // weight decay on the head weights
};

inline double head_accuracy(const SoftmaxHead& head, const std::vector<Vec>& xs, const std::vector<int>& ys) {
  if (xs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Vec logit = head.logits(xs[i]);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < logit.size(); ++c)
      if (logit[c] > logit[arg]) arg = c;
    if (static_cast<int>(arg) == ys[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(xs.size());
}

// Trains a fresh softmax head on fixed representations. Deterministic given
// the RNG state: seeded init and seeded batch order.
inline SoftmaxHead train_softmax_head(const std::vector<Vec>& xs, const std::vector<int>& ys, int classes,
                                      const HeadTrainConfig& cfg, Rng& rng) {
  if (xs.empty()) throw MissingLabelsError("train_softmax_head: no samples");
  if (xs.size() != ys.size()) throw ShapeMismatchError("train_softmax_head: sample/label counts differ");
  SoftmaxHead head = SoftmaxHead::make(classes, xs[0].size(), rng, cfg.init_scale);
  AdamState state_w(head.weights.data.size(), cfg.adam);
  AdamState state_b(head.bias.size(), cfg.adam);
  const std::size_t n = xs.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      HeadGrads grads = head.make_grad_accumulator();
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Vec p = head.forward(xs[i]);
        const Vec dlogits = cross_entropy_grad_logits(p, ys[i]);
        head.backward_into(xs[i], dlogits, scale, &grads, nullptr);
      }
      if (cfg.l2 > 0)
        for (std::size_t i = 0; i < grads.dw.data.size(); ++i) grads.dw.data[i] += cfg.l2 * head.weights.data[i];
      adam_step(state_w, head.weights, grads.dw);
      adam_step(state_b, head.bias, grads.db);
    }
  }
  return head;
}

}  // namespace sennet
