#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rtsac/graph.hpp"
#include "rtsac/rng.hpp"
#include "rtsac/tensor.hpp"

namespace rtsac::nn {

// Network sizing plus the fixed input conditioning. Proprioception enters the
// heads as (raw - offset) * scale so all features live on comparable ranges.
struct NetConfig {
  int img_h = 24;
  int img_w = 32;
  int in_channels = 9;  // three stacked RGB frames
  int conv1_filters = 8;
  int conv2_filters = 16;
  int hidden = 128;
  int action_dim = 5;
  int proprio_dim = 15;
  std::vector<double> proprio_offset;  // size proprio_dim (default zeros)
  std::vector<double> proprio_scale;   // size proprio_dim (default ones)
  double action_scale = 0.7;
  double log_std_min = -10.0;
  double log_std_max = 2.0;
  bool twin_critics = true;

  int conv1_out_h() const { return (img_h - 3) / 2 + 1; }
  int conv1_out_w() const { return (img_w - 3) / 2 + 1; }
  int conv2_out_h() const { return (conv1_out_h() - 3) / 2 + 1; }
  int conv2_out_w() const { return (conv1_out_w() - 3) / 2 + 1; }
  int coord_dim() const { return 2 * conv2_filters; }
  int feature_dim() const { return coord_dim() + proprio_dim; }

  void validate() const {
    if (img_h < 7 || img_w < 7)
      throw std::invalid_argument("NetConfig: image too small for the conv stack");
    if (conv2_out_h() < 1 || conv2_out_w() < 1)
      throw std::invalid_argument("NetConfig: conv stack does not fit image");
    if (action_dim < 1 || action_dim > 8)
      throw std::invalid_argument("NetConfig: action_dim out of range");
  }
};

template <class S>
struct MlpT {
  TensorT<S> w1, b1, w2, b2, w3, b3;

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w1", w1);
    f(prefix + ".b1", b1);
    f(prefix + ".w2", w2);
    f(prefix + ".b2", b2);
    f(prefix + ".w3", w3);
    f(prefix + ".b3", b3);
  }
};

template <class S>
struct EncoderT {
  TensorT<S> k1, b1, k2, b2;

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".k1", k1);
    f(prefix + ".b1", b1);
    f(prefix + ".k2", k2);
    f(prefix + ".b2", b2);
  }
};

// All weights of one agent: conv encoder (owned by the critics), twin Q
// heads, policy head, and Polyak-averaged target copies of encoder and Q
// heads. version increases by one per gradient update.
template <class S>
struct ParameterSetT {
  EncoderT<S> enc;
  MlpT<S> q1, q2;
  MlpT<S> policy;
  EncoderT<S> tgt_enc;
  MlpT<S> tgt_q1, tgt_q2;
  std::uint64_t version = 0;

  template <class F>
  void for_each_critic(F&& f) {
    enc.for_each("enc", f);
    q1.for_each("q1", f);
    q2.for_each("q2", f);
  }
  template <class F>
  void for_each_policy(F&& f) {
    policy.for_each("policy", f);
  }
  template <class F>
  void for_each_target(F&& f) {
    tgt_enc.for_each("tgt_enc", f);
    tgt_q1.for_each("tgt_q1", f);
    tgt_q2.for_each("tgt_q2", f);
  }
  template <class F>
  void for_each(F&& f) {
    for_each_critic(f);
    for_each_policy(f);
    for_each_target(f);
  }
};

using ParameterSet = ParameterSetT<float>;

namespace detail {

template <class S>
TensorT<S> init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  TensorT<S> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <class S>
MlpT<S> init_mlp(int in, int hidden, int out, Rng& rng) {
  MlpT<S> m;
  m.w1 = init_uniform<S>({hidden, in}, in, rng);
  m.b1 = init_uniform<S>({hidden}, in, rng);
  m.w2 = init_uniform<S>({hidden, hidden}, hidden, rng);
  m.b2 = init_uniform<S>({hidden}, hidden, rng);
  m.w3 = init_uniform<S>({out, hidden}, hidden, rng);
  m.b3 = init_uniform<S>({out}, hidden, rng);
  return m;
}

}  // namespace detail

template <class S>
ParameterSetT<S> init_params(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParameterSetT<S> p;
  const int c1 = cfg.conv1_filters, c2 = cfg.conv2_filters;
  p.enc.k1 = detail::init_uniform<S>({c1, cfg.in_channels, 3, 3},
                                     cfg.in_channels * 9, rng);
  p.enc.b1 = detail::init_uniform<S>({c1}, cfg.in_channels * 9, rng);
  p.enc.k2 = detail::init_uniform<S>({c2, c1, 3, 3}, c1 * 9, rng);
  p.enc.b2 = detail::init_uniform<S>({c2}, c1 * 9, rng);
  p.q1 = detail::init_mlp<S>(cfg.feature_dim() + cfg.action_dim, cfg.hidden, 1, rng);
  p.q2 = detail::init_mlp<S>(cfg.feature_dim() + cfg.action_dim, cfg.hidden, 1, rng);
  p.policy = detail::init_mlp<S>(cfg.feature_dim(), cfg.hidden,
                                 2 * cfg.action_dim, rng);
  p.tgt_enc = p.enc;
  p.tgt_q1 = p.q1;
  p.tgt_q2 = p.q2;
  p.version = 0;
  return p;
}

// ---------------------------------------------------------------------------
// No-grad forward paths (inference, targets). Same kernels as training.

template <class S>
TensorT<S> encode_nograd(const EncoderT<S>& enc, const TensorT<S>& images) {
  auto h1 = kernels::conv2d_forward(images, enc.k1, enc.b1, 2);
  for (auto& v : h1.data) v = v > S(0) ? v : S(0);
  auto h2 = kernels::conv2d_forward(h1, enc.k2, enc.b2, 2);
  for (auto& v : h2.data) v = v > S(0) ? v : S(0);
  return kernels::spatial_softmax_forward(h2).first;
}

template <class S>
TensorT<S> normalize_proprio(const NetConfig& cfg, const TensorT<S>& raw) {
  TensorT<S> out = raw;
  const int B = raw.dim(0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < cfg.proprio_dim; ++i) {
      const double off = cfg.proprio_offset.empty() ? 0.0 : cfg.proprio_offset[i];
      const double sc = cfg.proprio_scale.empty() ? 1.0 : cfg.proprio_scale[i];
      out.at2(b, i) = static_cast<S>((raw.at2(b, i) - off) * sc);
    }
  return out;
}

template <class S>
TensorT<S> concat_cols_nograd(const TensorT<S>& a, const TensorT<S>& b) {
  const int B = a.dim(0), n1 = a.dim(1), n2 = b.dim(1);
  TensorT<S> out({B, n1 + n2});
  for (int r = 0; r < B; ++r) {
    for (int c = 0; c < n1; ++c) out.at2(r, c) = a.at2(r, c);
    for (int c = 0; c < n2; ++c) out.at2(r, n1 + c) = b.at2(r, c);
  }
  return out;
}

// coords ++ normalized proprioception
template <class S>
TensorT<S> features_nograd(const NetConfig& cfg, const EncoderT<S>& enc,
                           const TensorT<S>& images, const TensorT<S>& proprio_raw) {
  return concat_cols_nograd(encode_nograd(enc, images),
                            normalize_proprio(cfg, proprio_raw));
}

template <class S>
TensorT<S> mlp_nograd(const MlpT<S>& m, const TensorT<S>& x) {
  auto h1 = kernels::linear_forward(x, m.w1, m.b1);
  for (auto& v : h1.data) v = v > S(0) ? v : S(0);
  auto h2 = kernels::linear_forward(h1, m.w2, m.b2);
  for (auto& v : h2.data) v = v > S(0) ? v : S(0);
  return kernels::linear_forward(h2, m.w3, m.b3);
}

// mean, log_std (clamped) for a batch of feature rows
template <class S>
std::pair<TensorT<S>, TensorT<S>> policy_forward_nograd(const NetConfig& cfg,
                                                        const MlpT<S>& pol,
                                                        const TensorT<S>& feat) {
  auto out = mlp_nograd(pol, feat);
  const int B = out.dim(0), A = cfg.action_dim;
  TensorT<S> mean({B, A}), log_std({B, A});
  for (int b = 0; b < B; ++b)
    for (int a = 0; a < A; ++a) {
      mean.at2(b, a) = out.at2(b, a);
      S ls = out.at2(b, A + a);
      ls = std::min(static_cast<S>(cfg.log_std_max),
                    std::max(static_cast<S>(cfg.log_std_min), ls));
      log_std.at2(b, a) = ls;
    }
  return {std::move(mean), std::move(log_std)};
}

// Per-dimension log density of action = scale * tanh(u), u = mean + std*eps,
// with the tanh change-of-variables correction. Summed over dimensions.
template <class S>
S squashed_gaussian_logprob(const S* mean, const S* log_std, const S* u,
                            int dims, S scale) {
  constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)
  double lp = 0;
  for (int d = 0; d < dims; ++d) {
    const double std = std::exp(static_cast<double>(log_std[d]));
    const double eps = (static_cast<double>(u[d]) - mean[d]) / std;
    lp += -0.5 * eps * eps - static_cast<double>(log_std[d]) - kHalfLog2Pi;
    // log d(a)/d(u) = log(scale) + log(1 - tanh(u)^2), in the stable form
    const double uu = static_cast<double>(u[d]);
    lp -= std::log(static_cast<double>(scale)) +
          2.0 * (std::log(2.0) - uu - kernels::softplus(-2.0 * uu));
  }
  return static_cast<S>(lp);
}

// Samples one action row. stochastic=false takes eps = 0 (tanh mean).
// Returns the pre-squash u so callers can evaluate the density.
template <class S>
struct ActionSample {
  std::array<S, 8> u;       // pre-squash, action_dim entries used
  std::array<S, 8> action;  // scale * tanh(u)
  S log_prob;
};

template <class S>
ActionSample<S> sample_action_row(const NetConfig& cfg, const TensorT<S>& mean,
                                  const TensorT<S>& log_std, int row, Rng& rng,
                                  bool stochastic) {
  ActionSample<S> out{};
  const int A = cfg.action_dim;
  std::array<S, 8> m{}, ls{};
  for (int d = 0; d < A; ++d) {
    m[d] = mean.at2(row, d);
    ls[d] = log_std.at2(row, d);
    const S eps = stochastic ? static_cast<S>(rng.normal()) : S(0);
    out.u[d] = m[d] + std::exp(ls[d]) * eps;
    out.action[d] =
        static_cast<S>(cfg.action_scale) * std::tanh(out.u[d]);
  }
  out.log_prob = squashed_gaussian_logprob(m.data(), ls.data(), out.u.data(), A,
                                           static_cast<S>(cfg.action_scale));
  return out;
}

// ---------------------------------------------------------------------------
// Graph-side builders.

template <class S>
struct MlpVars {
  typename GraphT<S>::Var w1, b1, w2, b2, w3, b3;

  static MlpVars bind(GraphT<S>& g, const MlpT<S>& m, bool trainable) {
    MlpVars v;
    v.w1 = trainable ? g.param(m.w1) : g.constant(m.w1);
    v.b1 = trainable ? g.param(m.b1) : g.constant(m.b1);
    v.w2 = trainable ? g.param(m.w2) : g.constant(m.w2);
    v.b2 = trainable ? g.param(m.b2) : g.constant(m.b2);
    v.w3 = trainable ? g.param(m.w3) : g.constant(m.w3);
    v.b3 = trainable ? g.param(m.b3) : g.constant(m.b3);
    return v;
  }
};

template <class S>
struct EncoderVars {
  typename GraphT<S>::Var k1, b1, k2, b2;

  static EncoderVars bind(GraphT<S>& g, const EncoderT<S>& e, bool trainable) {
    EncoderVars v;
    v.k1 = trainable ? g.param(e.k1) : g.constant(e.k1);
    v.b1 = trainable ? g.param(e.b1) : g.constant(e.b1);
    v.k2 = trainable ? g.param(e.k2) : g.constant(e.k2);
    v.b2 = trainable ? g.param(e.b2) : g.constant(e.b2);
    return v;
  }
};

template <class S>
typename GraphT<S>::Var encode_graph(GraphT<S>& g, const EncoderVars<S>& e,
                                     typename GraphT<S>::Var images) {
  auto h1 = g.relu(g.conv2d(images, e.k1, e.b1, 2));
  auto h2 = g.relu(g.conv2d(h1, e.k2, e.b2, 2));
  return g.spatial_softmax(h2);
}

template <class S>
typename GraphT<S>::Var mlp_graph(GraphT<S>& g, const MlpVars<S>& m,
                                  typename GraphT<S>::Var x) {
  auto h1 = g.relu(g.linear(x, m.w1, m.b1));
  auto h2 = g.relu(g.linear(h1, m.w2, m.b2));
  return g.linear(h2, m.w3, m.b3);
}

// ---------------------------------------------------------------------------
// Checkpoints: flat little-endian binary, float32 payload, shape table.

void save_checkpoint(const std::string& path, ParameterSet& params);
ParameterSet load_checkpoint(const std::string& path);

// FNV-1a over the float32 bit patterns of every tensor plus the version.
template <class S>
std::uint64_t params_checksum(ParameterSetT<S>& p) {
  std::uint64_t h = 1469598103934665603ull;
  auto eat = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  p.for_each([&](const std::string&, TensorT<S>& t) {
    for (S v : t.data) {
      const float f = static_cast<float>(v);
      eat(&f, sizeof(f));
    }
  });
  eat(&p.version, sizeof(p.version));
  return h;
}

}  // namespace rtsac::nn
