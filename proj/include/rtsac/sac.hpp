#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rtsac/adam.hpp"
#include "rtsac/graph.hpp"
#include "rtsac/nets.hpp"
#include "rtsac/replay.hpp"
#include "rtsac/rng.hpp"

namespace rtsac::sac {

template <class S>
struct SacConfigT {
  S gamma = S(0.99);
  S alpha_ent = S(0.1);  // fixed entropy temperature
  S tau = S(0.005);
  S critic_lr = S(3e-4);
  S policy_lr = S(3e-4);
  int value_samples = 1;  // next-action samples per transition in the target
};

using SacConfig = SacConfigT<float>;

template <class S>
struct UpdateMetrics {
  S q_loss = 0;
  S policy_loss = 0;
  S mean_q = 0;
  S entropy = 0;  // mean of -log pi over the batch
  bool aborted = false;
};

// Q(s, a) for one head, no gradients. Actions are fed normalized by the
// action scale so every head input lives on [-1, 1]-ish ranges.
template <class S>
std::vector<S> q_nograd(const nn::NetConfig& ncfg, const nn::MlpT<S>& head,
                        const nn::TensorT<S>& feat,
                        const nn::TensorT<S>& action) {
  const int B = feat.dim(0);
  nn::TensorT<S> a = action;
  for (auto& v : a.data) v /= static_cast<S>(ncfg.action_scale);
  auto q = nn::mlp_nograd(head, nn::concat_cols_nograd(feat, a));
  std::vector<S> out(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) out[static_cast<std::size_t>(b)] = q.at2(b, 0);
  return out;
}

// Soft state-value of the next observations: sample a' from the current
// policy, evaluate the target critics, subtract the entropy term. No part of
// this computation is recorded for gradients.
template <class S>
std::vector<S> soft_value_target(const nn::NetConfig& ncfg,
                                 nn::ParameterSetT<S>& p,
                                 const replay::BatchT<S>& batch,
                                 const SacConfigT<S>& cfg, Rng& rng) {
  const int B = batch.size();
  const auto f_online =
      nn::features_nograd(ncfg, p.enc, batch.next_images, batch.next_proprio);
  const auto f_target = nn::features_nograd(ncfg, p.tgt_enc, batch.next_images,
                                            batch.next_proprio);
  auto [mean, log_std] = nn::policy_forward_nograd(ncfg, p.policy, f_online);

  std::vector<S> v(static_cast<std::size_t>(B), S(0));
  const int n = std::max(1, cfg.value_samples);
  for (int s = 0; s < n; ++s) {
    nn::TensorT<S> actions({B, ncfg.action_dim});
    std::vector<S> logp(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      auto smp = nn::sample_action_row(ncfg, mean, log_std, b, rng, true);
      for (int d = 0; d < ncfg.action_dim; ++d)
        actions.at2(b, d) = smp.action[static_cast<std::size_t>(d)];
      logp[static_cast<std::size_t>(b)] = smp.log_prob;
    }
    auto q1 = q_nograd(ncfg, p.tgt_q1, f_target, actions);
    if (ncfg.twin_critics) {
      auto q2 = q_nograd(ncfg, p.tgt_q2, f_target, actions);
      for (int b = 0; b < B; ++b)
        q1[static_cast<std::size_t>(b)] =
            std::min(q1[static_cast<std::size_t>(b)], q2[static_cast<std::size_t>(b)]);
    }
    for (int b = 0; b < B; ++b)
      v[static_cast<std::size_t>(b)] +=
          q1[static_cast<std::size_t>(b)] -
          cfg.alpha_ent * logp[static_cast<std::size_t>(b)];
  }
  for (auto& x : v) x /= static_cast<S>(n);
  return v;
}

// y = r + gamma * (1 - done) * v
template <class S>
std::vector<S> td_targets(const replay::BatchT<S>& batch,
                          const std::vector<S>& v, S gamma) {
  std::vector<S> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    y[i] = batch.reward[i] + gamma * (S(1) - batch.done[i]) * v[i];
  return y;
}

template <class S>
struct LossBuild {
  typename nn::GraphT<S>::Var loss;
  std::vector<typename nn::GraphT<S>::Var> param_vars;
  std::vector<nn::TensorT<S>*> param_tensors;
  typename nn::GraphT<S>::Var log_prob;  // policy loss only
  typename nn::GraphT<S>::Var q_min;     // policy loss only
};

// Critic regression: mean over batch and critics of 0.5 * (Q - y)^2, with y
// held constant. Gradients reach the encoder and both Q heads.
template <class S>
LossBuild<S> build_q_loss(nn::GraphT<S>& g, const nn::NetConfig& ncfg,
                          nn::ParameterSetT<S>& p,
                          const replay::BatchT<S>& batch,
                          const std::vector<S>& y) {
  using Var = typename nn::GraphT<S>::Var;
  const int B = batch.size();

  LossBuild<S> out;
  auto enc = nn::EncoderVars<S>::bind(g, p.enc, true);
  auto q1 = nn::MlpVars<S>::bind(g, p.q1, true);
  auto q2 = nn::MlpVars<S>::bind(g, p.q2, true);
  p.for_each_critic([&](const std::string&, nn::TensorT<S>& t) {
    out.param_tensors.push_back(&t);
  });
  out.param_vars = {enc.k1, enc.b1, enc.k2, enc.b2,
                    q1.w1, q1.b1, q1.w2, q1.b2, q1.w3, q1.b3,
                    q2.w1, q2.b1, q2.w2, q2.b2, q2.w3, q2.b3};

  Var images = g.constant(batch.obs_images);
  Var proprio = g.constant(nn::normalize_proprio(ncfg, batch.obs_proprio));
  Var feat = g.concat_cols(nn::encode_graph(g, enc, images), proprio);

  nn::TensorT<S> a = batch.action;
  for (auto& v : a.data) v /= static_cast<S>(ncfg.action_scale);
  Var qin = g.concat_cols(feat, g.constant(std::move(a)));

  nn::TensorT<S> yt({B});
  yt.data.assign(y.begin(), y.end());
  Var yv = g.constant(std::move(yt));

  Var qv1 = g.reshape(nn::mlp_graph(g, q1, qin), {B});
  Var l1 = g.scale(g.mean_all(g.square(g.sub(qv1, yv))), S(0.5));
  if (ncfg.twin_critics) {
    Var qv2 = g.reshape(nn::mlp_graph(g, q2, qin), {B});
    Var l2 = g.scale(g.mean_all(g.square(g.sub(qv2, yv))), S(0.5));
    out.loss = g.scale(g.add(l1, l2), S(0.5));
  } else {
    out.loss = l1;
  }
  return out;
}

// Policy improvement: mean of alpha * log pi(a|s) - min Q(s, a) with a drawn
// through the reparameterized squashed-Gaussian path. Encoder features and
// critic weights enter as constants; only the policy head takes gradients.
// `eps` supplies the noise so callers can use common random numbers.
template <class S>
LossBuild<S> build_policy_loss(nn::GraphT<S>& g, const nn::NetConfig& ncfg,
                               nn::ParameterSetT<S>& p,
                               const replay::BatchT<S>& batch,
                               const nn::TensorT<S>& eps, S alpha_ent) {
  using Var = typename nn::GraphT<S>::Var;
  const int B = batch.size();
  const int A = ncfg.action_dim;
  constexpr double kHalfLog2Pi = 0.9189385332046727;

  LossBuild<S> out;
  auto pol = nn::MlpVars<S>::bind(g, p.policy, true);
  p.for_each_policy([&](const std::string&, nn::TensorT<S>& t) {
    out.param_tensors.push_back(&t);
  });
  out.param_vars = {pol.w1, pol.b1, pol.w2, pol.b2, pol.w3, pol.b3};

  const auto feat_plain =
      nn::features_nograd(ncfg, p.enc, batch.obs_images, batch.obs_proprio);
  Var feat = g.constant(feat_plain);

  Var head = nn::mlp_graph(g, pol, feat);  // [B, 2A]
  Var mean = g.slice_cols(head, 0, A);
  Var log_std = g.clamp(g.slice_cols(head, A, 2 * A),
                        static_cast<S>(ncfg.log_std_min),
                        static_cast<S>(ncfg.log_std_max));
  Var eps_v = g.constant(eps);
  Var u = g.add(mean, g.mul(g.exp_(log_std), eps_v));
  Var action = g.scale(g.tanh_(u), static_cast<S>(ncfg.action_scale));

  // log pi per dimension:
  //   -0.5*eps^2 - 0.5*log(2pi) - log(scale)   (constant given eps)
  //   - log_std
  //   + 2*(u + softplus(-2u) - log 2)          (= -log(1 - tanh(u)^2))
  nn::TensorT<S> base({B, A});
  for (int b = 0; b < B; ++b)
    for (int d = 0; d < A; ++d)
      base.at2(b, d) = static_cast<S>(
          -0.5 * eps.at2(b, d) * eps.at2(b, d) - kHalfLog2Pi -
          std::log(ncfg.action_scale));
  Var tanh_corr = g.scale(
      g.add_scalar(g.add(u, g.softplus_(g.scale(u, S(-2)))), -std::log(S(2))),
      S(2));
  Var logp_elem = g.add(g.sub(g.constant(std::move(base)), log_std), tanh_corr);
  Var logp = g.row_sum(logp_elem);
  out.log_prob = logp;

  auto q1 = nn::MlpVars<S>::bind(g, p.q1, false);
  Var qin =
      g.concat_cols(feat, g.scale(action, S(1) / static_cast<S>(ncfg.action_scale)));
  Var qv1 = g.reshape(nn::mlp_graph(g, q1, qin), {B});
  Var qmin = qv1;
  if (ncfg.twin_critics) {
    auto q2 = nn::MlpVars<S>::bind(g, p.q2, false);
    Var qv2 = g.reshape(nn::mlp_graph(g, q2, qin), {B});
    qmin = g.min2(qv1, qv2);
  }
  out.q_min = qmin;
  out.loss = g.mean_all(g.sub(g.scale(logp, alpha_ent), qmin));
  return out;
}

// One gradient update: critic Adam step on the Q objective, policy Adam step
// on the policy objective, Polyak refresh of the targets, version bump.
// A non-finite loss aborts the update and leaves the parameters untouched.
template <class S>
class LearnerT {
 public:
  LearnerT(const nn::NetConfig& ncfg, const SacConfigT<S>& cfg, Rng init_rng)
      : ncfg_(ncfg),
        cfg_(cfg),
        params_(nn::init_params<S>(ncfg, init_rng)),
        adam_critic_(cfg.critic_lr),
        adam_policy_(cfg.policy_lr) {}

  nn::ParameterSetT<S>& params() { return params_; }
  void set_params(nn::ParameterSetT<S> p) { params_ = std::move(p); }
  const nn::NetConfig& net_config() const { return ncfg_; }
  const SacConfigT<S>& sac_config() const { return cfg_; }
  std::uint64_t faults() const { return faults_; }

  UpdateMetrics<S> update(const replay::BatchT<S>& batch, Rng& rng) {
    UpdateMetrics<S> m;
    const nn::ParameterSetT<S> snapshot = params_;

    const auto v = soft_value_target(ncfg_, params_, batch, cfg_, rng);
    const auto y = td_targets(batch, v, cfg_.gamma);

    {
      nn::GraphT<S> g;
      auto build = build_q_loss(g, ncfg_, params_, batch, y);
      m.q_loss = g.value(build.loss)[0];
      if (!std::isfinite(static_cast<double>(m.q_loss))) {
        ++faults_;
        m.aborted = true;
        return m;
      }
      g.backward(build.loss);
      std::vector<const nn::TensorT<S>*> grads;
      grads.reserve(build.param_vars.size());
      for (auto var : build.param_vars) grads.push_back(&g.grad(var));
      adam_critic_.step(build.param_tensors, grads);
    }

    {
      nn::GraphT<S> g;
      nn::TensorT<S> eps({batch.size(), ncfg_.action_dim});
      for (auto& e : eps.data) e = static_cast<S>(rng.normal());
      auto build = build_policy_loss(g, ncfg_, params_, batch, eps, cfg_.alpha_ent);
      m.policy_loss = g.value(build.loss)[0];
      if (!std::isfinite(static_cast<double>(m.policy_loss))) {
        params_ = snapshot;
        ++faults_;
        m.aborted = true;
        return m;
      }
      S qsum = 0, lsum = 0;
      for (S q : g.value(build.q_min).data) qsum += q;
      for (S l : g.value(build.log_prob).data) lsum += l;
      m.mean_q = qsum / static_cast<S>(batch.size());
      m.entropy = -lsum / static_cast<S>(batch.size());
      g.backward(build.loss);
      std::vector<const nn::TensorT<S>*> grads;
      grads.reserve(build.param_vars.size());
      for (auto var : build.param_vars) grads.push_back(&g.grad(var));
      adam_policy_.step(build.param_tensors, grads);
    }

    polyak_refresh();

    bool finite = true;
    params_.for_each([&](const std::string&, nn::TensorT<S>& t) {
      if (!t.all_finite()) finite = false;
    });
    if (!finite) {
      params_ = snapshot;
      ++faults_;
      m.aborted = true;
      return m;
    }
    ++params_.version;
    return m;
  }

 private:
  void polyak_refresh() {
    const S tau = cfg_.tau;
    nn::polyak_update(params_.tgt_enc.k1, params_.enc.k1, tau);
    nn::polyak_update(params_.tgt_enc.b1, params_.enc.b1, tau);
    nn::polyak_update(params_.tgt_enc.k2, params_.enc.k2, tau);
    nn::polyak_update(params_.tgt_enc.b2, params_.enc.b2, tau);
    auto refresh_mlp = [tau](nn::MlpT<S>& dst, const nn::MlpT<S>& src) {
      nn::polyak_update(dst.w1, src.w1, tau);
      nn::polyak_update(dst.b1, src.b1, tau);
      nn::polyak_update(dst.w2, src.w2, tau);
      nn::polyak_update(dst.b2, src.b2, tau);
      nn::polyak_update(dst.w3, src.w3, tau);
      nn::polyak_update(dst.b3, src.b3, tau);
    };
    refresh_mlp(params_.tgt_q1, params_.q1);
    refresh_mlp(params_.tgt_q2, params_.q2);
  }

  nn::NetConfig ncfg_;
  SacConfigT<S> cfg_;
  nn::ParameterSetT<S> params_;
  nn::AdamT<S> adam_critic_;
  nn::AdamT<S> adam_policy_;
  std::uint64_t faults_ = 0;
};

using Learner = LearnerT<float>;

}  // namespace rtsac::sac
