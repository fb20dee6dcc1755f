#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rtsac/tensor.hpp"

namespace rtsac::nn {

// Adam with bias correction. Moment buffers are keyed by position, so the
// caller must pass the same parameter list in the same order every step.
template <class S>
class AdamT {
 public:
  explicit AdamT(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<TensorT<S>*>& params,
            const std::vector<const TensorT<S>*>& grads) {
    if (params.size() != grads.size())
      throw std::invalid_argument("adam: params/grads size mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(TensorT<S>::zeros(p->shape));
        v_.push_back(TensorT<S>::zeros(p->shape));
      }
    }
    if (m_.size() != params.size())
      throw std::invalid_argument("adam: parameter list changed");
    ++t_;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(b1_), t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(b2_), t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      TensorT<S>& p = *params[i];
      const TensorT<S>& g = *grads[i];
      TensorT<S>& m = m_[i];
      TensorT<S>& v = v_[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = b1_ * m[j] + (S(1) - b1_) * g[j];
        v[j] = b2_ * v[j] + (S(1) - b2_) * g[j] * g[j];
        const S mhat = m[j] / bc1;
        const S vhat = v[j] / bc2;
        p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  long step_count() const { return t_; }

 private:
  S lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<TensorT<S>> m_, v_;
};

// target <- (1 - tau) * target + tau * online, elementwise.
template <class S>
void polyak_update(TensorT<S>& target, const TensorT<S>& online, S tau) {
  if (!target.same_shape(online))
    throw std::invalid_argument("polyak: shape mismatch");
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = (S(1) - tau) * target[i] + tau * online[i];
}

using Adam = AdamT<float>;

}  // namespace rtsac::nn
