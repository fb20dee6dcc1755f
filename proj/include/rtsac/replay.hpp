#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "rtsac/clock.hpp"
#include "rtsac/envsim.hpp"
#include "rtsac/rng.hpp"
#include "rtsac/slots.hpp"
#include "rtsac/tensor.hpp"

namespace rtsac::replay {

// Observations are stored once, 8-bit quantized, and shared between the
// transition that produced them and the one that follows.
struct StoredObs {
  int h = 0, w = 0;
  std::array<std::vector<std::uint8_t>, 3> frames;  // h*w*3 each, oldest first
  std::array<Micros, 3> frame_ts{};
  std::array<float, 15> proprio{};
};

using StoredObsPtr = std::shared_ptr<const StoredObs>;

inline StoredObsPtr quantize_observation(const sim::Observation& obs) {
  auto out = std::make_shared<StoredObs>();
  const sim::CameraFrame& f0 = *obs.frames[0];
  out->h = f0.h;
  out->w = f0.w;
  for (int f = 0; f < 3; ++f) {
    const sim::CameraFrame& fr = *obs.frames[static_cast<std::size_t>(f)];
    auto& q = out->frames[static_cast<std::size_t>(f)];
    q.resize(fr.rgb.size());
    for (std::size_t i = 0; i < fr.rgb.size(); ++i) {
      const float v = std::min(1.0f, std::max(0.0f, fr.rgb[i]));
      q[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    out->frame_ts[static_cast<std::size_t>(f)] = fr.ts;
  }
  out->proprio = sim::observation_proprio(obs);
  return out;
}

struct Transition {
  StoredObsPtr obs;
  StoredObsPtr next_obs;
  std::array<float, 5> action{};
  float reward = 0;  // already cycle-time scaled
  bool done = false;
};

template <class S>
struct BatchT {
  nn::TensorT<S> obs_images;    // [B, 9, crop_h, crop_w]
  nn::TensorT<S> obs_proprio;   // [B, 15]
  nn::TensorT<S> next_images;   // [B, 9, crop_h, crop_w]
  nn::TensorT<S> next_proprio;  // [B, 15]
  nn::TensorT<S> action;        // [B, 5]
  std::vector<S> reward;        // [B]
  std::vector<S> done;          // [B], 0 or 1
  std::uint64_t sampled_at_version = 0;
  Micros sample_start = 0;
  Micros sample_end = 0;

  int size() const { return obs_images.dim(0); }
};

using Batch = BatchT<float>;

struct ReplayConfig {
  std::size_t capacity = 100000;
  int crop_h = 0;  // 0 = no crop (use full image)
  int crop_w = 0;
};

// ---------------------------------------------------------------------------
// Random crop. One offset per batch element, applied identically to every
// stacked frame of that element; pixel values are copied verbatim.

struct CropOffset {
  int di = 0, dj = 0;
};

inline std::vector<CropOffset> draw_crop_offsets(int batch, int in_h, int in_w,
                                                 int out_h, int out_w,
                                                 Rng& rng) {
  if (out_h > in_h || out_w > in_w)
    throw std::invalid_argument("random_crop: crop larger than image");
  std::vector<CropOffset> offs(static_cast<std::size_t>(batch));
  for (auto& o : offs) {
    o.di = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(in_h - out_h + 1)));
    o.dj = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(in_w - out_w + 1)));
  }
  return offs;
}

template <class S>
nn::TensorT<S> crop_with_offsets(const nn::TensorT<S>& images,
                                 const std::vector<CropOffset>& offs, int out_h,
                                 int out_w) {
  const int B = images.dim(0), C = images.dim(1);
  nn::TensorT<S> out({B, C, out_h, out_w});
  for (int b = 0; b < B; ++b) {
    const CropOffset& o = offs[static_cast<std::size_t>(b)];
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j)
          out.at4(b, c, i, j) = images.at4(b, c, i + o.di, j + o.dj);
  }
  return out;
}

template <class S>
nn::TensorT<S> random_crop(const nn::TensorT<S>& images, int out_h, int out_w,
                           Rng& rng) {
  auto offs =
      draw_crop_offsets(images.dim(0), images.dim(2), images.dim(3), out_h,
                        out_w, rng);
  return crop_with_offsets(images, offs, out_h, out_w);
}

// ---------------------------------------------------------------------------
// Capacity-bounded uniform replay with ring eviction. One concurrent writer
// (the interaction process) and one concurrent reader (the sampling stage).

class ReplayBuffer {
 public:
  ReplayBuffer(const ReplayConfig& cfg, Clock& clk)
      : cfg_(cfg), ws_(clk.make_waitset()) {
    ring_.reserve(std::min<std::size_t>(cfg.capacity, 1 << 16));
  }

  // O(1); rejects transitions with non-finite numeric fields.
  bool push(const Transition& t) {
    if (!finite(t)) {
      faults_.fetch_add(1);
      return false;
    }
    std::lock_guard lk(mu_);
    if (ring_.size() < cfg_.capacity) {
      ring_.push_back(t);
    } else {
      ring_[head_] = t;
      head_ = (head_ + 1) % cfg_.capacity;
    }
    ws_->notify_all();
    return true;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return ring_.size();
  }

  std::uint64_t faults() const { return faults_.load(); }

  // Copy of the live contents, for tests and audits.
  std::vector<Transition> contents() const {
    std::lock_guard lk(mu_);
    return ring_;
  }

  // Blocks until at least n transitions are stored; false on stop.
  bool wait_for_size(std::size_t n, const StopFlag& stop) {
    std::unique_lock lk(mu_);
    while (ring_.size() < n) {
      if (stop.stop_requested()) return false;
      ws_->wait(lk);
    }
    return !stop.stop_requested();
  }

  void poke() {
    std::lock_guard lk(mu_);
    ws_->notify_all();
  }

  // B indices uniform with replacement; batch assembled, dequantized and
  // cropped. NotReady (nullopt) while fewer than B transitions are stored.
  template <class S>
  std::optional<BatchT<S>> try_sample(int batch_size, Rng& rng,
                                      std::uint64_t param_version) {
    std::vector<Transition> picks;
    picks.reserve(static_cast<std::size_t>(batch_size));
    {
      std::lock_guard lk(mu_);
      if (ring_.size() < static_cast<std::size_t>(batch_size))
        return std::nullopt;
      for (int i = 0; i < batch_size; ++i)
        picks.push_back(ring_[rng.uniform_int(ring_.size())]);
    }
    return assemble<S>(picks, rng, param_version);
  }

 private:
  static bool finite(const Transition& t) {
    if (!std::isfinite(t.reward)) return false;
    for (float a : t.action)
      if (!std::isfinite(a)) return false;
    if (!t.obs || !t.next_obs) return false;
    for (const auto* o : {t.obs.get(), t.next_obs.get()})
      for (float p : o->proprio)
        if (!std::isfinite(p)) return false;
    return true;
  }

  template <class S>
  BatchT<S> assemble(const std::vector<Transition>& picks, Rng& rng,
                     std::uint64_t param_version) const {
    const int B = static_cast<int>(picks.size());
    const int h = picks[0].obs->h, w = picks[0].obs->w;
    const int ch = cfg_.crop_h > 0 ? cfg_.crop_h : h;
    const int cw = cfg_.crop_w > 0 ? cfg_.crop_w : w;
    auto offs = draw_crop_offsets(B, h, w, ch, cw, rng);

    BatchT<S> out;
    out.obs_images = nn::TensorT<S>({B, 9, ch, cw});
    out.next_images = nn::TensorT<S>({B, 9, ch, cw});
    out.obs_proprio = nn::TensorT<S>({B, 15});
    out.next_proprio = nn::TensorT<S>({B, 15});
    out.action = nn::TensorT<S>({B, 5});
    out.reward.resize(static_cast<std::size_t>(B));
    out.done.resize(static_cast<std::size_t>(B));
    out.sampled_at_version = param_version;

    for (int b = 0; b < B; ++b) {
      const Transition& t = picks[static_cast<std::size_t>(b)];
      fill_images(out.obs_images, b, *t.obs, offs[static_cast<std::size_t>(b)], ch, cw);
      fill_images(out.next_images, b, *t.next_obs, offs[static_cast<std::size_t>(b)], ch, cw);
      for (int i = 0; i < 15; ++i) {
        out.obs_proprio.at2(b, i) = static_cast<S>(t.obs->proprio[i]);
        out.next_proprio.at2(b, i) = static_cast<S>(t.next_obs->proprio[i]);
      }
      for (int a = 0; a < 5; ++a)
        out.action.at2(b, a) = static_cast<S>(t.action[a]);
      out.reward[static_cast<std::size_t>(b)] = static_cast<S>(t.reward);
      out.done[static_cast<std::size_t>(b)] = t.done ? S(1) : S(0);
    }
    return out;
  }

  template <class S>
  static void fill_images(nn::TensorT<S>& dst, int b, const StoredObs& obs,
                          const CropOffset& off, int ch, int cw) {
    for (int f = 0; f < 3; ++f) {
      const auto& q = obs.frames[static_cast<std::size_t>(f)];
      for (int c = 0; c < 3; ++c)
        for (int i = 0; i < ch; ++i)
          for (int j = 0; j < cw; ++j) {
            const std::size_t at =
                (static_cast<std::size_t>(i + off.di) * obs.w + (j + off.dj)) * 3 + c;
            dst.at4(b, 3 * f + c, i, j) = static_cast<S>(q[at]) / S(255);
          }
    }
  }

  ReplayConfig cfg_;
  mutable std::mutex mu_;
  std::unique_ptr<WaitSet> ws_;
  std::vector<Transition> ring_;
  std::size_t head_ = 0;
  std::atomic<std::uint64_t> faults_{0};
};

}  // namespace rtsac::replay
