#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtsac::nn {

// Dense row-major tensor. S is float for runs and double for numerical

// tests; the whole stack is templated so gradient checks exercise the exact
// code path used at runtime.
template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(numel(shape), S(0));
  }
  TensorT(std::vector<int> shp, std::vector<S> d)
      : shape(std::move(shp)), data(std::move(d)) {
    if (data.size() != numel(shape))
      throw std::invalid_argument("tensor: data length != product of shape");
  }

  static std::size_t numel(const std::vector<int>& shp) {
    std::size_t n = 1;
    for (int d : shp) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dim");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static TensorT zeros(std::vector<int> shp) { return TensorT(std::move(shp)); }
  static TensorT full(std::vector<int> shp, S v) {
    TensorT t(std::move(shp));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  S& operator[](std::size_t i) { return data[i]; }
  S operator[](std::size_t i) const { return data[i]; }

  // 2-D accessor [rows, cols]
  S& at2(int r, int c) { return data[static_cast<std::size_t>(r) * dim(1) + c]; }
  S at2(int r, int c) const {
    return data[static_cast<std::size_t>(r) * dim(1) + c];
  }

  // 4-D accessor [b, c, h, w]
  S& at4(int b, int c, int h, int w) {
    return data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + h) *
                    dim(3) +
                w];
  }
  S at4(int b, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + h) *
                    dim(3) +
                w];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class S2>
  TensorT<S2> cast() const {
    TensorT<S2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<S2>(data[i]);
    return out;
  }
};

template <class S>
void check_shape(const TensorT<S>& t, const std::vector<int>& want,
                 const char* what) {
  if (t.shape != want)
    throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace rtsac::nn
