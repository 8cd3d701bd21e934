#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimoseg {

// Dense n-d array, row-major. The scalar type is float for training and
// double for gradient checking; label maps use int32_t.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T{}) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), fill);
  }
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != count(shape))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("Tensor: extents must be positive");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, T v) { return Tensor(std::move(s), v); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

  // N,C,H,W indexing
  T& at4(int n, int c, int h, int w) {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[static_cast<size_t>(((static_cast<std::int64_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  // N,H,W indexing
  T& at3(int n, int h, int w) {
    return data[static_cast<size_t>((static_cast<std::int64_t>(n) * shape[1] + h) * shape[2] + w)];
  }
  const T& at3(int n, int h, int w) const {
    return data[static_cast<size_t>((static_cast<std::int64_t>(n) * shape[1] + h) * shape[2] + w)];
  }

  void fill(T v) { data.assign(data.size(), v); }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<To>(t[i]);
  return out;
}

// Hard argmax over the class axis of an N,C,H,W map. Ties go to the lowest
// channel index so results are identical across platforms.
template <typename T>
Tensor<std::int32_t> argmax_channels(const Tensor<T>& p) {
  if (p.ndim() != 4) throw std::invalid_argument("argmax_channels: expected N,C,H,W, got " + shape_str(p.shape));
  const int n = p.dim(0), c = p.dim(1), h = p.dim(2), w = p.dim(3);
  Tensor<std::int32_t> out({n, h, w});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int best = 0;
        T bv = p.at4(i, 0, y, x);
        for (int k = 1; k < c; ++k) {
          T v = p.at4(i, k, y, x);
          if (v > bv) {
            bv = v;
            best = k;
          }
        }
        out.at3(i, y, x) = best;
      }
  return out;
}

// Concatenate along the batch axis.
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != b.ndim()) throw std::invalid_argument("concat_batch: rank mismatch");
  for (int i = 1; i < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i))
      throw std::invalid_argument("concat_batch: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  std::vector<int> s = a.shape;
  s[0] = a.dim(0) + b.dim(0);
  Tensor<T> out(s);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

}  // namespace mimoseg
