#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ceemkit/error.hpp"

namespace ceemkit {

// Dense N-D double tensor, row-major. 4-D layout is [batch, height, width,
// channels], 2-D is [batch, features]. Immutable by convention once built;
// nothing here locks.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(const std::vector<std::size_t> &shape);

  const std::vector<std::size_t> &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  double *data() { return data_.data(); }
  const double *data() const { return data_.data(); }
  std::vector<double> &values() { return data_; }
  const std::vector<double> &values() const { return data_; }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // (b,y,x,c) -> data[((b*H + y)*W + x)*C + c]
  double &at(std::size_t b, std::size_t y, std::size_t x, std::size_t c) {
    return data_[((b * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
  }
  double at(std::size_t b, std::size_t y, std::size_t x, std::size_t c) const {
    return data_[((b * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
  }
  double &at(std::size_t b, std::size_t f) { return data_[b * shape_[1] + f]; }
  double at(std::size_t b, std::size_t f) const {
    return data_[b * shape_[1] + f];
  }

  bool same_shape(const Tensor &other) const { return shape_ == other.shape_; }

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

enum class BinOp { add, sub, mul };

Tensor elementwise(const Tensor &a, const Tensor &b, BinOp op);

// One pooling window over a single (batch, channel) plane. `values` are
// edge-clipped: the window never extends past the source plane.
struct WindowView {
  std::size_t row = 0, col = 0;  // top-left origin in the source plane
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;    // row-major, rows*cols entries

  double max() const;
  double min() const;
  // Analysis accessors used only by test oracles: the most frequent value
  // in the window and the max deviations above/below it.
  double most_frequent() const;
  double deviation_above(double ref) const;
  double deviation_below(double ref) const;
};

// Valid-padding window enumeration over one plane of t (batch b, channel c).
// Output grid is (floor((H-h)/s)+1) x (floor((W-w)/s)+1), row-major.
std::vector<WindowView> windows(const Tensor &t, std::size_t b, std::size_t c,
                                std::size_t pool_h, std::size_t pool_w,
                                std::size_t stride);

// Deterministic 64-bit PRNG: xoshiro256** with the four state words seeded
// by successive splitmix64 outputs.
//
//   splitmix64: z = (x += 0x9E3779B97F4A7C15);
//               z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//               z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//               return z ^ (z >> 31);
//   xoshiro256**: result = rotl(s1 * 5, 7) * 9;
//                 t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3;
//                 s2 ^= t; s3 = rotl(s3, 45);
class Rng {
public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // uniform in [0,1) with 53 random bits
  double uniform();
  double uniform(double lo, double hi);
  // uniform integer in [0, n)
  std::size_t index(std::size_t n);

  // Fisher-Yates shuffle of a vector of indices.
  template <typename T> void shuffle(std::vector<T> &v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

// Mixes a string into a seed, for per-layer parameter streams (FNV-1a).
std::uint64_t seed_for(std::uint64_t seed, const std::string &tag);

} // namespace ceemkit
