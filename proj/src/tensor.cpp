#include "ceemkit/tensor.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <string>

namespace ceemkit {

static std::size_t checked_count(const std::vector<std::size_t> &shape) {
  if (shape.empty())
    throw ShapeError("tensor shape must not be empty");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0)
      throw ShapeError("tensor dimensions must be >= 1");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(checked_count(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_count(shape_) != data_.size())
    throw ShapeError("tensor data length does not match shape product");
}

Tensor Tensor::zeros(const std::vector<std::size_t> &shape) {
  return Tensor(shape);
}

Tensor elementwise(const Tensor &a, const Tensor &b, BinOp op) {
  if (!a.same_shape(b))
    throw ShapeError("elementwise operands must have identical shapes");
  Tensor out(a.shape());
  const double *pa = a.data();
  const double *pb = b.data();
  double *po = out.data();
  const std::size_t n = a.size();
  switch (op) {
  case BinOp::add:
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    break;
  case BinOp::sub:
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    break;
  case BinOp::mul:
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    break;
  }
  return out;
}

double WindowView::max() const {
  return *std::max_element(values.begin(), values.end());
}

double WindowView::min() const {
  return *std::min_element(values.begin(), values.end());
}

double WindowView::most_frequent() const {
  std::map<double, std::size_t> counts;
  for (double v : values)
    ++counts[v];
  double best = values.front();
  std::size_t best_n = 0;
  for (const auto &[v, n] : counts) {
    if (n > best_n) {
      best = v;
      best_n = n;
    }
  }
  return best;
}

double WindowView::deviation_above(double ref) const { return max() - ref; }
double WindowView::deviation_below(double ref) const { return ref - min(); }

std::vector<WindowView> windows(const Tensor &t, std::size_t b, std::size_t c,
                                std::size_t pool_h, std::size_t pool_w,
                                std::size_t stride) {
  if (t.rank() != 4)
    throw ShapeError("windows() expects a 4-D tensor");
  if (stride < 1 || pool_h < 1 || pool_w < 1)
    throw ValueError("pool dims and stride must be >= 1");
  const std::size_t H = t.dim(1), W = t.dim(2);
  if (H < pool_h || W < pool_w)
    throw ShapeError("plane smaller than pool window");
  const std::size_t out_h = (H - pool_h) / stride + 1;
  const std::size_t out_w = (W - pool_w) / stride + 1;
  std::vector<WindowView> out;
  out.reserve(out_h * out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      WindowView w;
      w.row = i * stride;
      w.col = j * stride;
      w.rows = pool_h;
      w.cols = pool_w;
      w.values.reserve(pool_h * pool_w);
      for (std::size_t dy = 0; dy < pool_h; ++dy)
        for (std::size_t dx = 0; dx < pool_w; ++dx)
          w.values.push_back(t.at(b, w.row + dy, w.col + dx, c));
      out.push_back(std::move(w));
    }
  }
  return out;
}

static std::uint64_t splitmix64(std::uint64_t &x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto &s : s_)
    s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::size_t Rng::index(std::size_t n) {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

std::uint64_t seed_for(std::uint64_t seed, const std::string &tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t x = seed ^ h;
  return splitmix64(x);
}

} // namespace ceemkit
