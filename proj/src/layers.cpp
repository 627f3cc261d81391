#include "ceemkit/layers.hpp"

#include <algorithm>
#include <cmath>

namespace ceemkit {

std::size_t conv2d_param_count(std::size_t p0, std::size_t p1, std::size_t k) {
  return (k * k * p0 + 1) * p1;
}

std::size_t dwsc_param_count_paper(std::size_t p0) { return 10 * p0; }

std::size_t dwsc_param_count_true(std::size_t p0, std::size_t p1) {
  return 9 * p0 + p0 + p0 * p1 + p1;
}

static void require_4d(const Tensor &x, const char *who) {
  if (x.rank() != 4)
    throw ShapeError(std::string(who) + ": expected a 4-D input");
}

Tensor conv2d_forward(const Tensor &x, const Conv2DSpec &spec,
                      const Tensor &weights, const Tensor &bias,
                      Tensor *pre_activation) {
  require_4d(x, "conv2d");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t k = spec.kernel, p1 = spec.filters;
  if (C != spec.in_channels)
    throw ShapeError("conv2d: input channels do not match spec");
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);

  Tensor pre({B, H, W, p1});
  const double *wd = weights.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t f = 0; f < p1; ++f) {
          double acc = bias[f];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t sy =
                static_cast<std::ptrdiff_t>(y + ky) - pad;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H))
              continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sx =
                  static_cast<std::ptrdiff_t>(xx + kx) - pad;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))
                continue;
              const double *wrow = wd + ((ky * k + kx) * C) * p1 + f;
              for (std::size_t c = 0; c < C; ++c)
                acc += x.at(b, sy, sx, c) * wrow[c * p1];
            }
          }
          pre.at(b, y, xx, f) = acc;
        }

  Tensor out = spec.activation == Activation::relu ? relu_forward(pre) : pre;
  if (pre_activation)
    *pre_activation = std::move(pre);
  return out;
}

void conv2d_backward(const Tensor &x, const Conv2DSpec &spec,
                     const Tensor &weights, const Tensor &pre_activation,
                     const Tensor &grad_out, Tensor &grad_x,
                     Tensor &grad_weights, Tensor &grad_bias) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t k = spec.kernel, p1 = spec.filters;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);

  Tensor g = spec.activation == Activation::relu
                 ? relu_backward(grad_out, pre_activation)
                 : grad_out;

  grad_x = Tensor({B, H, W, C});
  grad_weights = Tensor(weights.shape());
  grad_bias = Tensor({p1});
  const double *wd = weights.data();
  double *gwd = grad_weights.data();

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t f = 0; f < p1; ++f) {
          const double go = g.at(b, y, xx, f);
          if (go == 0.0)
            continue;
          grad_bias[f] += go;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t sy =
                static_cast<std::ptrdiff_t>(y + ky) - pad;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H))
              continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::ptrdiff_t sx =
                  static_cast<std::ptrdiff_t>(xx + kx) - pad;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))
                continue;
              const std::size_t base = ((ky * k + kx) * C) * p1 + f;
              for (std::size_t c = 0; c < C; ++c) {
                gwd[base + c * p1] += go * x.at(b, sy, sx, c);
                grad_x.at(b, sy, sx, c) += go * wd[base + c * p1];
              }
            }
          }
        }
}

Tensor dwsc_forward(const Tensor &x, const DWSConv2DSpec &spec,
                    const Tensor &dw, const Tensor &dw_bias, const Tensor &pw,
                    const Tensor &pw_bias, DwscCache *cache) {
  require_4d(x, "dwsc");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t p1 = spec.out_channels;
  if (C != spec.in_channels)
    throw ShapeError("dwsc: input channels do not match spec");

  // depthwise 3x3, same padding
  Tensor depth({B, H, W, C});
  const double *dwd = dw.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c) {
          double acc = dw_bias[c];
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H))
              continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t sx =
                  static_cast<std::ptrdiff_t>(xx + kx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))
                continue;
              acc += x.at(b, sy, sx, c) * dwd[(ky * 3 + kx) * C + c];
            }
          }
          depth.at(b, y, xx, c) = acc;
        }

  // pointwise 1x1 mix
  Tensor pre({B, H, W, p1});
  const double *pwd = pw.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t f = 0; f < p1; ++f) {
          double acc = pw_bias[f];
          for (std::size_t c = 0; c < C; ++c)
            acc += depth.at(b, y, xx, c) * pwd[c * p1 + f];
          pre.at(b, y, xx, f) = acc;
        }

  Tensor out = relu_forward(pre);
  if (cache) {
    cache->depthwise_out = std::move(depth);
    cache->pre_activation = std::move(pre);
  }
  return out;
}

void dwsc_backward(const Tensor &x, const DWSConv2DSpec &spec, const Tensor &dw,
                   const Tensor &pw, const DwscCache &cache,
                   const Tensor &grad_out, Tensor &grad_x, Tensor &grad_dw,
                   Tensor &grad_dw_bias, Tensor &grad_pw,
                   Tensor &grad_pw_bias) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t p1 = spec.out_channels;

  Tensor g = relu_backward(grad_out, cache.pre_activation);

  grad_pw = Tensor(pw.shape());
  grad_pw_bias = Tensor({p1});
  Tensor gdepth({B, H, W, C});
  const double *pwd = pw.data();
  double *gpwd = grad_pw.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t f = 0; f < p1; ++f) {
          const double go = g.at(b, y, xx, f);
          if (go == 0.0)
            continue;
          grad_pw_bias[f] += go;
          for (std::size_t c = 0; c < C; ++c) {
            gpwd[c * p1 + f] += go * cache.depthwise_out.at(b, y, xx, c);
            gdepth.at(b, y, xx, c) += go * pwd[c * p1 + f];
          }
        }

  grad_x = Tensor({B, H, W, C});
  grad_dw = Tensor(dw.shape());
  grad_dw_bias = Tensor({C});
  const double *dwd = dw.data();
  double *gdwd = grad_dw.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c) {
          const double go = gdepth.at(b, y, xx, c);
          if (go == 0.0)
            continue;
          grad_dw_bias[c] += go;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H))
              continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t sx =
                  static_cast<std::ptrdiff_t>(xx + kx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))
                continue;
              gdwd[(ky * 3 + kx) * C + c] += go * x.at(b, sy, sx, c);
              grad_x.at(b, sy, sx, c) += go * dwd[(ky * 3 + kx) * C + c];
            }
          }
        }
}

Tensor pool_forward(const Tensor &x, const PoolSpec &spec, PoolCache *cache) {
  require_4d(x, "pool");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H < spec.pool_h || W < spec.pool_w)
    throw ShapeError("pool: plane smaller than pool window");
  const std::size_t out_h = (H - spec.pool_h) / spec.stride + 1;
  const std::size_t out_w = (W - spec.pool_w) / spec.stride + 1;

  Tensor out({B, out_h, out_w, C});
  if (cache) {
    cache->argmax.assign(out.size(), 0);
    cache->argmin.assign(out.size(), 0);
  }
  std::size_t oi = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j)
        for (std::size_t c = 0; c < C; ++c, ++oi) {
          double mx = -1e300, mn = 1e300;
          std::size_t imax = 0, imin = 0;
          for (std::size_t dy = 0; dy < spec.pool_h; ++dy)
            for (std::size_t dx = 0; dx < spec.pool_w; ++dx) {
              const std::size_t y = i * spec.stride + dy;
              const std::size_t xx = j * spec.stride + dx;
              const std::size_t flat = ((b * H + y) * W + xx) * C + c;
              const double v = x[flat];
              if (v > mx) {
                mx = v;
                imax = flat;
              }
              if (v < mn) {
                mn = v;
                imin = flat;
              }
            }
          switch (spec.kind) {
          case PoolKind::max:
            out[oi] = mx;
            break;
          case PoolKind::maxmin:
            out[oi] = mx - mn;
            break;
          case PoolKind::twomaxmin:
            out[oi] = 2.0 * mx - mn;
            break;
          }
          if (cache) {
            cache->argmax[oi] = imax;
            cache->argmin[oi] = imin;
          }
        }
  return out;
}

Tensor pool_backward(const Tensor &grad_out, const PoolSpec &spec,
                     const PoolCache &cache,
                     const std::vector<std::size_t> &input_shape) {
  if (grad_out.size() != cache.argmax.size())
    throw ShapeError("pool_backward: gradient shape does not match cache");
  Tensor grad_x(input_shape);
  double wmax = 1.0, wmin = 0.0;
  switch (spec.kind) {
  case PoolKind::max:
    wmax = 1.0;
    wmin = 0.0;
    break;
  case PoolKind::maxmin:
    wmax = 1.0;
    wmin = -1.0;
    break;
  case PoolKind::twomaxmin:
    wmax = 2.0;
    wmin = -1.0;
    break;
  }
  for (std::size_t oi = 0; oi < grad_out.size(); ++oi) {
    const double g = grad_out[oi];
    grad_x[cache.argmax[oi]] += wmax * g;
    if (wmin != 0.0)
      grad_x[cache.argmin[oi]] += wmin * g;
  }
  return grad_x;
}

Tensor negative_forward(const Tensor &x, double kappa) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = kappa - x[i];
  return out;
}

Tensor negative_backward(const Tensor &grad_out) {
  Tensor out(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    out[i] = -grad_out[i];
  return out;
}

Tensor relu_forward(const Tensor &x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor &grad_out, const Tensor &pre_activation) {
  if (!grad_out.same_shape(pre_activation))
    throw ShapeError("relu_backward: shape mismatch");
  Tensor out(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    out[i] = pre_activation[i] > 0.0 ? grad_out[i] : 0.0;
  return out;
}

Tensor gap_forward(const Tensor &x) {
  require_4d(x, "gap");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor out({B, C});
  const double count = static_cast<double>(H * W);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c)
          out.at(b, c) += x.at(b, y, xx, c);
    // divide once so a constant plane maps to exactly that constant
    for (std::size_t c = 0; c < C; ++c)
      out.at(b, c) /= count;
  }
  return out;
}

Tensor gap_backward(const Tensor &grad_out, std::size_t H, std::size_t W) {
  const std::size_t B = grad_out.dim(0), C = grad_out.dim(1);
  Tensor grad_x({B, H, W, C});
  const double inv = 1.0 / static_cast<double>(H * W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        for (std::size_t c = 0; c < C; ++c)
          grad_x.at(b, y, xx, c) = grad_out.at(b, c) * inv;
  return grad_x;
}

Tensor concat_channels(const Tensor &a, const Tensor &b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("concat: expected 2-D feature tensors");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat: batch dims differ");
  const std::size_t B = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor out({B, ca + cb});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < ca; ++j)
      out.at(i, j) = a.at(i, j);
    for (std::size_t j = 0; j < cb; ++j)
      out.at(i, ca + j) = b.at(i, j);
  }
  return out;
}

void concat_backward(const Tensor &grad_out, std::size_t ca, std::size_t cb,
                     Tensor &grad_a, Tensor &grad_b) {
  const std::size_t B = grad_out.dim(0);
  if (grad_out.dim(1) != ca + cb)
    throw ShapeError("concat_backward: width mismatch");
  grad_a = Tensor({B, ca});
  grad_b = Tensor({B, cb});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < ca; ++j)
      grad_a.at(i, j) = grad_out.at(i, j);
    for (std::size_t j = 0; j < cb; ++j)
      grad_b.at(i, j) = grad_out.at(i, ca + j);
  }
}

Tensor dense_forward(const Tensor &x, const Tensor &weights,
                     const Tensor &bias) {
  if (x.rank() != 2)
    throw ShapeError("dense: expected 2-D input");
  const std::size_t B = x.dim(0), in = x.dim(1), K = bias.dim(0);
  if (weights.dim(0) != in)
    throw ShapeError("dense: feature dims do not match weights");
  Tensor logits({B, K});
  const double *wd = weights.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      double acc = bias[k];
      for (std::size_t j = 0; j < in; ++j)
        acc += x.at(b, j) * wd[j * K + k];
      logits.at(b, k) = acc;
    }
  return logits;
}

Tensor softmax(const Tensor &logits) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  Tensor probs({B, K});
  for (std::size_t b = 0; b < B; ++b) {
    double mx = logits.at(b, 0);
    for (std::size_t k = 1; k < K; ++k)
      mx = std::max(mx, logits.at(b, k));
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = std::exp(logits.at(b, k) - mx);
      probs.at(b, k) = e;
      sum += e;
    }
    for (std::size_t k = 0; k < K; ++k)
      probs.at(b, k) /= sum;
  }
  return probs;
}

Tensor dense_softmax_forward(const Tensor &x, const DenseSoftmaxSpec &spec,
                             const Tensor &weights, const Tensor &bias,
                             Tensor *logits_cache) {
  if (x.dim(1) != spec.in_features)
    throw ShapeError("dense_softmax: feature count does not match spec");
  Tensor logits = dense_forward(x, weights, bias);
  Tensor probs = softmax(logits);
  if (logits_cache)
    *logits_cache = std::move(logits);
  return probs;
}

void dense_backward(const Tensor &x, const Tensor &weights,
                    const Tensor &grad_logits, Tensor &grad_x,
                    Tensor &grad_weights, Tensor &grad_bias) {
  const std::size_t B = x.dim(0), in = x.dim(1), K = grad_logits.dim(1);
  grad_x = Tensor({B, in});
  grad_weights = Tensor(weights.shape());
  grad_bias = Tensor({K});
  const double *wd = weights.data();
  double *gwd = grad_weights.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) {
      const double g = grad_logits.at(b, k);
      grad_bias[k] += g;
      for (std::size_t j = 0; j < in; ++j) {
        gwd[j * K + k] += g * x.at(b, j);
        grad_x.at(b, j) += g * wd[j * K + k];
      }
    }
}

} // namespace ceemkit
