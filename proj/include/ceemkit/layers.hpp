#pragma once

#include <cstddef>
#include <vector>

#include "ceemkit/tensor.hpp"

namespace ceemkit {

enum class Activation { none, relu };

// Standard convolution, stride 1, "same" zero padding.
// Weights are [k,k,p0,p1], bias is [p1].
struct Conv2DSpec {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  std::size_t kernel = 3;
  Activation activation = Activation::relu;
};

// Depthwise 3x3 (same padding, one kernel per input channel) followed by a
// 1x1 pointwise mix. Params: depthwise [3,3,p0], depthwise bias [p0],
// pointwise [p0,p1], pointwise bias [p1]. Single ReLU at the end.
struct DWSConv2DSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

enum class PoolKind { max, maxmin, twomaxmin };

// Valid padding. Window reductions: max(w), max(w)-min(w), 2*max(w)-min(w).
struct PoolSpec {
  PoolKind kind = PoolKind::max;
  std::size_t pool_h = 3;
  std::size_t pool_w = 3;
  std::size_t stride = 2;
};

struct DenseSoftmaxSpec {
  std::size_t in_features = 0;
  std::size_t classes = 0;
};

// Trainable-parameter counts (conv per (k^2*p0+1)*p1; DWSC both the
// simplified 10*p0 convention and the full count).
std::size_t conv2d_param_count(std::size_t p0, std::size_t p1, std::size_t k);
std::size_t dwsc_param_count_paper(std::size_t p0);
std::size_t dwsc_param_count_true(std::size_t p0, std::size_t p1);

// -- convolution ------------------------------------------------------------

// Returns [B,H,W,p1]. If pre_activation is non-null it receives the output
// before ReLU (needed by backward).
Tensor conv2d_forward(const Tensor &x, const Conv2DSpec &spec,
                      const Tensor &weights, const Tensor &bias,
                      Tensor *pre_activation = nullptr);

void conv2d_backward(const Tensor &x, const Conv2DSpec &spec,
                     const Tensor &weights, const Tensor &pre_activation,
                     const Tensor &grad_out, Tensor &grad_x,
                     Tensor &grad_weights, Tensor &grad_bias);

struct DwscCache {
  Tensor depthwise_out;   // after depthwise conv + bias
  Tensor pre_activation;  // after pointwise + bias, before ReLU
};

Tensor dwsc_forward(const Tensor &x, const DWSConv2DSpec &spec,
                    const Tensor &dw, const Tensor &dw_bias, const Tensor &pw,
                    const Tensor &pw_bias, DwscCache *cache = nullptr);

void dwsc_backward(const Tensor &x, const DWSConv2DSpec &spec, const Tensor &dw,
                   const Tensor &pw, const DwscCache &cache,
                   const Tensor &grad_out, Tensor &grad_x, Tensor &grad_dw,
                   Tensor &grad_dw_bias, Tensor &grad_pw,
                   Tensor &grad_pw_bias);

// -- pooling ----------------------------------------------------------------

// Flat input indices of each output cell's window max/min, for gradient
// routing. Ties break on first occurrence in row-major window scan.
struct PoolCache {
  std::vector<std::size_t> argmax;
  std::vector<std::size_t> argmin;  // unused for PoolKind::max
};

Tensor pool_forward(const Tensor &x, const PoolSpec &spec,
                    PoolCache *cache = nullptr);

Tensor pool_backward(const Tensor &grad_out, const PoolSpec &spec,
                     const PoolCache &cache,
                     const std::vector<std::size_t> &input_shape);

// -- pointwise layers ---------------------------------------------------------

Tensor negative_forward(const Tensor &x, double kappa);
Tensor negative_backward(const Tensor &grad_out);

Tensor relu_forward(const Tensor &x);
// Masks by pre-activation input > 0 (gradient at exactly 0 is 0).
Tensor relu_backward(const Tensor &grad_out, const Tensor &pre_activation);

Tensor gap_forward(const Tensor &x);                         // [B,H,W,C] -> [B,C]
Tensor gap_backward(const Tensor &grad_out, std::size_t H, std::size_t W);

Tensor concat_channels(const Tensor &a, const Tensor &b);    // [B,Ca]+[B,Cb]
void concat_backward(const Tensor &grad_out, std::size_t ca, std::size_t cb,
                     Tensor &grad_a, Tensor &grad_b);

Tensor dense_forward(const Tensor &x, const Tensor &weights,
                     const Tensor &bias);                    // logits
Tensor softmax(const Tensor &logits);                        // max-subtracted
Tensor dense_softmax_forward(const Tensor &x, const DenseSoftmaxSpec &spec,
                             const Tensor &weights, const Tensor &bias,
                             Tensor *logits_cache = nullptr);
// grad_logits is the gradient at the softmax input.
void dense_backward(const Tensor &x, const Tensor &weights,
                    const Tensor &grad_logits, Tensor &grad_x,
                    Tensor &grad_weights, Tensor &grad_bias);

} // namespace ceemkit
