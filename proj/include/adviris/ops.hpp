#pragma once

#include "adviris/graph.hpp"

namespace adviris::nn {

struct Conv2dAttrs {
    int stride = 1;
    int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
};

// TensorFlow-style "same" padding for kernel k at stride s on an extent
// divisible by s: output extent = in/s.
Conv2dAttrs same_padding(int kernel, int stride);

struct RunningStats {
    Tensor mean;  // [C]
    Tensor var;   // [C]
};

enum class BatchNormMode { Train, Eval };

struct BatchNormAttrs {
    BatchNormMode mode = BatchNormMode::Train;
    double eps = 1e-5;
    double momentum = 0.1;          // running <- (1-m)*running + m*batch
    RunningStats* running = nullptr;  // updated in Train, read in Eval
};

// x [N,Ci,H,W], w [Co,Ci,kh,kw] -> [N,Co,Ho,Wo].  Cross-correlation, zero
// padding, no bias (batch norm supplies the shift).
Var conv2d(Graph& g, Var x, Var w, const Conv2dAttrs& a);

// x [N,C,H,W], w [C,kh,kw] -> [N,C,Ho,Wo]; one kernel per input channel.
Var depthwise_conv2d(Graph& g, Var x, Var w, const Conv2dAttrs& a);

// x [N,Ci,H,W], w [Co,Ci] -> [N,Co,H,W]; 1x1 channel mixing.
Var pointwise_conv2d(Graph& g, Var x, Var w);

// Depthwise k x k followed by pointwise 1x1.
Var separable_conv2d(Graph& g, Var x, Var dw, Var pw, const Conv2dAttrs& a);

// Nearest-neighbor x2 on both spatial extents.
Var upsample2x(Graph& g, Var x);

// Per-channel batch norm over (N,H,W).  gamma/beta are [C].
Var batch_norm(Graph& g, Var x, Var gamma, Var beta, const BatchNormAttrs& a);

Var relu(Graph& g, Var x);
Var tanh_act(Graph& g, Var x);

// Concatenate along the channel axis (dim 1).
Var concat_channels(Graph& g, Var a, Var b);

Var reshape(Graph& g, Var x, Shape to);

// sqrt(sum of squares) over all elements -> scalar [1].
Var l2_norm(Graph& g, Var x);

// Per-row L2 over dims 1..: x [N,...] -> [N].
Var l2_norm_rows(Graph& g, Var x);

Var sum_all(Graph& g, Var x);
Var mean_all(Graph& g, Var x);

Var subtract(Graph& g, Var a, Var b);
Var multiply(Graph& g, Var a, Var b);

// a*x + b with scalar constants.
Var affine(Graph& g, Var x, double a, double b);

// --- generic dispatch (drives the per-kind gradient-check suite) ---

enum class LayerKind {
    Conv2d,
    DepthwiseConv2d,
    PointwiseConv2d,
    SeparableConv2d,
    Upsample2x,
    BatchNorm,
    Relu,
    Tanh,
    ConcatDepth,
    Reshape,
    L2Norm,
    Sum,
    Subtract,
    Multiply,
    Affine,
};

const char* layer_kind_name(LayerKind k);

struct LayerAttrs {
    Conv2dAttrs conv;
    BatchNormAttrs bn;
    Shape reshape_to;
    double affine_a = 1.0, affine_b = 0.0;
};

// inputs carries activations, params carries weight leaves; counts are
// validated per kind.  Unknown kinds are rejected.
Var layer_forward(Graph& g, LayerKind kind, const std::vector<Var>& inputs,
                  const std::vector<Var>& params, const LayerAttrs& attrs);

}  // namespace adviris::nn
