#include "adviris/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace adviris::nn {

namespace {

void require_rank(const Tensor& t, int rank, const char* op, const char* role) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": " + role + " must have rank " +
                                    std::to_string(rank) + ", got " + shape_str(t.shape));
}

int conv_extent(int in, int k, int pa, int pb, int s, const char* op) {
    const int span = in + pa + pb - k;
    if (span < 0)
        throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(k) +
                                    " larger than padded extent " + std::to_string(in + pa + pb));
    return span / s + 1;
}

}  // namespace

Conv2dAttrs same_padding(int kernel, int stride) {
    const int total = kernel > stride ? kernel - stride : 0;
    Conv2dAttrs a;
    a.stride = stride;
    a.pad_top = total / 2;
    a.pad_bottom = total - total / 2;
    a.pad_left = total / 2;
    a.pad_right = total - total / 2;
    return a;
}

Var conv2d(Graph& g, Var x, Var w, const Conv2dAttrs& a) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    require_rank(xv, 4, "conv2d", "input");
    require_rank(wv, 4, "conv2d", "kernel");
    const int N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != Ci)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(Ci) +
                                    " != kernel input channels " + std::to_string(wv.dim(1)) +
                                    " (input " + shape_str(xv.shape) + ", kernel " + shape_str(wv.shape) + ")");
    const int Ho = conv_extent(H, kh, a.pad_top, a.pad_bottom, a.stride, "conv2d");
    const int Wo = conv_extent(W, kw, a.pad_left, a.pad_right, a.stride, "conv2d");

    Tensor y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int r = 0; r < kh; ++r) {
                            const int ih = oh * a.stride - a.pad_top + r;
                            if (ih < 0 || ih >= H) continue;
                            for (int c = 0; c < kw; ++c) {
                                const int iw = ow * a.stride - a.pad_left + c;
                                if (iw < 0 || iw >= W) continue;
                                acc += xv.at4(n, ci, ih, iw) * wv.at4(co, ci, r, c);
                            }
                        }
                    y.at4(n, co, oh, ow) = acc;
                }

    return g.record(std::move(y), {x.id, w.id}, "conv2d", [a](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0], wid = node.inputs[1];
        const Tensor& xv = gg.node(xid).value;
        const Tensor& wv = gg.node(wid).value;
        const Tensor& dy = node.grad;
        const bool need_dx = gg.node(xid).requires_grad;
        const bool need_dw = gg.node(wid).requires_grad;
        Tensor* dx = need_dx ? &gg.grad_buffer(xid) : nullptr;
        Tensor* dwt = need_dw ? &gg.grad_buffer(wid) : nullptr;
        const int N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const int Ho = dy.dim(2), Wo = dy.dim(3);
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const double gv = dy.at4(n, co, oh, ow);
                        if (gv == 0.0) continue;
                        for (int ci = 0; ci < Ci; ++ci)
                            for (int r = 0; r < kh; ++r) {
                                const int ih = oh * a.stride - a.pad_top + r;
                                if (ih < 0 || ih >= H) continue;
                                for (int c = 0; c < kw; ++c) {
                                    const int iw = ow * a.stride - a.pad_left + c;
                                    if (iw < 0 || iw >= W) continue;
                                    if (dx) dx->at4(n, ci, ih, iw) += wv.at4(co, ci, r, c) * gv;
                                    if (dwt) dwt->at4(co, ci, r, c) += xv.at4(n, ci, ih, iw) * gv;
                                }
                            }
                    }
    });
}

Var depthwise_conv2d(Graph& g, Var x, Var w, const Conv2dAttrs& a) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    require_rank(xv, 4, "depthwise_conv2d", "input");
    require_rank(wv, 3, "depthwise_conv2d", "kernel");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int kh = wv.dim(1), kw = wv.dim(2);
    if (wv.dim(0) != C)
        throw std::invalid_argument("depthwise_conv2d: channel mismatch (input " + shape_str(xv.shape) +
                                    ", kernel " + shape_str(wv.shape) + ")");
    const int Ho = conv_extent(H, kh, a.pad_top, a.pad_bottom, a.stride, "depthwise_conv2d");
    const int Wo = conv_extent(W, kw, a.pad_left, a.pad_right, a.stride, "depthwise_conv2d");

    Tensor y({N, C, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c0 = 0; c0 < C; ++c0)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = 0.0;
                    for (int r = 0; r < kh; ++r) {
                        const int ih = oh * a.stride - a.pad_top + r;
                        if (ih < 0 || ih >= H) continue;
                        for (int c = 0; c < kw; ++c) {
                            const int iw = ow * a.stride - a.pad_left + c;
                            if (iw < 0 || iw >= W) continue;
                            acc += xv.at4(n, c0, ih, iw) * wv.v[static_cast<std::size_t>((c0 * kh + r) * kw + c)];
                        }
                    }
                    y.at4(n, c0, oh, ow) = acc;
                }

    return g.record(std::move(y), {x.id, w.id}, "depthwise_conv2d", [a](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0], wid = node.inputs[1];
        const Tensor& xv = gg.node(xid).value;
        const Tensor& wv = gg.node(wid).value;
        const Tensor& dy = node.grad;
        Tensor* dx = gg.node(xid).requires_grad ? &gg.grad_buffer(xid) : nullptr;
        Tensor* dwt = gg.node(wid).requires_grad ? &gg.grad_buffer(wid) : nullptr;
        const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int kh = wv.dim(1), kw = wv.dim(2);
        const int Ho = dy.dim(2), Wo = dy.dim(3);
        for (int n = 0; n < N; ++n)
            for (int c0 = 0; c0 < C; ++c0)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const double gv = dy.at4(n, c0, oh, ow);
                        if (gv == 0.0) continue;
                        for (int r = 0; r < kh; ++r) {
                            const int ih = oh * a.stride - a.pad_top + r;
                            if (ih < 0 || ih >= H) continue;
                            for (int c = 0; c < kw; ++c) {
                                const int iw = ow * a.stride - a.pad_left + c;
                                if (iw < 0 || iw >= W) continue;
                                const std::size_t widx = static_cast<std::size_t>((c0 * kh + r) * kw + c);
                                if (dx) dx->at4(n, c0, ih, iw) += wv.v[widx] * gv;
                                if (dwt) dwt->v[widx] += xv.at4(n, c0, ih, iw) * gv;
                            }
                        }
                    }
    });
}

Var pointwise_conv2d(Graph& g, Var x, Var w) {
    const Tensor& xv = g.value(x);
    const Tensor& wv = g.value(w);
    require_rank(xv, 4, "pointwise_conv2d", "input");
    require_rank(wv, 2, "pointwise_conv2d", "kernel");
    const int N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Co = wv.dim(0);
    if (wv.dim(1) != Ci)
        throw std::invalid_argument("pointwise_conv2d: input channels " + std::to_string(Ci) +
                                    " != kernel columns " + std::to_string(wv.dim(1)) +
                                    " (input " + shape_str(xv.shape) + ", kernel " + shape_str(wv.shape) + ")");
    const int HW = H * W;

    Tensor y({N, Co, H, W});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            double* out = &y.at4(n, co, 0, 0);
            for (int ci = 0; ci < Ci; ++ci) {
                const double wgt = wv.at2(co, ci);
                if (wgt == 0.0) continue;
                const double* in = &xv.at4(n, ci, 0, 0);
                for (int i = 0; i < HW; ++i) out[i] += wgt * in[i];
            }
        }

    return g.record(std::move(y), {x.id, w.id}, "pointwise_conv2d", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0], wid = node.inputs[1];
        const Tensor& xv = gg.node(xid).value;
        const Tensor& wv = gg.node(wid).value;
        const Tensor& dy = node.grad;
        Tensor* dx = gg.node(xid).requires_grad ? &gg.grad_buffer(xid) : nullptr;
        Tensor* dwt = gg.node(wid).requires_grad ? &gg.grad_buffer(wid) : nullptr;
        const int N = xv.dim(0), Ci = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Co = wv.dim(0);
        const int HW = H * W;
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co) {
                const double* gout = &dy.at4(n, co, 0, 0);
                for (int ci = 0; ci < Ci; ++ci) {
                    const double wgt = wv.at2(co, ci);
                    const double* in = &xv.at4(n, ci, 0, 0);
                    double* din = dx ? &dx->at4(n, ci, 0, 0) : nullptr;
                    double wacc = 0.0;
                    for (int i = 0; i < HW; ++i) {
                        if (din) din[i] += wgt * gout[i];
                        wacc += in[i] * gout[i];
                    }
                    if (dwt) dwt->at2(co, ci) += wacc;
                }
            }
    });
}

Var separable_conv2d(Graph& g, Var x, Var dw, Var pw, const Conv2dAttrs& a) {
    return pointwise_conv2d(g, depthwise_conv2d(g, x, dw, a), pw);
}

Var upsample2x(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    require_rank(xv, 4, "upsample2x", "input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor y({N, C, 2 * H, 2 * W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double v = xv.at4(n, c, h, w);
                    y.at4(n, c, 2 * h, 2 * w) = v;
                    y.at4(n, c, 2 * h, 2 * w + 1) = v;
                    y.at4(n, c, 2 * h + 1, 2 * w) = v;
                    y.at4(n, c, 2 * h + 1, 2 * w + 1) = v;
                }
    return g.record(std::move(y), {x.id}, "upsample2x", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const Tensor& dy = node.grad;
        const int N = dx.dim(0), C = dx.dim(1), H = dx.dim(2), W = dx.dim(3);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w)
                        dx.at4(n, c, h, w) += dy.at4(n, c, 2 * h, 2 * w) + dy.at4(n, c, 2 * h, 2 * w + 1) +
                                              dy.at4(n, c, 2 * h + 1, 2 * w) + dy.at4(n, c, 2 * h + 1, 2 * w + 1);
    });
}

Var batch_norm(Graph& g, Var x, Var gamma, Var beta, const BatchNormAttrs& a) {
    const Tensor& xv = g.value(x);
    require_rank(xv, 4, "batch_norm", "input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const Tensor& gv = g.value(gamma);
    const Tensor& bv = g.value(beta);
    if (gv.numel() != C || bv.numel() != C)
        throw std::invalid_argument("batch_norm: gamma " + shape_str(gv.shape) + " / beta " + shape_str(bv.shape) +
                                    " must have " + std::to_string(C) + " elements (input " + shape_str(xv.shape) + ")");

    std::vector<double> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
    const double m = static_cast<double>(N) * H * W;
    if (a.mode == BatchNormMode::Train) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n = 0; n < N; ++n)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) s += xv.at4(n, c, h, w);
            const double mu = s / m;
            double sq = 0.0;
            for (int n = 0; n < N; ++n)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const double d = xv.at4(n, c, h, w) - mu;
                        sq += d * d;
                    }
            mean[static_cast<std::size_t>(c)] = mu;
            inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(sq / m + a.eps);
            if (a.running) {
                a.running->mean.v[static_cast<std::size_t>(c)] =
                    (1.0 - a.momentum) * a.running->mean.v[static_cast<std::size_t>(c)] + a.momentum * mu;
                a.running->var.v[static_cast<std::size_t>(c)] =
                    (1.0 - a.momentum) * a.running->var.v[static_cast<std::size_t>(c)] + a.momentum * (sq / m);
            }
        }
    } else {
        if (!a.running) throw std::invalid_argument("batch_norm: eval mode requires running statistics");
        for (int c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = a.running->mean.v[static_cast<std::size_t>(c)];
            inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(a.running->var.v[static_cast<std::size_t>(c)] + a.eps);
        }
    }

    Tensor y(xv.shape);
    Tensor xhat(xv.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double mu = mean[static_cast<std::size_t>(c)];
            const double is = inv_std[static_cast<std::size_t>(c)];
            const double ga = gv.v[static_cast<std::size_t>(c)];
            const double be = bv.v[static_cast<std::size_t>(c)];
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const double xh = (xv.at4(n, c, h, w) - mu) * is;
                    xhat.at4(n, c, h, w) = xh;
                    y.at4(n, c, h, w) = ga * xh + be;
                }
        }

    const bool train = a.mode == BatchNormMode::Train;
    return g.record(std::move(y), {x.id, gamma.id, beta.id}, "batch_norm",
                    [xhat = std::move(xhat), inv_std = std::move(inv_std), train](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0], gid = node.inputs[1], bid = node.inputs[2];
        const Tensor& dy = node.grad;
        const Tensor& gv = gg.node(gid).value;
        Tensor* dx = gg.node(xid).requires_grad ? &gg.grad_buffer(xid) : nullptr;
        Tensor* dg = gg.node(gid).requires_grad ? &gg.grad_buffer(gid) : nullptr;
        Tensor* db = gg.node(bid).requires_grad ? &gg.grad_buffer(bid) : nullptr;
        const int N = dy.dim(0), C = dy.dim(1), H = dy.dim(2), W = dy.dim(3);
        const double m = static_cast<double>(N) * H * W;
        for (int c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xh = 0.0;
            for (int n = 0; n < N; ++n)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        const double d = dy.at4(n, c, h, w);
                        sum_dy += d;
                        sum_dy_xh += d * xhat.at4(n, c, h, w);
                    }
            if (dg) dg->v[static_cast<std::size_t>(c)] += sum_dy_xh;
            if (db) db->v[static_cast<std::size_t>(c)] += sum_dy;
            if (dx) {
                const double ga = gv.v[static_cast<std::size_t>(c)];
                const double is = inv_std[static_cast<std::size_t>(c)];
                if (train) {
                    for (int n = 0; n < N; ++n)
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w)
                                dx->at4(n, c, h, w) += ga * is *
                                    (dy.at4(n, c, h, w) - sum_dy / m - xhat.at4(n, c, h, w) * sum_dy_xh / m);
                } else {
                    for (int n = 0; n < N; ++n)
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w) dx->at4(n, c, h, w) += ga * is * dy.at4(n, c, h, w);
                }
            }
        }
    });
}

Var relu(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    Tensor y(xv.shape);
    for (std::size_t i = 0; i < xv.v.size(); ++i) y.v[i] = xv.v[i] > 0.0 ? xv.v[i] : 0.0;
    return g.record(std::move(y), {x.id}, "relu", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        const Tensor& xv = gg.node(xid).value;
        Tensor& dx = gg.grad_buffer(xid);
        const Tensor& dy = node.grad;
        for (std::size_t i = 0; i < dy.v.size(); ++i)
            if (xv.v[i] > 0.0) dx.v[i] += dy.v[i];
    });
}

Var tanh_act(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    Tensor y(xv.shape);
    for (std::size_t i = 0; i < xv.v.size(); ++i) y.v[i] = std::tanh(xv.v[i]);
    return g.record(std::move(y), {x.id}, "tanh", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const Tensor& dy = node.grad;
        const Tensor& yv = node.value;
        for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] += dy.v[i] * (1.0 - yv.v[i] * yv.v[i]);
    });
}

Var concat_channels(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    require_rank(av, 4, "concat_channels", "first input");
    require_rank(bv, 4, "concat_channels", "second input");
    if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
        throw std::invalid_argument("concat_channels: non-channel extents differ (" + shape_str(av.shape) +
                                    " vs " + shape_str(bv.shape) + ")");
    const int N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), H = av.dim(2), W = av.dim(3);
    Tensor y({N, Ca + Cb, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(av.v.begin() + static_cast<std::ptrdiff_t>(n * Ca * plane),
                  av.v.begin() + static_cast<std::ptrdiff_t>((n + 1) * Ca * plane),
                  y.v.begin() + static_cast<std::ptrdiff_t>(n * (Ca + Cb) * plane));
        std::copy(bv.v.begin() + static_cast<std::ptrdiff_t>(n * Cb * plane),
                  bv.v.begin() + static_cast<std::ptrdiff_t>((n + 1) * Cb * plane),
                  y.v.begin() + static_cast<std::ptrdiff_t>((n * (Ca + Cb) + Ca) * plane));
    }
    return g.record(std::move(y), {a.id, b.id}, "concat_channels", [Ca, Cb](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int aid = node.inputs[0], bid = node.inputs[1];
        const Tensor& dy = node.grad;
        const int N = dy.dim(0), H = dy.dim(2), W = dy.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        if (gg.node(aid).requires_grad) {
            Tensor& da = gg.grad_buffer(aid);
            for (int n = 0; n < N; ++n)
                for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * plane; ++i)
                    da.v[static_cast<std::size_t>(n * Ca) * plane + i] +=
                        dy.v[static_cast<std::size_t>(n * (Ca + Cb)) * plane + i];
        }
        if (gg.node(bid).requires_grad) {
            Tensor& db = gg.grad_buffer(bid);
            for (int n = 0; n < N; ++n)
                for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * plane; ++i)
                    db.v[static_cast<std::size_t>(n * Cb) * plane + i] +=
                        dy.v[(static_cast<std::size_t>(n * (Ca + Cb)) + static_cast<std::size_t>(Ca)) * plane + i];
        }
    });
}

Var reshape(Graph& g, Var x, Shape to) {
    const Tensor& xv = g.value(x);
    if (shape_numel(to) != xv.numel())
        throw std::invalid_argument("reshape: element count mismatch (" + shape_str(xv.shape) + " -> " +
                                    shape_str(to) + ")");
    Tensor y(std::move(to), xv.v);
    return g.record(std::move(y), {x.id}, "reshape", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const Tensor& dy = node.grad;
        for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] += dy.v[i];
    });
}

Var l2_norm(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    double sq = 0.0;
    for (double v : xv.v) sq += v * v;
    Tensor y({1});
    y.v[0] = std::sqrt(sq);
    return g.record(std::move(y), {x.id}, "l2_norm", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        const double norm = node.value.v[0];
        if (norm == 0.0) return;  // subgradient 0 at the origin
        const double gscale = node.grad.v[0] / norm;
        const Tensor& xv = gg.node(xid).value;
        Tensor& dx = gg.grad_buffer(xid);
        for (std::size_t i = 0; i < xv.v.size(); ++i) dx.v[i] += gscale * xv.v[i];
    });
}

Var l2_norm_rows(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    if (xv.rank() < 2)
        throw std::invalid_argument("l2_norm_rows: need rank >= 2, got " + shape_str(xv.shape));
    const int N = xv.dim(0);
    const std::size_t row = xv.v.size() / static_cast<std::size_t>(N);
    Tensor y({N});
    for (int n = 0; n < N; ++n) {
        double sq = 0.0;
        for (std::size_t i = 0; i < row; ++i) {
            const double v = xv.v[static_cast<std::size_t>(n) * row + i];
            sq += v * v;
        }
        y.v[static_cast<std::size_t>(n)] = std::sqrt(sq);
    }
    return g.record(std::move(y), {x.id}, "l2_norm_rows", [row](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        const Tensor& xv = gg.node(xid).value;
        Tensor& dx = gg.grad_buffer(xid);
        const int N = node.value.dim(0);
        for (int n = 0; n < N; ++n) {
            const double norm = node.value.v[static_cast<std::size_t>(n)];
            if (norm == 0.0) continue;
            const double gscale = node.grad.v[static_cast<std::size_t>(n)] / norm;
            for (std::size_t i = 0; i < row; ++i)
                dx.v[static_cast<std::size_t>(n) * row + i] += gscale * xv.v[static_cast<std::size_t>(n) * row + i];
        }
    });
}

Var sum_all(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    double s = 0.0;
    for (double v : xv.v) s += v;
    Tensor y({1});
    y.v[0] = s;
    return g.record(std::move(y), {x.id}, "sum", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const double gv = node.grad.v[0];
        for (double& d : dx.v) d += gv;
    });
}

Var mean_all(Graph& g, Var x) {
    const Tensor& xv = g.value(x);
    double s = 0.0;
    for (double v : xv.v) s += v;
    const double inv = 1.0 / static_cast<double>(xv.numel());
    Tensor y({1});
    y.v[0] = s * inv;
    return g.record(std::move(y), {x.id}, "mean", [inv](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const double gv = node.grad.v[0] * inv;
        for (double& d : dx.v) d += gv;
    });
}

Var subtract(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!same_shape(av, bv))
        throw std::invalid_argument("subtract: shape mismatch (" + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape) + ")");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = av.v[i] - bv.v[i];
    return g.record(std::move(y), {a.id, b.id}, "subtract", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const Tensor& dy = node.grad;
        if (gg.node(node.inputs[0]).requires_grad) {
            Tensor& da = gg.grad_buffer(node.inputs[0]);
            for (std::size_t i = 0; i < dy.v.size(); ++i) da.v[i] += dy.v[i];
        }
        if (gg.node(node.inputs[1]).requires_grad) {
            Tensor& db = gg.grad_buffer(node.inputs[1]);
            for (std::size_t i = 0; i < dy.v.size(); ++i) db.v[i] -= dy.v[i];
        }
    });
}

Var multiply(Graph& g, Var a, Var b) {
    const Tensor& av = g.value(a);
    const Tensor& bv = g.value(b);
    if (!same_shape(av, bv))
        throw std::invalid_argument("multiply: shape mismatch (" + shape_str(av.shape) + " vs " +
                                    shape_str(bv.shape) + ")");
    Tensor y(av.shape);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = av.v[i] * bv.v[i];
    return g.record(std::move(y), {a.id, b.id}, "multiply", [](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const Tensor& dy = node.grad;
        const Tensor& av = gg.node(node.inputs[0]).value;
        const Tensor& bv = gg.node(node.inputs[1]).value;
        if (gg.node(node.inputs[0]).requires_grad) {
            Tensor& da = gg.grad_buffer(node.inputs[0]);
            for (std::size_t i = 0; i < dy.v.size(); ++i) da.v[i] += dy.v[i] * bv.v[i];
        }
        if (gg.node(node.inputs[1]).requires_grad) {
            Tensor& db = gg.grad_buffer(node.inputs[1]);
            for (std::size_t i = 0; i < dy.v.size(); ++i) db.v[i] += dy.v[i] * av.v[i];
        }
    });
}

Var affine(Graph& g, Var x, double a, double b) {
    const Tensor& xv = g.value(x);
    Tensor y(xv.shape);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = a * xv.v[i] + b;
    return g.record(std::move(y), {x.id}, "affine", [a](Graph& gg, int id) {
        const auto& node = gg.node(id);
        const int xid = node.inputs[0];
        if (!gg.node(xid).requires_grad) return;
        Tensor& dx = gg.grad_buffer(xid);
        const Tensor& dy = node.grad;
        for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[i] += a * dy.v[i];
    });
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::DepthwiseConv2d: return "depthwise_conv2d";
        case LayerKind::PointwiseConv2d: return "pointwise_conv2d";
        case LayerKind::SeparableConv2d: return "separable_conv2d";
        case LayerKind::Upsample2x: return "upsample2x";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::Relu: return "relu";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::ConcatDepth: return "concat_depth";
        case LayerKind::Reshape: return "reshape";
        case LayerKind::L2Norm: return "l2_norm";
        case LayerKind::Sum: return "sum";
        case LayerKind::Subtract: return "subtract";
        case LayerKind::Multiply: return "multiply";
        case LayerKind::Affine: return "affine";
    }
    return "unknown";
}

namespace {

void expect_counts(LayerKind k, const std::vector<Var>& inputs, std::size_t ni,
                   const std::vector<Var>& params, std::size_t np) {
    if (inputs.size() != ni || params.size() != np)
        throw std::invalid_argument(std::string("layer_forward(") + layer_kind_name(k) + "): expected " +
                                    std::to_string(ni) + " inputs and " + std::to_string(np) + " params, got " +
                                    std::to_string(inputs.size()) + "/" + std::to_string(params.size()));
}

}  // namespace

Var layer_forward(Graph& g, LayerKind kind, const std::vector<Var>& inputs,
                  const std::vector<Var>& params, const LayerAttrs& attrs) {
    switch (kind) {
        case LayerKind::Conv2d:
            expect_counts(kind, inputs, 1, params, 1);
            return conv2d(g, inputs[0], params[0], attrs.conv);
        case LayerKind::DepthwiseConv2d:
            expect_counts(kind, inputs, 1, params, 1);
            return depthwise_conv2d(g, inputs[0], params[0], attrs.conv);
        case LayerKind::PointwiseConv2d:
            expect_counts(kind, inputs, 1, params, 1);
            return pointwise_conv2d(g, inputs[0], params[0]);
        case LayerKind::SeparableConv2d:
            expect_counts(kind, inputs, 1, params, 2);
            return separable_conv2d(g, inputs[0], params[0], params[1], attrs.conv);
        case LayerKind::Upsample2x:
            expect_counts(kind, inputs, 1, params, 0);
            return upsample2x(g, inputs[0]);
        case LayerKind::BatchNorm:
            expect_counts(kind, inputs, 1, params, 2);
            return batch_norm(g, inputs[0], params[0], params[1], attrs.bn);
        case LayerKind::Relu:
            expect_counts(kind, inputs, 1, params, 0);
            return relu(g, inputs[0]);
        case LayerKind::Tanh:
            expect_counts(kind, inputs, 1, params, 0);
            return tanh_act(g, inputs[0]);
        case LayerKind::ConcatDepth:
            expect_counts(kind, inputs, 2, params, 0);
            return concat_channels(g, inputs[0], inputs[1]);
        case LayerKind::Reshape:
            expect_counts(kind, inputs, 1, params, 0);
            return reshape(g, inputs[0], attrs.reshape_to);
        case LayerKind::L2Norm:
            expect_counts(kind, inputs, 1, params, 0);
            return l2_norm(g, inputs[0]);
        case LayerKind::Sum:
            expect_counts(kind, inputs, 1, params, 0);
            return sum_all(g, inputs[0]);
        case LayerKind::Subtract:
            expect_counts(kind, inputs, 2, params, 0);
            return subtract(g, inputs[0], inputs[1]);
        case LayerKind::Multiply:
            expect_counts(kind, inputs, 2, params, 0);
            return multiply(g, inputs[0], inputs[1]);
        case LayerKind::Affine:
            expect_counts(kind, inputs, 1, params, 0);
            return affine(g, inputs[0], attrs.affine_a, attrs.affine_b);
    }
    throw std::invalid_argument("layer_forward: unknown layer kind " +
                                std::to_string(static_cast<int>(kind)));
}

}  // namespace adviris::nn
