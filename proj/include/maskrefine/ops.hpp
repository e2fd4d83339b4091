#pragma once

// Forward and backward passes for the layer set used by the refiner network:
// same-shape 3x3 / pointwise 1x1 convolution, 2x2 max and average pooling,
// nearest-neighbour upsampling, channel concatenation, relu/sigmoid and
// binary cross entropy. Backward passes are hand written per layer.
//
// Summations run in a fixed sequential order per output element, so identical
// inputs give bit-identical outputs on any run of the same build.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <utility>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/tensor.hpp"

namespace maskrefine {

// ---------------------------------------------------------------------------
// Convolution

struct ConvKernel {
    Tensor4 weights;          // (c_out, c_in, k, k), k in {1, 3}
    std::vector<float> bias;  // one per output channel

    int out_channels() const { return weights.n(); }
    int in_channels() const { return weights.c(); }
    int k() const { return weights.h(); }
};

inline ConvKernel make_kernel(int c_out, int c_in, int k) {
    if (k != 1 && k != 3)
        throw DimError("ConvKernel: kernel size must be 1 or 3");
    if (c_out < 1 || c_in < 1)
        throw DimError("ConvKernel: channel counts must be >= 1");
    return ConvKernel{Tensor4(c_out, c_in, k, k), std::vector<float>(c_out, 0.0f)};
}

// Same-spatial-shape cross-correlation. k=3 uses zero padding 1, k=1 is a
// pointwise channel mix. Per-output-channel bias is added first, then input
// channels and kernel taps accumulate in (c_in, ky, kx) order.
inline Tensor4 conv2d(const Tensor4& x, const ConvKernel& kern) {
    const int n = x.n(), ci = x.c(), h = x.h(), w = x.w();
    const int co = kern.out_channels(), k = kern.k(), pad = k / 2;
    if (kern.in_channels() != ci)
        throw DimError("conv2d: kernel expects " + std::to_string(kern.in_channels()) +
                       " input channels, tensor has " + std::to_string(ci));

    Tensor4 y(n, co, h, w);
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < co; ++oc) {
            float* yp = &y.at(in, oc, 0, 0);
            const float b = kern.bias[oc];
            for (int i = 0; i < h * w; ++i)
                yp[i] = b;
            for (int ic = 0; ic < ci; ++ic) {
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float wgt = kern.weights.at(oc, ic, ky, kx);
                        const int oy = ky - pad, ox = kx - pad;
                        const int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
                        const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
                        for (int yy = y0; yy < y1; ++yy) {
                            const float* xrow = &x.at(in, ic, yy + oy, x0 + ox);
                            float* yrow = &yp[yy * w + x0];
                            const int span = x1 - x0;
                            for (int xx = 0; xx < span; ++xx)
                                yrow[xx] += wgt * xrow[xx];
                        }
                    }
                }
            }
        }
    }
    return y;
}

struct ConvGrads {
    Tensor4 dx;
    ConvKernel dkern;
};

inline ConvGrads conv2d_backward(const Tensor4& x, const ConvKernel& kern, const Tensor4& dy) {
    const int n = x.n(), ci = x.c(), h = x.h(), w = x.w();
    const int co = kern.out_channels(), k = kern.k(), pad = k / 2;
    if (kern.in_channels() != ci)
        throw DimError("conv2d_backward: channel mismatch");
    if (dy.n() != n || dy.c() != co || dy.h() != h || dy.w() != w)
        throw DimError("conv2d_backward: upstream gradient dims mismatch");

    ConvGrads g{Tensor4(n, ci, h, w),
                ConvKernel{Tensor4(co, ci, k, k), std::vector<float>(co, 0.0f)}};
    for (int in = 0; in < n; ++in) {
        for (int oc = 0; oc < co; ++oc) {
            const float* dyp = &dy.at(in, oc, 0, 0);
            float db = 0.0f;
            for (int i = 0; i < h * w; ++i)
                db += dyp[i];
            g.dkern.bias[oc] += db;
            for (int ic = 0; ic < ci; ++ic) {
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float wgt = kern.weights.at(oc, ic, ky, kx);
                        const int oy = ky - pad, ox = kx - pad;
                        const int y0 = std::max(0, -oy), y1 = std::min(h, h - oy);
                        const int x0 = std::max(0, -ox), x1 = std::min(w, w - ox);
                        float dw = 0.0f;
                        for (int yy = y0; yy < y1; ++yy) {
                            const float* dyrow = &dy.at(in, oc, yy, x0);
                            const float* xrow = &x.at(in, ic, yy + oy, x0 + ox);
                            float* dxrow = &g.dx.at(in, ic, yy + oy, x0 + ox);
                            const int span = x1 - x0;
                            for (int xx = 0; xx < span; ++xx) {
                                dw += dyrow[xx] * xrow[xx];
                                dxrow[xx] += wgt * dyrow[xx];
                            }
                        }
                        g.dkern.weights.at(oc, ic, ky, kx) += dw;
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Pooling and upsampling

struct MaxPool2Result {
    Tensor4 y;
    std::vector<std::int32_t> argmax;  // flat input index of each block winner
};

// 2x2 max pooling. Ties go to the first occurrence in row-major block order,
// so the backward routing is deterministic.
inline MaxPool2Result maxpool2(const Tensor4& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw DimError("maxpool2: spatial dims must be even");
    const int n = x.n(), c = x.c(), oh = x.h() / 2, ow = x.w() / 2;
    MaxPool2Result r{Tensor4(n, c, oh, ow),
                     std::vector<std::int32_t>(static_cast<std::size_t>(n) * c * oh * ow)};
    std::size_t o = 0;
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float best = x.at(in, ic, 2 * oy, 2 * ox);
                    std::size_t bi = x.index(in, ic, 2 * oy, 2 * ox);
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const float v = x.at(in, ic, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) {
                                best = v;
                                bi = x.index(in, ic, 2 * oy + dy, 2 * ox + dx);
                            }
                        }
                    }
                    r.y.at(in, ic, oy, ox) = best;
                    r.argmax[o++] = static_cast<std::int32_t>(bi);
                }
            }
        }
    }
    return r;
}

inline Tensor4 maxpool2_backward(const Tensor4& x, const MaxPool2Result& fwd, const Tensor4& dy) {
    if (!dy.same_dims(fwd.y))
        throw DimError("maxpool2_backward: upstream gradient dims mismatch");
    Tensor4 dx(x.n(), x.c(), x.h(), x.w());
    const float* dyp = dy.data();
    float* dxp = dx.data();
    for (std::size_t i = 0; i < dy.size(); ++i)
        dxp[fwd.argmax[i]] += dyp[i];
    return dx;
}

inline Tensor4 avgpool2(const Tensor4& x) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw DimError("avgpool2: spatial dims must be even");
    const int n = x.n(), c = x.c(), oh = x.h() / 2, ow = x.w() / 2;
    Tensor4 y(n, c, oh, ow);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    y.at(in, ic, oy, ox) =
                        (((x.at(in, ic, 2 * oy, 2 * ox) + x.at(in, ic, 2 * oy, 2 * ox + 1)) +
                          x.at(in, ic, 2 * oy + 1, 2 * ox)) +
                         x.at(in, ic, 2 * oy + 1, 2 * ox + 1)) *
                        0.25f;
    return y;
}

inline Tensor4 avgpool2_backward(const Tensor4& dy) {
    const int n = dy.n(), c = dy.c(), oh = dy.h(), ow = dy.w();
    Tensor4 dx(n, c, 2 * oh, 2 * ow);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const float v = dy.at(in, ic, oy, ox) * 0.25f;
                    dx.at(in, ic, 2 * oy, 2 * ox) = v;
                    dx.at(in, ic, 2 * oy, 2 * ox + 1) = v;
                    dx.at(in, ic, 2 * oy + 1, 2 * ox) = v;
                    dx.at(in, ic, 2 * oy + 1, 2 * ox + 1) = v;
                }
    return dx;
}

// Nearest-neighbour duplication: out(2i+di, 2j+dj) = x(i, j).
inline Tensor4 upsample2(const Tensor4& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    Tensor4 y(n, c, 2 * h, 2 * w);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const float v = x.at(in, ic, iy, ix);
                    y.at(in, ic, 2 * iy, 2 * ix) = v;
                    y.at(in, ic, 2 * iy, 2 * ix + 1) = v;
                    y.at(in, ic, 2 * iy + 1, 2 * ix) = v;
                    y.at(in, ic, 2 * iy + 1, 2 * ix + 1) = v;
                }
    return y;
}

inline Tensor4 upsample2_backward(const Tensor4& dy) {
    if (dy.h() % 2 != 0 || dy.w() % 2 != 0)
        throw DimError("upsample2_backward: spatial dims must be even");
    const int n = dy.n(), c = dy.c(), h = dy.h() / 2, w = dy.w() / 2;
    Tensor4 dx(n, c, h, w);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix)
                    dx.at(in, ic, iy, ix) =
                        (((dy.at(in, ic, 2 * iy, 2 * ix) + dy.at(in, ic, 2 * iy, 2 * ix + 1)) +
                          dy.at(in, ic, 2 * iy + 1, 2 * ix)) +
                         dy.at(in, ic, 2 * iy + 1, 2 * ix + 1));
    return dx;
}

// ---------------------------------------------------------------------------
// Concatenation

// Channels of a followed by channels of b; a bit-exact copy of both.
inline Tensor4 concat_c(const Tensor4& a, const Tensor4& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw DimError("concat_c: batch/spatial dims mismatch");
    const int n = a.n(), h = a.h(), w = a.w();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t ablock = plane * a.c(), bblock = plane * b.c();
    Tensor4 y(n, a.c() + b.c(), h, w);
    for (int in = 0; in < n; ++in) {
        std::memcpy(&y.at(in, 0, 0, 0), &a.at(in, 0, 0, 0), ablock * sizeof(float));
        std::memcpy(&y.at(in, a.c(), 0, 0), &b.at(in, 0, 0, 0), bblock * sizeof(float));
    }
    return y;
}

// Inverse of concat_c: first ca channels, then the rest.
inline std::pair<Tensor4, Tensor4> split_c(const Tensor4& x, int ca) {
    if (ca < 1 || ca >= x.c())
        throw DimError("split_c: split point out of range");
    const int n = x.n(), h = x.h(), w = x.w(), cb = x.c() - ca;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor4 a(n, ca, h, w), b(n, cb, h, w);
    for (int in = 0; in < n; ++in) {
        std::memcpy(&a.at(in, 0, 0, 0), &x.at(in, 0, 0, 0), plane * ca * sizeof(float));
        std::memcpy(&b.at(in, 0, 0, 0), &x.at(in, ca, 0, 0), plane * cb * sizeof(float));
    }
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Activations

enum class Act { Relu, Sigmoid };

// Logistic in double, then rounded to float. Float rounding can collapse the
// extremes to exactly 0 or 1; those collapse back into the open interval so
// downstream probabilities and thresholds keep their strict contracts.
inline float sigmoid_scalar(float v) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
    float f = static_cast<float>(s);
    if (f <= 0.0f)
        f = std::numeric_limits<float>::min();
    if (f >= 1.0f)
        f = 1.0f - 0x1.0p-24f;
    return f;
}

inline Tensor4 activation(const Tensor4& x, Act kind) {
    Tensor4 y(x.n(), x.c(), x.h(), x.w());
    const float* xp = x.data();
    float* yp = y.data();
    if (kind == Act::Relu) {
        for (std::size_t i = 0; i < x.size(); ++i)
            yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i)
            yp[i] = sigmoid_scalar(xp[i]);
    }
    return y;
}

// Backward of activation given the pre-activation input x. relu uses the
// zero subgradient at exactly 0.
inline Tensor4 activation_backward(const Tensor4& x, Act kind, const Tensor4& dy) {
    if (!x.same_dims(dy))
        throw DimError("activation_backward: dims mismatch");
    Tensor4 dx(x.n(), x.c(), x.h(), x.w());
    const float* xp = x.data();
    const float* dyp = dy.data();
    float* dxp = dx.data();
    if (kind == Act::Relu) {
        for (std::size_t i = 0; i < x.size(); ++i)
            dxp[i] = xp[i] > 0.0f ? dyp[i] : 0.0f;
    } else {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float s = sigmoid_scalar(xp[i]);
            dxp[i] = dyp[i] * s * (1.0f - s);
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Binary cross entropy

constexpr double kBceEps = 1e-7;

// Mean over all elements of -[t ln p + (1-t) ln(1-p)], with p clamped to
// [eps, 1-eps] before the logs. The scalar reduction runs in double so the
// loss carries enough precision for finite-difference verification; tensor
// data stays float32.
inline double bce_loss(const Tensor4& pred, const Tensor4& target) {
    if (!pred.same_dims(target))
        throw DimError("bce_loss: dims mismatch");
    const float* pp = pred.data();
    const float* tp = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pp[i]), kBceEps, 1.0 - kBceEps);
        const double t = tp[i];
        acc -= t * std::log(p) + (1.0 - t) * std::log1p(-p);
    }
    return acc / static_cast<double>(pred.size());
}

// d(loss)/d(pred), evaluated at the clamped prediction.
inline Tensor4 bce_loss_backward(const Tensor4& pred, const Tensor4& target) {
    if (!pred.same_dims(target))
        throw DimError("bce_loss_backward: dims mismatch");
    Tensor4 dp(pred.n(), pred.c(), pred.h(), pred.w());
    const float* pp = pred.data();
    const float* tp = target.data();
    float* dpp = dp.data();
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(static_cast<double>(pp[i]), kBceEps, 1.0 - kBceEps);
        const double t = tp[i];
        dpp[i] = static_cast<float>(((1.0 - t) / (1.0 - p) - t / p) * inv_n);
    }
    return dp;
}

} // namespace maskrefine
