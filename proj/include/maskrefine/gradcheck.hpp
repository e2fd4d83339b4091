#pragma once

// Finite-difference verification of the hand-written backward passes.
//
// Tensor-valued layers are scalarized by weighting the output with a fixed
// random tensor; the analytic backward of that weighting is then compared
// against central differences (step 1e-3) on every input and parameter
// element, reporting max over elements of |a - n| / max(|a|, |n|, 1e-6).
//
// The finite-difference side evaluates an independent double-precision
// re-implementation of each layer (plain nested loops below). Differencing
// the float32 forward directly would divide its rounding noise by the tiny
// step and swamp small gradients; differencing the double reference instead
// measures the true derivative to ~1e-10, so the comparison isolates errors
// in the analytic backward itself.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "maskrefine/ops.hpp"
#include "maskrefine/rng.hpp"

namespace maskrefine {

struct FdProblem {
    std::function<double()> loss;  // evaluated on the current contents of elems
    std::vector<float*> elems;     // every element the loss depends on
    std::vector<float> analytic;   // analytic d(loss)/d(elem), same order
};

// Central differences with the actually-applied float step in the divisor,
// so float quantization of x +/- step does not masquerade as gradient error.
inline double fd_max_rel_error(const FdProblem& prob, double step = 1e-3) {
    double worst = 0.0;
    for (std::size_t j = 0; j < prob.elems.size(); ++j) {
        float* e = prob.elems[j];
        const float orig = *e;
        const float xp = static_cast<float>(orig + step);
        const float xm = static_cast<float>(orig - step);
        *e = xp;
        const double lp = prob.loss();
        *e = xm;
        const double lm = prob.loss();
        *e = orig;
        const double numeric = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
        const double a = prob.analytic[j];
        const double rel =
            std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
    }
    return worst;
}

// Multi-step variant for composed networks with relu kinks: an element whose
// difference interval straddles an activation flip reports a large error at a
// coarse step even when the analytic gradient is correct, so each element is
// accepted at the best of several step sizes (the check still demands that
// SOME valid step confirms the analytic value; a wrong gradient fails at
// every step).
inline double fd_max_rel_error_multi(const FdProblem& prob,
                                     std::initializer_list<double> steps = {1e-3, 1e-4, 1e-5}) {
    double worst = 0.0;
    for (std::size_t j = 0; j < prob.elems.size(); ++j) {
        float* e = prob.elems[j];
        const float orig = *e;
        const double a = prob.analytic[j];
        double best = std::numeric_limits<double>::infinity();
        for (double step : steps) {
            const float xp = static_cast<float>(orig + step);
            const float xm = static_cast<float>(orig - step);
            *e = xp;
            const double lp = prob.loss();
            *e = xm;
            const double lm = prob.loss();
            *e = orig;
            const double numeric = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            best = std::min(best, rel);
        }
        worst = std::max(worst, best);
    }
    return worst;
}

enum class LayerKind { Conv2d, MaxPool2, AvgPool2, Upsample2, Relu, Sigmoid, BceLoss, BceWithSigmoid };

namespace detail {

inline Tensor4 random_like(int n, int c, int h, int w, Rng& rng, float lo, float hi) {
    Tensor4 t(n, c, h, w);
    float* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i)
        p[i] = lo + static_cast<float>(rng.next_double01()) * (hi - lo);
    return t;
}

inline Tensor4 random_binary_like(const Tensor4& x, Rng& rng) {
    Tensor4 t(x.n(), x.c(), x.h(), x.w());
    float* p = t.data();
    for (std::size_t i = 0; i < t.size(); ++i)
        p[i] = (rng.next_u64() & 1) ? 1.0f : 0.0f;
    return t;
}

// -------------------------------------------------------------------------
// Double-precision reference forwards. Written as direct nested loops from
// the layer definitions; they share no code with the float implementations
// in ops.hpp.

inline std::vector<double> ref_conv2d(const Tensor4& x, const ConvKernel& kern) {
    const int n = x.n(), ci = x.c(), h = x.h(), w = x.w();
    const int co = kern.out_channels(), k = kern.k();
    const int r = k / 2;
    std::vector<double> y(static_cast<std::size_t>(n) * co * h * w);
    std::size_t o = 0;
    for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < co; ++oc)
            for (int oy = 0; oy < h; ++oy)
                for (int ox = 0; ox < w; ++ox, ++o) {
                    double acc = static_cast<double>(kern.bias[oc]);
                    for (int ic = 0; ic < ci; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy + ky - r, ix = ox + kx - r;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w)
                                    continue;
                                acc += static_cast<double>(kern.weights.at(oc, ic, ky, kx)) *
                                       static_cast<double>(x.at(in, ic, iy, ix));
                            }
                    y[o] = acc;
                }
    return y;
}

inline std::vector<double> ref_maxpool2(const Tensor4& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    std::vector<double> y(static_cast<std::size_t>(n) * c * (h / 2) * (w / 2));
    std::size_t o = 0;
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < h / 2; ++oy)
                for (int ox = 0; ox < w / 2; ++ox, ++o) {
                    double best = static_cast<double>(x.at(in, ic, 2 * oy, 2 * ox));
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            best = std::max(best, static_cast<double>(
                                                      x.at(in, ic, 2 * oy + dy, 2 * ox + dx)));
                    y[o] = best;
                }
    return y;
}

inline std::vector<double> ref_avgpool2(const Tensor4& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    std::vector<double> y(static_cast<std::size_t>(n) * c * (h / 2) * (w / 2));
    std::size_t o = 0;
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < h / 2; ++oy)
                for (int ox = 0; ox < w / 2; ++ox, ++o) {
                    double acc = 0.0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            acc += static_cast<double>(x.at(in, ic, 2 * oy + dy, 2 * ox + dx));
                    y[o] = acc * 0.25;
                }
    return y;
}

inline std::vector<double> ref_upsample2(const Tensor4& x) {
    const int n = x.n(), c = x.c(), h = x.h(), w = x.w();
    std::vector<double> y(static_cast<std::size_t>(n) * c * (2 * h) * (2 * w));
    std::size_t o = 0;
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int oy = 0; oy < 2 * h; ++oy)
                for (int ox = 0; ox < 2 * w; ++ox, ++o)
                    y[o] = static_cast<double>(x.at(in, ic, oy / 2, ox / 2));
    return y;
}

inline std::vector<double> ref_activation(const Tensor4& x, Act act) {
    std::vector<double> y(x.size());
    const float* p = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(p[i]);
        y[i] = act == Act::Relu ? std::max(0.0, v) : 1.0 / (1.0 + std::exp(-v));
    }
    return y;
}

inline double ref_bce(const std::vector<double>& p, const Tensor4& target) {
    double acc = 0.0;
    const float* t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
        acc -= static_cast<double>(t[i]) * std::log(q) +
               (1.0 - static_cast<double>(t[i])) * std::log(1.0 - q);
    }
    return acc / static_cast<double>(p.size());
}

inline std::vector<double> ref_of_tensor(const Tensor4& x) {
    std::vector<double> y(x.size());
    const float* p = x.data();
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = static_cast<double>(p[i]);
    return y;
}

inline double ref_weighted_sum(const std::vector<double>& y, const Tensor4& g) {
    const float* gp = g.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        acc += y[i] * static_cast<double>(gp[i]);
    return acc;
}

inline void append_elems(FdProblem& prob, Tensor4& t, const Tensor4& grad) {
    float* p = t.data();
    const float* g = grad.data();
    for (std::size_t i = 0; i < t.size(); ++i) {
        prob.elems.push_back(&p[i]);
        prob.analytic.push_back(g[i]);
    }
}

} // namespace detail

// Max relative error of the analytic backward pass of one layer against
// central finite differences on the double-precision reference forward.
// Inputs should stay small (<= 512 elements per tensor) to keep runtime
// bounded. The caller is responsible for inputs that keep the layer locally
// smooth across the step: distinct 2x2 block maxima for MaxPool2, values
// away from 0 for Relu, predictions inside the clamp interval for BceLoss.
inline double grad_check(LayerKind kind, Tensor4 x, ConvKernel kern, std::uint64_t seed) {
    Rng rng(seed);
    FdProblem prob;
    switch (kind) {
    case LayerKind::Conv2d: {
        const Tensor4 g = detail::random_like(x.n(), kern.out_channels(), x.h(), x.w(), rng, -1.0f, 1.0f);
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        auto shared_k = std::make_shared<ConvKernel>(std::move(kern));
        const ConvGrads back = conv2d_backward(*shared_x, *shared_k, g);
        prob.loss = [shared_x, shared_k, g]() {
            return detail::ref_weighted_sum(detail::ref_conv2d(*shared_x, *shared_k), g);
        };
        detail::append_elems(prob, *shared_x, back.dx);
        detail::append_elems(prob, shared_k->weights, back.dkern.weights);
        for (std::size_t i = 0; i < shared_k->bias.size(); ++i) {
            prob.elems.push_back(&shared_k->bias[i]);
            prob.analytic.push_back(back.dkern.bias[i]);
        }
        return fd_max_rel_error(prob);
    }
    case LayerKind::MaxPool2: {
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const MaxPool2Result fwd = maxpool2(*shared_x);
        const Tensor4 g = detail::random_like(fwd.y.n(), fwd.y.c(), fwd.y.h(), fwd.y.w(), rng, -1.0f, 1.0f);
        const Tensor4 dx = maxpool2_backward(*shared_x, fwd, g);
        prob.loss = [shared_x, g]() {
            return detail::ref_weighted_sum(detail::ref_maxpool2(*shared_x), g);
        };
        detail::append_elems(prob, *shared_x, dx);
        return fd_max_rel_error(prob);
    }
    case LayerKind::AvgPool2: {
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const Tensor4 y = avgpool2(*shared_x);
        const Tensor4 g = detail::random_like(y.n(), y.c(), y.h(), y.w(), rng, -1.0f, 1.0f);
        const Tensor4 dx = avgpool2_backward(g);
        prob.loss = [shared_x, g]() {
            return detail::ref_weighted_sum(detail::ref_avgpool2(*shared_x), g);
        };
        detail::append_elems(prob, *shared_x, dx);
        return fd_max_rel_error(prob);
    }
    case LayerKind::Upsample2: {
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const Tensor4 y = upsample2(*shared_x);
        const Tensor4 g = detail::random_like(y.n(), y.c(), y.h(), y.w(), rng, -1.0f, 1.0f);
        const Tensor4 dx = upsample2_backward(g);
        prob.loss = [shared_x, g]() {
            return detail::ref_weighted_sum(detail::ref_upsample2(*shared_x), g);
        };
        detail::append_elems(prob, *shared_x, dx);
        return fd_max_rel_error(prob);
    }
    case LayerKind::Relu:
    case LayerKind::Sigmoid: {
        const Act act = kind == LayerKind::Relu ? Act::Relu : Act::Sigmoid;
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const Tensor4 g = detail::random_like(shared_x->n(), shared_x->c(), shared_x->h(), shared_x->w(), rng, -1.0f, 1.0f);
        const Tensor4 dx = activation_backward(*shared_x, act, g);
        prob.loss = [shared_x, g, act]() {
            return detail::ref_weighted_sum(detail::ref_activation(*shared_x, act), g);
        };
        detail::append_elems(prob, *shared_x, dx);
        return fd_max_rel_error(prob);
    }
    case LayerKind::BceLoss: {
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const Tensor4 target = detail::random_binary_like(*shared_x, rng);
        const Tensor4 dp = bce_loss_backward(*shared_x, target);
        prob.loss = [shared_x, target]() {
            return detail::ref_bce(detail::ref_of_tensor(*shared_x), target);
        };
        detail::append_elems(prob, *shared_x, dp);
        return fd_max_rel_error(prob);
    }
    case LayerKind::BceWithSigmoid: {
        auto shared_x = std::make_shared<Tensor4>(std::move(x));
        const Tensor4 target = detail::random_binary_like(*shared_x, rng);
        const Tensor4 p = activation(*shared_x, Act::Sigmoid);
        const Tensor4 dz = activation_backward(*shared_x, Act::Sigmoid, bce_loss_backward(p, target));
        prob.loss = [shared_x, target]() {
            return detail::ref_bce(detail::ref_activation(*shared_x, Act::Sigmoid), target);
        };
        detail::append_elems(prob, *shared_x, dz);
        return fd_max_rel_error(prob);
    }
    }
    throw Error("grad_check: layer has no registered backward");
}

inline double grad_check(LayerKind kind, Tensor4 x, std::uint64_t seed) {
    return grad_check(kind, std::move(x), make_kernel(1, 1, 1), seed);
}

} // namespace maskrefine
