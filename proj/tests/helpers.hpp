#pragma once

// Shared test utilities: finite-difference input generators that keep inputs
// away from non-smooth points, an independent naive-loop reference for the
// Bayesian refiner, and the detail-mask generator used by the comparison
// tests. Nothing here shares code with the library implementations it checks.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "maskrefine/image.hpp"
#include "maskrefine/refiner.hpp"
#include "maskrefine/rng.hpp"
#include "maskrefine/synth.hpp"
#include "maskrefine/tensor.hpp"

namespace testutil {

using maskrefine::Mask;
using maskrefine::Rng;
using maskrefine::Tensor4;

// Uniform values in [-1, 1]; fine for linear layers and smooth activations.
inline Tensor4 fd_smooth_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4 t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.raw()[i] = static_cast<float>(rng.next_double01() * 2.0 - 1.0);
    return t;
}

// Values with |v| >= 0.05, so the finite-difference step (1e-3) never crosses
// the relu kink.
inline Tensor4 fd_relu_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4 t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = rng.next_double01() * 2.0 - 1.0;
        t.raw()[i] = static_cast<float>(v >= 0.0 ? v + 0.05 : v - 0.05);
    }
    return t;
}

// Every 2x2 block holds the values {base, base+0.25, base+0.5, base+0.75} in
// a PRNG-chosen arrangement: block maxima are unique with margin 0.25, far
// beyond the finite-difference step, and the winner position is random.
inline Tensor4 fd_maxpool_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4 t(n, c, h, w);
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int by = 0; by < h / 2; ++by)
                for (int bx = 0; bx < w / 2; ++bx) {
                    std::vector<float> vals = {0.0f, 0.25f, 0.5f, 0.75f};
                    maskrefine::shuffle(vals, rng);
                    const float base = static_cast<float>(rng.next_double01() - 0.5);
                    t.at(in, ic, 2 * by, 2 * bx) = base + vals[0];
                    t.at(in, ic, 2 * by, 2 * bx + 1) = base + vals[1];
                    t.at(in, ic, 2 * by + 1, 2 * bx) = base + vals[2];
                    t.at(in, ic, 2 * by + 1, 2 * bx + 1) = base + vals[3];
                }
    return t;
}

// Probabilities in [0.05, 0.95]: inside the BCE clamp with wide margin.
inline Tensor4 fd_prob_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4 t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.raw()[i] = static_cast<float>(0.05 + rng.next_double01() * 0.9);
    return t;
}

// Logits in [-3, 3]: sigmoid output stays in (0.047, 0.953).
inline Tensor4 fd_logit_input(int n, int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor4 t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.raw()[i] = static_cast<float>(rng.next_double01() * 6.0 - 3.0);
    return t;
}

inline maskrefine::ConvKernel fd_random_kernel(int c_out, int c_in, int k, std::uint64_t seed) {
    Rng rng(seed);
    maskrefine::ConvKernel kern = maskrefine::make_kernel(c_out, c_in, k);
    for (auto& v : kern.weights.raw())
        v = static_cast<float>(rng.next_double01() * 2.0 - 1.0);
    for (auto& v : kern.bias)
        v = static_cast<float>(rng.next_double01() * 2.0 - 1.0);
    return kern;
}

inline Mask random_mask(int h, int w, std::uint64_t seed, double p_fg = 0.5) {
    Rng rng(seed);
    Mask m(h, w);
    for (auto& px : m.px)
        px = rng.next_double01() < p_fg ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Double-precision reference of the refiner network: a separate naive-loop
// forward pass over double-valued grids, reading the same float parameters.
// It serves two purposes: as an independent architecture oracle for the
// float forward, and as the smooth function the full-network gradient check
// differentiates (differencing the float forward would bury small gradients
// in rounding noise).

struct DGrid {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;
    DGrid() = default;
    DGrid(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}
    double& at(int in, int ic, int y, int x) {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x];
    }
    double at(int in, int ic, int y, int x) const {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x];
    }
};

inline DGrid dgrid_of(const Tensor4& t) {
    DGrid g(t.n(), t.c(), t.h(), t.w());
    for (std::size_t i = 0; i < t.size(); ++i)
        g.v[i] = static_cast<double>(t.raw()[i]);
    return g;
}

inline DGrid dconv(const DGrid& x, const maskrefine::ConvKernel& kern) {
    const int k = kern.k(), r = k / 2, co = kern.out_channels();
    DGrid y(x.n, co, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < co; ++oc)
            for (int oy = 0; oy < x.h; ++oy)
                for (int ox = 0; ox < x.w; ++ox) {
                    double acc = static_cast<double>(kern.bias[oc]);
                    for (int ic = 0; ic < x.c; ++ic)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int iy = oy + ky - r, ix = ox + kx - r;
                                if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w)
                                    continue;
                                acc += static_cast<double>(kern.weights.at(oc, ic, ky, kx)) *
                                       x.at(in, ic, iy, ix);
                            }
                    y.at(in, oc, oy, ox) = acc;
                }
    return y;
}

inline DGrid drelu(DGrid x) {
    for (auto& v : x.v)
        v = std::max(0.0, v);
    return x;
}

inline DGrid dmaxpool(const DGrid& x) {
    DGrid y(x.n, x.c, x.h / 2, x.w / 2);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox) {
                    double best = x.at(in, ic, 2 * oy, 2 * ox);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            best = std::max(best, x.at(in, ic, 2 * oy + dy, 2 * ox + dx));
                    y.at(in, ic, oy, ox) = best;
                }
    return y;
}

inline DGrid davgpool(const DGrid& x) {
    DGrid y(x.n, x.c, x.h / 2, x.w / 2);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox)
                    y.at(in, ic, oy, ox) = 0.25 * (x.at(in, ic, 2 * oy, 2 * ox) +
                                                   x.at(in, ic, 2 * oy, 2 * ox + 1) +
                                                   x.at(in, ic, 2 * oy + 1, 2 * ox) +
                                                   x.at(in, ic, 2 * oy + 1, 2 * ox + 1));
    return y;
}

inline DGrid dupsample(const DGrid& x) {
    DGrid y(x.n, x.c, 2 * x.h, 2 * x.w);
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (int oy = 0; oy < y.h; ++oy)
                for (int ox = 0; ox < y.w; ++ox)
                    y.at(in, ic, oy, ox) = x.at(in, ic, oy / 2, ox / 2);
    return y;
}

inline DGrid dconcat(const DGrid& a, const DGrid& b) {
    DGrid y(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            for (int iy = 0; iy < a.h; ++iy)
                for (int ix = 0; ix < a.w; ++ix)
                    y.at(in, ic, iy, ix) = a.at(in, ic, iy, ix);
        for (int ic = 0; ic < b.c; ++ic)
            for (int iy = 0; iy < a.h; ++iy)
                for (int ix = 0; ix < a.w; ++ix)
                    y.at(in, a.c + ic, iy, ix) = b.at(in, ic, iy, ix);
    }
    return y;
}

// Full-network reference forward: per-pixel foreground probability.
inline DGrid ref_forward(const maskrefine::RefinerConfig& cfg,
                         const maskrefine::RefinerParams& params, const Tensor4& mask,
                         const Tensor4& source) {
    const int L = cfg.levels;
    std::vector<DGrid> pyramid{dgrid_of(source)};
    for (int l = 1; l <= L; ++l)
        pyramid.push_back(davgpool(pyramid.back()));

    std::vector<DGrid> enc(static_cast<std::size_t>(L) + 1);
    DGrid x = dgrid_of(mask);
    for (int l = 0; l <= L; ++l) {
        DGrid in = dconcat(x, pyramid[l]);
        enc[l] = drelu(dconv(drelu(dconv(in, params.encoder[l].conv1)),
                             params.encoder[l].conv2));
        if (l < L)
            x = dmaxpool(enc[l]);
    }

    DGrid d = enc[L];
    for (int l = L; l >= 1; --l) {
        DGrid in = dconcat(dupsample(d), enc[l - 1]);
        d = drelu(dconv(drelu(dconv(in, params.decoder[l - 1].conv1)),
                        params.decoder[l - 1].conv2));
    }

    DGrid z = dconv(d, params.head);
    for (auto& v : z.v)
        v = 1.0 / (1.0 + std::exp(-v));
    return z;
}

// Reference loss: mean binary cross-entropy of the reference forward.
inline double ref_net_loss(const maskrefine::RefinerConfig& cfg,
                           const maskrefine::RefinerParams& params, const Tensor4& mask,
                           const Tensor4& source, const Tensor4& target) {
    const DGrid p = ref_forward(cfg, params, mask, source);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.v.size(); ++i) {
        const double q = std::min(std::max(p.v[i], 1e-7), 1.0 - 1e-7);
        const double t = static_cast<double>(target.raw()[i]);
        acc -= t * std::log(q) + (1.0 - t) * std::log(1.0 - q);
    }
    return acc / static_cast<double>(p.v.size());
}

// ---------------------------------------------------------------------------
// Independent Bayesian reference: naive nested loops, no weight table, no
// shared code with the library. Follows the written rule directly: Gaussian
// vote over the clipped window excluding the center, threshold with >=,
// synchronous sweeps until fixed point or the iteration cap.

inline double naive_posterior_at(const Mask& m, int y, int x, int window, double sigma) {
    const int r = window / 2;
    double num = 0.0, den = 0.0;
    for (int ny = y - r; ny <= y + r; ++ny) {
        for (int nx = x - r; nx <= x + r; ++nx) {
            if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w)
                continue;
            if (ny == y && nx == x)
                continue;
            const double d2 = static_cast<double>(ny - y) * (ny - y) +
                              static_cast<double>(nx - x) * (nx - x);
            const double g = std::exp(-d2 / (2.0 * sigma * sigma));
            den += g;
            if (m.at(ny, nx))
                num += g;
        }
    }
    return num / den;
}

inline Mask naive_refine(const Mask& input, int window, double sigma, int max_iters,
                         double threshold) {
    Mask cur = input;
    for (int it = 0; it < max_iters; ++it) {
        Mask next(cur.h, cur.w);
        for (int y = 0; y < cur.h; ++y)
            for (int x = 0; x < cur.w; ++x)
                next.at(y, x) = naive_posterior_at(cur, y, x, window, sigma) >= threshold ? 1 : 0;
        if (next == cur)
            return cur;
        cur = next;
    }
    return cur;
}

// ---------------------------------------------------------------------------
// Detail masks: filled rectangles with 1-pixel-wide 6-pixel spurs attached at
// corners, plus a carved corner notch. The spur pixels are the foreground
// detail set; a neighborhood smoother erodes them while a source-aware
// refiner can keep them, since the ground truth marks them foreground and the
// rendered source therefore gives them foreground intensity.

struct DetailMask {
    Mask mask;
    std::vector<std::pair<int, int>> detail;  // spur pixels (foreground detail)
};

inline DetailMask make_detail_mask(std::uint64_t seed, int h, int w) {
    Rng rng(seed);
    DetailMask dm;
    dm.mask = Mask(h, w);

    // One or two filled rectangles, kept away from the border so spurs fit.
    const int nrect = 1 + static_cast<int>(rng.next_below(2));
    struct Rect {
        int y0, x0, y1, x1;
    };
    std::vector<Rect> rects;
    for (int i = 0; i < nrect; ++i) {
        const int rh = 10 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(h / 4)));
        const int rw = 10 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(w / 4)));
        const int y0 = 8 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(h - rh - 16)));
        const int x0 = 8 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(w - rw - 16)));
        rects.push_back({y0, x0, y0 + rh - 1, x0 + rw - 1});
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x)
                dm.mask.at(y, x) = 1;
    }

    // 4x4 notch at the first rectangle's top-left corner.
    for (int y = rects[0].y0; y < rects[0].y0 + 4; ++y)
        for (int x = rects[0].x0; x < rects[0].x0 + 4; ++x)
            dm.mask.at(y, x) = 0;

    // Spurs extending outward from rectangle corners; directions (dy, dx)
    // point away from the rectangle along one of its edges.
    for (const Rect& rc : rects) {
        const int corners[4][4] = {
            // y, x, dy, dx
            {rc.y1, rc.x1, 0, 1},   // bottom-right corner, spur to the right
            {rc.y1, rc.x0, 1, 0},   // bottom-left corner, spur downward
            {rc.y0, rc.x1, -1, 0},  // top-right corner, spur upward
            {rc.y0, rc.x0, 0, -1},  // top-left corner, spur to the left
        };
        for (const auto& c : corners) {
            // Skip if overwritten by the notch or leaving the image.
            if (!dm.mask.at(c[0], c[1]))
                continue;
            const int ey = c[0] + 6 * c[2], ex = c[1] + 6 * c[3];
            if (ey < 0 || ey >= h || ex < 0 || ex >= w)
                continue;
            bool clear = true;
            for (int i = 1; i <= 6; ++i)
                if (dm.mask.at(c[0] + i * c[2], c[1] + i * c[3]))
                    clear = false;
            if (!clear)
                continue;
            for (int i = 1; i <= 6; ++i) {
                const int y = c[0] + i * c[2], x = c[1] + i * c[3];
                dm.mask.at(y, x) = 1;
                dm.detail.emplace_back(y, x);
            }
        }
    }
    return dm;
}

// Fraction of detail pixels a refined mask kept as foreground.
inline double detail_recall(const Mask& refined, const std::vector<std::pair<int, int>>& detail) {
    if (detail.empty())
        return 1.0;
    int kept = 0;
    for (const auto& [y, x] : detail)
        kept += refined.at(y, x) ? 1 : 0;
    return static_cast<double>(kept) / static_cast<double>(detail.size());
}

} // namespace testutil
