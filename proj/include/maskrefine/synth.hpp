#pragma once

// Synthetic dataset generation: clean ground-truth masks (unions of random
// rectangles and ellipses), background-subtraction-style corruption of those
// masks, and gray source frames rendered from them. Everything is a pure
// function of its seed. Mask generation and corruption use only integer
// PRNG draws and exact arithmetic, so mask bits reproduce across platforms;
// rendered sources go through transcendental functions and are only expected
// to reproduce within normal math-library variance.

#include <cstdint>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/image.hpp"
#include "maskrefine/rng.hpp"

namespace maskrefine {

struct NoiseConfig {
    double p_flip_fg = 0.05;  // probability a foreground pixel is reported background
    double p_flip_bg = 0.05;
    int jitter_radius = 1;    // boundary displacement radius
    int blob_count = 3;       // spurious foreground speckles
    int blob_radius = 2;
};

struct RenderParams {
    double mu_fg = 0.7;
    double mu_bg = 0.3;
    double noise_sigma = 0.1;
};

// One training/eval triple. All three images share dims.
struct Sample {
    GrayImage source;
    Mask mask_noisy;
    Mask mask_gt;
};

// Union of n_shapes axis-aligned rectangles and ellipses. Per shape the draw
// order is: type bit, cx, cy, extent_x, extent_y; extents lie in [h/8, h/2].
// Membership tests run in exact integer arithmetic.
inline Mask gen_clean_mask(std::uint64_t seed, int h, int w, int n_shapes) {
    if (h < 16 || w < 16)
        throw ValueError("gen_clean_mask: h and w must be >= 16");
    if (n_shapes < 1 || n_shapes > 8)
        throw ValueError("gen_clean_mask: n_shapes must be in [1, 8]");
    Rng rng(seed);
    Mask m(h, w);
    const int lo = h / 8, hi = h / 2;
    for (int s = 0; s < n_shapes; ++s) {
        const bool ellipse = (rng.next_u64() & 1) != 0;
        const int cx = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(w)));
        const int cy = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(h)));
        const std::int64_t ex = lo + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hi - lo + 1)));
        const std::int64_t ey = lo + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hi - lo + 1)));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::int64_t dx = x - cx, dy = y - cy;
                bool inside;
                if (ellipse) {
                    // (2dx/ex)^2 + (2dy/ey)^2 <= 1, cleared of denominators
                    const std::int64_t lhs = 4 * dx * dx * ey * ey + 4 * dy * dy * ex * ex;
                    inside = lhs <= ex * ex * ey * ey;
                } else {
                    inside = 2 * std::abs(dx) <= ex && 2 * std::abs(dy) <= ey;
                }
                if (inside)
                    m.at(y, x) = 1;
            }
        }
    }
    return m;
}

namespace detail {

inline bool is_boundary(const Mask& m, int y, int x) {
    const std::uint8_t v = m.at(y, x);
    if (y > 0 && m.at(y - 1, x) != v) return true;
    if (y + 1 < m.h && m.at(y + 1, x) != v) return true;
    if (x > 0 && m.at(y, x - 1) != v) return true;
    if (x + 1 < m.w && m.at(y, x + 1) != v) return true;
    return false;
}

} // namespace detail

// Corruption stages in fixed order: (1) boundary jitter, each boundary pixel
// of the input re-sampled from a PRNG-displaced position (row offset drawn
// first, then column offset, clamped to the image); (2) independent label
// flips at p_flip_fg / p_flip_bg, one uniform draw per pixel in row-major
// order; (3) blob_count disc-shaped foreground speckles at PRNG centres.
inline Mask corrupt(const Mask& gt, const NoiseConfig& cfg, std::uint64_t seed) {
    if (!is_binary(gt))
        throw ValueError("corrupt: mask must be binary");
    Rng rng(seed);
    Mask out = gt;

    if (cfg.jitter_radius > 0) {
        const int r = cfg.jitter_radius;
        const std::uint32_t d = static_cast<std::uint32_t>(2 * r + 1);
        for (int y = 0; y < gt.h; ++y) {
            for (int x = 0; x < gt.w; ++x) {
                if (!detail::is_boundary(gt, y, x))
                    continue;
                const int dy = static_cast<int>(rng.next_below(d)) - r;
                const int dx = static_cast<int>(rng.next_below(d)) - r;
                const int sy = std::clamp(y + dy, 0, gt.h - 1);
                const int sx = std::clamp(x + dx, 0, gt.w - 1);
                out.at(y, x) = gt.at(sy, sx);
            }
        }
    }

    for (std::size_t i = 0; i < out.px.size(); ++i) {
        const double u = rng.next_double01();
        if (out.px[i]) {
            if (u < cfg.p_flip_fg)
                out.px[i] = 0;
        } else {
            if (u < cfg.p_flip_bg)
                out.px[i] = 1;
        }
    }

    for (int b = 0; b < cfg.blob_count; ++b) {
        const int cx = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(gt.w)));
        const int cy = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(gt.h)));
        const int r = cfg.blob_radius;
        for (int y = std::max(0, cy - r); y <= std::min(gt.h - 1, cy + r); ++y)
            for (int x = std::max(0, cx - r); x <= std::min(gt.w - 1, cx + r); ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                    out.at(y, x) = 1;
    }
    return out;
}

// pixel = clamp(mu_label + N(0, noise_sigma), 0, 1), one gaussian per pixel
// in row-major order.
inline GrayImage render_source(const Mask& gt, std::uint64_t seed, const RenderParams& rp = {}) {
    if (!(0.0 <= rp.mu_bg && rp.mu_bg < rp.mu_fg && rp.mu_fg <= 1.0))
        throw ValueError("render_source: need 0 <= mu_bg < mu_fg <= 1");
    if (!is_binary(gt))
        throw ValueError("render_source: mask must be binary");
    Rng rng(seed);
    GrayImage img(gt.h, gt.w);
    for (std::size_t i = 0; i < gt.px.size(); ++i) {
        const double mu = gt.px[i] ? rp.mu_fg : rp.mu_bg;
        const double v = mu + rng.next_gaussian() * rp.noise_sigma;
        img.px[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return img;
}

// Per-sample sub-seeds come from one splitmix64 step on (seed XOR index), so
// samples are order-independent and any prefix of a dataset is stable.
inline std::vector<Sample> make_dataset(std::uint64_t seed, int count, int h, int w,
                                        const NoiseConfig& noise = {},
                                        const RenderParams& render = {}, int n_shapes = 3) {
    if (count < 1)
        throw ValueError("make_dataset: count must be >= 1");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::uint64_t sub = splitmix64_of(seed ^ static_cast<std::uint64_t>(i));
        Rng sr(sub);
        const std::uint64_t seed_gt = sr.next_u64();
        const std::uint64_t seed_noise = sr.next_u64();
        const std::uint64_t seed_src = sr.next_u64();
        Sample s;
        s.mask_gt = gen_clean_mask(seed_gt, h, w, n_shapes);
        s.mask_noisy = corrupt(s.mask_gt, noise, seed_noise);
        s.source = render_source(s.mask_gt, seed_src, render);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace maskrefine
