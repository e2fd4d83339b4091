#pragma once

// Classical Bayesian neighborhood refinement of binary masks: each pixel's
// foreground posterior is a Gaussian-weighted vote over its window (center
// excluded), thresholded and iterated synchronously to a fixed point. This is
// the baseline the learned refiner is compared against, and also the method
// whose over-smoothing of thin structures the corner-erosion probe exhibits.

#include <cmath>
#include <cstdint>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/image.hpp"

namespace maskrefine {

struct BayesConfig {
    int window = 5;               // odd, >= 3
    double sigma = 1.5;           // spatial Gaussian scale in pixels
    int max_iters = 10;
    double flip_threshold = 0.5;  // posterior >= threshold -> foreground
};

namespace detail {

inline void validate_bayes(const BayesConfig& cfg) {
    if (cfg.window < 3 || cfg.window % 2 == 0)
        throw ValueError("BayesConfig: window must be odd and >= 3");
    if (!(cfg.sigma > 0.0))
        throw ValueError("BayesConfig: sigma must be > 0");
    if (cfg.max_iters < 1)
        throw ValueError("BayesConfig: max_iters must be >= 1");
    if (!(cfg.flip_threshold > 0.0 && cfg.flip_threshold < 1.0))
        throw ValueError("BayesConfig: flip_threshold must be in (0, 1)");
}

// Window weight table, center entry zeroed (a pixel is not its own evidence).
inline std::vector<double> bayes_weights(const BayesConfig& cfg) {
    const int r = cfg.window / 2;
    std::vector<double> w(static_cast<std::size_t>(cfg.window) * cfg.window);
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            w[static_cast<std::size_t>(dy + r) * cfg.window + (dx + r)] =
                (dy == 0 && dx == 0)
                    ? 0.0
                    : std::exp(-(dy * dy + dx * dx) / (2.0 * cfg.sigma * cfg.sigma));
    return w;
}

} // namespace detail

// Foreground posterior per pixel: sum of Gaussian weights over foreground
// neighbors divided by the sum over all in-bounds neighbors. Windows are
// clipped at borders, which renormalizes automatically since the denominator
// only covers available neighbors.
inline RealImage posterior_map(const Mask& mask, const BayesConfig& cfg = {}) {
    detail::validate_bayes(cfg);
    if (!is_binary(mask))
        throw ValueError("posterior_map: mask must be binary");
    const int r = cfg.window / 2;
    const std::vector<double> w = detail::bayes_weights(cfg);
    RealImage post(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            double num = 0.0, den = 0.0;
            for (int dy = std::max(-r, -y); dy <= std::min(r, mask.h - 1 - y); ++dy) {
                for (int dx = std::max(-r, -x); dx <= std::min(r, mask.w - 1 - x); ++dx) {
                    const double g = w[static_cast<std::size_t>(dy + r) * cfg.window + (dx + r)];
                    den += g;
                    if (mask.at(y + dy, x + dx))
                        num += g;
                }
            }
            post.at(y, x) = num / den;  // den > 0 for any window >= 3 on h,w >= 2
        }
    }
    return post;
}

struct RefineStats {
    int iterations = 0;    // synchronous sweeps performed
    bool converged = false;
};

// Synchronous (Jacobi) iteration: threshold the posterior of the whole current
// mask at once, repeat until a sweep changes nothing or max_iters is hit.
// Ties at exactly flip_threshold go to foreground.
inline Mask refine_iterate(const Mask& mask, const BayesConfig& cfg, RefineStats& stats) {
    detail::validate_bayes(cfg);
    if (!is_binary(mask))
        throw ValueError("refine_iterate: mask must be binary");
    Mask cur = mask;
    stats = RefineStats{};
    for (int it = 0; it < cfg.max_iters; ++it) {
        const RealImage post = posterior_map(cur, cfg);
        Mask next(cur.h, cur.w);
        for (std::size_t i = 0; i < next.px.size(); ++i)
            next.px[i] = post.px[i] >= cfg.flip_threshold ? 1 : 0;
        ++stats.iterations;
        if (next == cur) {
            stats.converged = true;
            return cur;
        }
        cur = std::move(next);
    }
    return cur;
}

inline Mask refine_iterate(const Mask& mask, const BayesConfig& cfg = {}) {
    RefineStats stats;
    return refine_iterate(mask, cfg, stats);
}

// Count of 4-adjacent pixel pairs with differing labels; the smoothing
// property tests track this across iterations.
inline int boundary_length(const Mask& m) {
    int len = 0;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            if (x + 1 < m.w && m.at(y, x) != m.at(y, x + 1)) ++len;
            if (y + 1 < m.h && m.at(y + 1, x) != m.at(y, x)) ++len;
        }
    return len;
}

// Canonical 32x32 detail probe: a 16x16 filled square (rows/cols 8..23) with
// a 4x4 background notch carved from its top-right corner (rows 8..11, cols
// 20..23) and a 1-pixel-wide 6-pixel foreground spur extending right from the
// bottom-right corner (row 23, cols 24..29). The spur attaches at a corner
// deliberately: a 1-pixel bump on a long flat edge sits at posterior exactly
// 0.5 and the tie rule would preserve it forever, while corner support is
// weak enough that the whole spur erodes - which is the over-smoothing
// behavior the probe exists to exhibit.
inline Mask make_probe_mask() {
    Mask m(32, 32);
    for (int y = 8; y <= 23; ++y)
        for (int x = 8; x <= 23; ++x)
            m.at(y, x) = 1;
    for (int y = 8; y <= 11; ++y)
        for (int x = 20; x <= 23; ++x)
            m.at(y, x) = 0;
    for (int x = 24; x <= 29; ++x)
        m.at(23, x) = 1;
    return m;
}

// Detail-pixel coordinates of the probe. Spur pixels are foreground detail
// (survival = still foreground after refinement); notch pixels are background
// detail (survival = still background, i.e. the notch was not filled in).
inline std::vector<std::pair<int, int>> probe_spur_pixels() {
    std::vector<std::pair<int, int>> v;
    for (int x = 24; x <= 29; ++x)
        v.emplace_back(23, x);
    return v;
}

inline std::vector<std::pair<int, int>> probe_notch_pixels() {
    std::vector<std::pair<int, int>> v;
    for (int y = 8; y <= 11; ++y)
        for (int x = 20; x <= 23; ++x)
            v.emplace_back(y, x);
    return v;
}

struct ProbeReport {
    Mask input;
    Mask refined;
    RefineStats stats;
    int spur_total = 0;
    int spur_survived = 0;   // spur pixels still foreground
    int notch_total = 0;
    int notch_survived = 0;  // notch pixels still background
    int interior_total = 0;
    int interior_survived = 0;

    int detail_total() const { return spur_total + notch_total; }
    int detail_survived() const { return spur_survived + notch_survived; }
    int detail_removed() const { return detail_total() - detail_survived(); }
    bool spur_removed() const { return spur_survived == 0; }
    bool interior_intact() const { return interior_survived == interior_total; }
};

// Scores an already-refined mask against the probe's detail sets. Interior
// pixels are those a full default smoothing window deep in the foreground
// (every pixel of their 5x5 neighborhood is foreground), i.e. exactly the
// pixels whose initial posterior is 1.
inline ProbeReport score_probe(const Mask& refined) {
    const Mask probe = make_probe_mask();
    if (refined.h != probe.h || refined.w != probe.w)
        throw DimError("score_probe: refined mask must be 32x32");
    ProbeReport rep;
    rep.input = probe;
    rep.refined = refined;
    for (const auto& [y, x] : probe_spur_pixels()) {
        ++rep.spur_total;
        if (rep.refined.at(y, x))
            ++rep.spur_survived;
    }
    for (const auto& [y, x] : probe_notch_pixels()) {
        ++rep.notch_total;
        if (!rep.refined.at(y, x))
            ++rep.notch_survived;
    }
    for (int y = 2; y + 2 < probe.h; ++y)
        for (int x = 2; x + 2 < probe.w; ++x) {
            bool interior = true;
            for (int dy = -2; dy <= 2 && interior; ++dy)
                for (int dx = -2; dx <= 2; ++dx)
                    if (!probe.at(y + dy, x + dx)) {
                        interior = false;
                        break;
                    }
            if (interior) {
                ++rep.interior_total;
                if (rep.refined.at(y, x))
                    ++rep.interior_survived;
            }
        }
    return rep;
}

// Runs the Bayesian refiner on the canonical probe and scores the result.
inline ProbeReport corner_erosion_probe(const BayesConfig& cfg = {}) {
    RefineStats stats;
    const Mask refined = refine_iterate(make_probe_mask(), cfg, stats);
    ProbeReport rep = score_probe(refined);
    rep.stats = stats;
    return rep;
}

} // namespace maskrefine
