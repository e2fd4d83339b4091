#pragma once

// Source-injected U-Net mask refiner. The network maps a noisy binary mask
// plus its gray source frame to a per-pixel foreground probability. The
// distinguishing mechanism: an average-pooled pyramid of the source frame is
// concatenated onto the feature maps at EVERY encoder level (level 0 fuses
// the raw source with the raw mask), so each scale of the encoder sees the
// original intensities that the mask alone has discarded. The decoder is a
// conventional U-Net mirror (nearest upsample + skip concatenation) with no
// source injection, and a 1x1 sigmoid head.
//
// All passes are hand written against ops.hpp; there is no autodiff tape.
// Gradients that reach the pyramid or the mask input are discarded - inputs
// are data, not parameters.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/image.hpp"
#include "maskrefine/ops.hpp"
#include "maskrefine/rng.hpp"
#include "maskrefine/synth.hpp"
#include "maskrefine/tensor.hpp"

namespace maskrefine {

struct RefinerConfig {
    int levels = 3;          // L: number of downsampling stages
    int base_channels = 8;   // C0: channels at full resolution
    int source_channels = 1; // Cs: 1 = grayscale
    float threshold = 0.5f;  // probability >= threshold -> foreground
};

inline void validate_config(const RefinerConfig& cfg) {
    if (cfg.levels < 1)
        throw ValueError("RefinerConfig: levels must be >= 1");
    if (cfg.base_channels < 1)
        throw ValueError("RefinerConfig: base_channels must be >= 1");
    if (cfg.source_channels < 1)
        throw ValueError("RefinerConfig: source_channels must be >= 1");
    if (!(cfg.threshold >= 0.0f && cfg.threshold <= 1.0f))
        throw ValueError("RefinerConfig: threshold must be in [0, 1]");
}

// C_l = C0 * 2^l
inline int level_channels(const RefinerConfig& cfg, int level) {
    return cfg.base_channels << level;
}

struct ConvBlock {
    ConvKernel conv1, conv2;  // conv -> relu -> conv -> relu
};

// encoder[l] for l = 0..L (block L is the bottleneck; no pooling after it);
// decoder[i] is the block at level i+1, stored ascending but executed from
// level L down to 1. Canonical parameter order everywhere (init, checkpoint,
// flattening) is: encoder ascending, decoder ascending, head; within a block
// conv1 then conv2; within a conv weights then bias.
struct RefinerParams {
    std::vector<ConvBlock> encoder;
    std::vector<ConvBlock> decoder;
    ConvKernel head;  // 1x1, C0 -> 1
};

struct KernelShape {
    int c_out = 0, c_in = 0, k = 0;
    bool operator==(const KernelShape&) const = default;
};

// Shapes of every convolution in canonical order. Channel arithmetic:
//   encoder block l: in = (l == 0 ? 1 : C_{l-1}) + Cs, out = C_l
//   decoder block l: in = C_l (upsampled) + C_{l-1} (skip), out = C_{l-1}
//   head: C0 -> 1
inline std::vector<KernelShape> kernel_shapes(const RefinerConfig& cfg) {
    validate_config(cfg);
    std::vector<KernelShape> v;
    for (int l = 0; l <= cfg.levels; ++l) {
        const int cin = (l == 0 ? 1 : level_channels(cfg, l - 1)) + cfg.source_channels;
        const int cout = level_channels(cfg, l);
        v.push_back({cout, cin, 3});
        v.push_back({cout, cout, 3});
    }
    for (int l = 1; l <= cfg.levels; ++l) {
        const int cin = level_channels(cfg, l) + level_channels(cfg, l - 1);
        const int cout = level_channels(cfg, l - 1);
        v.push_back({cout, cin, 3});
        v.push_back({cout, cout, 3});
    }
    v.push_back({1, cfg.base_channels, 1});
    return v;
}

// Scalar parameter count: sum over convolutions of k^2*c_in*c_out + c_out.
inline std::size_t param_count(const RefinerConfig& cfg) {
    std::size_t total = 0;
    for (const KernelShape& s : kernel_shapes(cfg))
        total += static_cast<std::size_t>(s.k) * s.k * s.c_in * s.c_out +
                 static_cast<std::size_t>(s.c_out);
    return total;
}

// Visits every convolution kernel in canonical order.
template <typename Params, typename Fn>
void for_each_kernel(Params& p, Fn&& fn) {
    for (auto& b : p.encoder) {
        fn(b.conv1);
        fn(b.conv2);
    }
    for (auto& b : p.decoder) {
        fn(b.conv1);
        fn(b.conv2);
    }
    fn(p.head);
}

// Zero-valued parameter set with the shapes dictated by the config.
inline RefinerParams make_params(const RefinerConfig& cfg) {
    const std::vector<KernelShape> shapes = kernel_shapes(cfg);
    RefinerParams p;
    std::size_t i = 0;
    auto next = [&] {
        const KernelShape& s = shapes[i++];
        return make_kernel(s.c_out, s.c_in, s.k);
    };
    for (int l = 0; l <= cfg.levels; ++l) {
        ConvBlock b;
        b.conv1 = next();
        b.conv2 = next();
        p.encoder.push_back(std::move(b));
    }
    for (int l = 1; l <= cfg.levels; ++l) {
        ConvBlock b;
        b.conv1 = next();
        b.conv2 = next();
        p.decoder.push_back(std::move(b));
    }
    p.head = next();
    return p;
}

inline void check_params(const RefinerConfig& cfg, const RefinerParams& p) {
    const std::vector<KernelShape> want = kernel_shapes(cfg);
    std::vector<KernelShape> got;
    for_each_kernel(p, [&](const ConvKernel& k) {
        got.push_back({k.out_channels(), k.in_channels(), k.k()});
    });
    if (got != want)
        throw DimError("RefinerParams: kernel shapes do not match config");
}

inline std::size_t param_count(const RefinerParams& p) {
    std::size_t total = 0;
    for_each_kernel(p, [&](const ConvKernel& k) { total += k.weights.size() + k.bias.size(); });
    return total;
}

inline std::vector<float> flatten_params(const RefinerParams& p) {
    std::vector<float> flat;
    flat.reserve(param_count(p));
    for_each_kernel(p, [&](const ConvKernel& k) {
        flat.insert(flat.end(), k.weights.raw().begin(), k.weights.raw().end());
        flat.insert(flat.end(), k.bias.begin(), k.bias.end());
    });
    return flat;
}

// One pointer per scalar parameter, canonical order. Valid until the params
// object is moved, copied or resized.
inline std::vector<float*> param_ptrs(RefinerParams& p) {
    std::vector<float*> ptrs;
    ptrs.reserve(param_count(p));
    for_each_kernel(p, [&](ConvKernel& k) {
        for (auto& v : k.weights.raw())
            ptrs.push_back(&v);
        for (auto& v : k.bias)
            ptrs.push_back(&v);
    });
    return ptrs;
}

// He-style init: weights ~ normal(0, sqrt(2 / fan_in)) with fan_in = k^2*c_in,
// drawn in canonical order from one PRNG stream; biases stay zero.
inline RefinerParams init_params(const RefinerConfig& cfg, std::uint64_t seed) {
    RefinerParams p = make_params(cfg);
    Rng rng(seed);
    for_each_kernel(p, [&](ConvKernel& k) {
        const double stddev =
            std::sqrt(2.0 / (static_cast<double>(k.k()) * k.k() * k.in_channels()));
        for (auto& v : k.weights.raw())
            v = static_cast<float>(rng.next_gaussian() * stddev);
    });
    return p;
}

// ---------------------------------------------------------------------------
// Source pyramid

// Element 0 is the source itself; element l is the source average-pooled l
// times (intensity statistics survive, unlike max-pooling).
inline std::vector<Tensor4> source_pyramid(const Tensor4& source, int levels) {
    if (levels < 0)
        throw ValueError("source_pyramid: levels must be >= 0");
    const int div = 1 << levels;
    if (source.h() % div != 0 || source.w() % div != 0)
        throw DimError("source_pyramid: spatial dims must be divisible by 2^levels");
    std::vector<Tensor4> pyr;
    pyr.reserve(static_cast<std::size_t>(levels) + 1);
    pyr.push_back(source);
    for (int l = 1; l <= levels; ++l)
        pyr.push_back(avgpool2(pyr.back()));
    return pyr;
}

// ---------------------------------------------------------------------------
// Forward

struct BlockCache {
    Tensor4 input;  // post-concatenation block input
    Tensor4 z1, a1; // conv1 pre-activation and relu output
    Tensor4 z2, a2; // conv2 pre-activation and relu output (block output)
};

struct ForwardCache {
    std::vector<Tensor4> pyramid;
    std::vector<BlockCache> enc;       // L+1 entries
    std::vector<MaxPool2Result> pool;  // L entries (after encoder levels 0..L-1)
    std::vector<BlockCache> dec;       // L entries, index = level-1
    Tensor4 head_z;                    // 1x1 conv pre-activation
    Tensor4 prob;                      // sigmoid output
};

namespace detail {

inline void block_forward(const ConvBlock& blk, Tensor4 input, BlockCache& cache) {
    cache.input = std::move(input);
    cache.z1 = conv2d(cache.input, blk.conv1);
    cache.a1 = activation(cache.z1, Act::Relu);
    cache.z2 = conv2d(cache.a1, blk.conv2);
    cache.a2 = activation(cache.z2, Act::Relu);
}

// Backward through relu-conv-relu-conv; returns the gradient w.r.t. the block
// input and fills gblk with the parameter gradients.
inline Tensor4 block_backward(const ConvBlock& blk, const BlockCache& cache, const Tensor4& da2,
                              ConvBlock& gblk) {
    const Tensor4 dz2 = activation_backward(cache.z2, Act::Relu, da2);
    ConvGrads g2 = conv2d_backward(cache.a1, blk.conv2, dz2);
    gblk.conv2 = std::move(g2.dkern);
    const Tensor4 dz1 = activation_backward(cache.z1, Act::Relu, g2.dx);
    ConvGrads g1 = conv2d_backward(cache.input, blk.conv1, dz1);
    gblk.conv1 = std::move(g1.dkern);
    return std::move(g1.dx);
}

inline void check_forward_inputs(const RefinerConfig& cfg, const RefinerParams& params,
                                 const Tensor4& mask, const Tensor4& source) {
    check_params(cfg, params);
    if (mask.c() != 1)
        throw DimError("forward: mask must have exactly 1 channel");
    if (source.c() != cfg.source_channels)
        throw DimError("forward: source must have " + std::to_string(cfg.source_channels) +
                       " channels");
    if (mask.n() != source.n() || mask.h() != source.h() || mask.w() != source.w())
        throw DimError("forward: mask and source must share batch and spatial dims");
    const int div = 1 << cfg.levels;
    if (mask.h() % div != 0 || mask.w() % div != 0)
        throw DimError("forward: spatial dims must be divisible by 2^levels");
}

} // namespace detail

inline Tensor4 forward_cached(const RefinerConfig& cfg, const RefinerParams& params,
                              const Tensor4& mask, const Tensor4& source, ForwardCache& cache) {
    detail::check_forward_inputs(cfg, params, mask, source);
    const int L = cfg.levels;
    cache = ForwardCache{};
    cache.pyramid = source_pyramid(source, L);
    cache.enc.resize(static_cast<std::size_t>(L) + 1);
    cache.dec.resize(static_cast<std::size_t>(L));

    // Encoder: fuse the source pyramid level into the features at every level.
    Tensor4 x = mask;
    for (int l = 0; l <= L; ++l) {
        detail::block_forward(params.encoder[l], concat_c(x, cache.pyramid[l]), cache.enc[l]);
        if (l < L) {
            cache.pool.push_back(maxpool2(cache.enc[l].a2));
            x = cache.pool.back().y;
        }
    }

    // Decoder: upsample, concatenate the skip from one level up, run the block.
    Tensor4 d = cache.enc[L].a2;
    for (int l = L; l >= 1; --l) {
        detail::block_forward(params.decoder[l - 1],
                              concat_c(upsample2(d), cache.enc[l - 1].a2), cache.dec[l - 1]);
        d = cache.dec[l - 1].a2;
    }

    cache.head_z = conv2d(d, params.head);
    cache.prob = activation(cache.head_z, Act::Sigmoid);
    return cache.prob;
}

// Per-pixel foreground probability, strictly inside (0, 1).
inline Tensor4 forward(const RefinerConfig& cfg, const RefinerParams& params, const Tensor4& mask,
                       const Tensor4& source) {
    ForwardCache cache;
    return forward_cached(cfg, params, mask, source, cache);
}

// ---------------------------------------------------------------------------
// Backward

// Parameter gradients of bce_loss(prob, target) for the forward pass captured
// in `cache`. Gradients reaching the source pyramid and the mask input are
// computed and dropped.
inline RefinerParams backward(const RefinerConfig& cfg, const RefinerParams& params,
                              const ForwardCache& cache, const Tensor4& target) {
    const int L = cfg.levels;
    if (!target.same_dims(cache.prob))
        throw DimError("backward: target dims mismatch");
    RefinerParams grads = make_params(cfg);

    // Head: bce -> sigmoid -> 1x1 conv. The head input is decoder block 1's
    // output (cache.dec[0].a2).
    const Tensor4 dprob = bce_loss_backward(cache.prob, target);
    const Tensor4 dhead_z = activation_backward(cache.head_z, Act::Sigmoid, dprob);
    ConvGrads hg = conv2d_backward(cache.dec[0].a2, params.head, dhead_z);
    grads.head = std::move(hg.dkern);

    // Decoder blocks from level 1 (just below the head) up to level L. Each
    // block's input gradient splits into the upsampled path (continues to the
    // next-coarser block) and the skip path (held for the encoder sweep).
    std::vector<Tensor4> dskip(static_cast<std::size_t>(L));  // by encoder level 0..L-1
    Tensor4 d = std::move(hg.dx);
    for (int l = 1; l <= L; ++l) {
        Tensor4 din = detail::block_backward(params.decoder[l - 1], cache.dec[l - 1], d,
                                             grads.decoder[l - 1]);
        auto [dup, dsk] = split_c(din, level_channels(cfg, l));
        dskip[l - 1] = std::move(dsk);
        d = upsample2_backward(dup);
    }

    // Encoder from the bottleneck down to level 0. At l == L the incoming
    // gradient is the decoder's directly; below that it arrives through the
    // max-pool routing plus the stored skip gradient. The block input gradient
    // splits into the feature part (propagates down) and the pyramid part
    // (discarded).
    for (int l = L; l >= 0; --l) {
        Tensor4 da2 = l == L ? std::move(d)
                             : maxpool2_backward(cache.enc[l].a2, cache.pool[l], d);
        if (l < L)
            add_inplace(da2, dskip[l]);
        Tensor4 din = detail::block_backward(params.encoder[l], cache.enc[l], da2,
                                             grads.encoder[l]);
        if (l > 0) {
            auto [dfeat, dpyr] = split_c(din, level_channels(cfg, l - 1));
            d = std::move(dfeat);  // gradient w.r.t. pool[l-1].y
        }
        // l == 0: din holds the mask-input gradient; dropped with the rest.
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Batched training interface

struct Batch {
    Tensor4 mask, source, target;
};

// Packs samples into batch tensors: noisy masks and sources as network
// inputs, ground-truth masks as the loss target.
inline Batch make_batch(std::span<const Sample> samples) {
    if (samples.empty())
        throw ValueError("make_batch: batch must be nonempty");
    const int h = samples[0].mask_gt.h, w = samples[0].mask_gt.w;
    const int n = static_cast<int>(samples.size());
    for (const Sample& s : samples)
        if (s.mask_gt.h != h || s.mask_gt.w != w || s.mask_noisy.h != h || s.mask_noisy.w != w ||
            s.source.h != h || s.source.w != w)
            throw DimError("make_batch: all samples must share dims");
    Batch b{Tensor4(n, 1, h, w), Tensor4(n, 1, h, w), Tensor4(n, 1, h, w)};
    for (int i = 0; i < n; ++i) {
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        for (std::size_t j = 0; j < plane; ++j) {
            b.mask.raw()[i * plane + j] = static_cast<float>(samples[i].mask_noisy.px[j]);
            b.source.raw()[i * plane + j] = samples[i].source.px[j];
            b.target.raw()[i * plane + j] = static_cast<float>(samples[i].mask_gt.px[j]);
        }
    }
    return b;
}

struct LossGrads {
    double loss = 0.0;
    RefinerParams grads;
};

// Mean BCE over the whole batch plus parameter gradients from one combined
// forward/backward pass.
inline LossGrads loss_and_grads(const RefinerConfig& cfg, const RefinerParams& params,
                                std::span<const Sample> batch) {
    const Batch b = make_batch(batch);
    ForwardCache cache;
    const Tensor4 prob = forward_cached(cfg, params, b.mask, b.source, cache);
    LossGrads out;
    out.loss = bce_loss(prob, b.target);
    out.grads = backward(cfg, params, cache, b.target);
    return out;
}

// ---------------------------------------------------------------------------
// Inference

// Hard labels: probability >= tau -> foreground.
inline Tensor4 refine(const RefinerConfig& cfg, const RefinerParams& params, const Tensor4& mask,
                      const Tensor4& source, float tau) {
    if (!(tau >= 0.0f && tau <= 1.0f))
        throw ValueError("refine: tau must be in [0, 1]");
    const Tensor4 prob = forward(cfg, params, mask, source);
    Tensor4 out(prob.n(), prob.c(), prob.h(), prob.w());
    for (std::size_t i = 0; i < prob.size(); ++i)
        out.raw()[i] = prob.raw()[i] >= tau ? 1.0f : 0.0f;
    return out;
}

inline Tensor4 refine(const RefinerConfig& cfg, const RefinerParams& params, const Tensor4& mask,
                      const Tensor4& source) {
    return refine(cfg, params, mask, source, cfg.threshold);
}

// Mask-level convenience wrapper for single images.
inline Mask refine_mask(const RefinerConfig& cfg, const RefinerParams& params, const Mask& mask,
                        const GrayImage& source, float tau) {
    return tensor_to_mask(refine(cfg, params, to_tensor(mask), to_tensor(source), tau));
}

inline Mask refine_mask(const RefinerConfig& cfg, const RefinerParams& params, const Mask& mask,
                        const GrayImage& source) {
    return refine_mask(cfg, params, mask, source, cfg.threshold);
}

} // namespace maskrefine
