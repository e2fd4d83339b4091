#pragma once

// 2-d image value types and tensor packing helpers. Masks carry hard labels
// (0 = background, 1 = foreground), gray images carry intensities in [0, 1].

#include <cstdint>
#include <vector>

#include "maskrefine/errors.hpp"
#include "maskrefine/tensor.hpp"

namespace maskrefine {

struct Mask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> px;

    Mask() = default;
    Mask(int h_, int w_, std::uint8_t fill = 0)
        : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {
        if (h_ < 1 || w_ < 1)
            throw DimError("Mask: dims must be >= 1");
    }

    std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }

    bool operator==(const Mask&) const = default;
};

struct GrayImage {
    int h = 0, w = 0;
    std::vector<float> px;

    GrayImage() = default;
    GrayImage(int h_, int w_, float fill = 0.0f)
        : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {
        if (h_ < 1 || w_ < 1)
            throw DimError("GrayImage: dims must be >= 1");
    }

    float& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }

    bool operator==(const GrayImage&) const = default;
};

// Double-precision image for posterior maps, so threshold ties stay exact.
struct RealImage {
    int h = 0, w = 0;
    std::vector<double> px;

    RealImage() = default;
    RealImage(int h_, int w_, double fill = 0.0)
        : h(h_), w(w_), px(static_cast<std::size_t>(h_) * w_, fill) {
        if (h_ < 1 || w_ < 1)
            throw DimError("RealImage: dims must be >= 1");
    }

    double& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
};

inline bool is_binary(const Mask& m) {
    for (auto v : m.px)
        if (v > 1)
            return false;
    return true;
}

inline Mask complement(const Mask& m) {
    Mask out = m;
    for (auto& v : out.px)
        v = v ? 0 : 1;
    return out;
}

inline Tensor4 to_tensor(const Mask& m) {
    Tensor4 t(1, 1, m.h, m.w);
    for (std::size_t i = 0; i < m.px.size(); ++i)
        t.raw()[i] = static_cast<float>(m.px[i]);
    return t;
}

inline Tensor4 to_tensor(const GrayImage& g) {
    Tensor4 t(1, 1, g.h, g.w);
    for (std::size_t i = 0; i < g.px.size(); ++i)
        t.raw()[i] = g.px[i];
    return t;
}

// Channel 0 of one batch item, thresholding nothing: values are expected to
// already be hard 0/1.
inline Mask tensor_to_mask(const Tensor4& t, int batch_item = 0) {
    Mask m(t.h(), t.w());
    for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
            m.at(y, x) = t.at(batch_item, 0, y, x) != 0.0f ? 1 : 0;
    return m;
}

inline GrayImage tensor_to_gray(const Tensor4& t, int batch_item = 0) {
    GrayImage g(t.h(), t.w());
    for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x)
            g.at(y, x) = t.at(batch_item, 0, y, x);
    return g;
}

} // namespace maskrefine
