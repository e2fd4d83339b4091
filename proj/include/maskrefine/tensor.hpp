#pragma once

// Dense 4-d float32 tensor in (batch, channel, row, col) order, row-major.

#include <cassert>
#include <cstddef>
#include <vector>

#include "maskrefine/errors.hpp"

namespace maskrefine {

class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(int n, int c, int h, int w, float fill = 0.0f)
        : n_(n), c_(c), h_(h), w_(w), data_(checked_size(n, c, h, w), fill) {}

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }

    bool same_dims(const Tensor4& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    std::size_t index(int in, int ic, int iy, int ix) const {
        assert(in >= 0 && in < n_ && ic >= 0 && ic < c_);
        assert(iy >= 0 && iy < h_ && ix >= 0 && ix < w_);
        return ((static_cast<std::size_t>(in) * c_ + ic) * h_ + iy) * w_ + ix;
    }

    float& at(int in, int ic, int iy, int ix) { return data_[index(in, ic, iy, ix)]; }
    const float& at(int in, int ic, int iy, int ix) const { return data_[index(in, ic, iy, ix)]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    std::vector<float>& raw() { return data_; }
    const std::vector<float>& raw() const { return data_; }

private:
    static std::size_t checked_size(int n, int c, int h, int w) {
        if (n < 1 || c < 1 || h < 1 || w < 1)
            throw DimError("Tensor4: all dims must be >= 1");
        return static_cast<std::size_t>(n) * c * h * w;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<float> data_;
};

// Exact float comparison, used by determinism checks.
inline bool bit_equal(const Tensor4& a, const Tensor4& b) {
    return a.same_dims(b) && a.raw() == b.raw();
}

inline void add_inplace(Tensor4& a, const Tensor4& b) {
    if (!a.same_dims(b))
        throw DimError("add_inplace: dims mismatch");
    float* pa = a.data();
    const float* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i)
        pa[i] += pb[i];
}

} // namespace maskrefine
