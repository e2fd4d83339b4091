#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>

#include "maskrefine/ops.hpp"
#include "maskrefine/rng.hpp"

#include "helpers.hpp"

using namespace maskrefine;

namespace {

// Independent convolution oracle: direct zero-padded summation, double
// accumulation, no shared code with the library implementation.
Tensor4 naive_conv(const Tensor4& x, const ConvKernel& kern) {
    const int r = kern.k() / 2;
    Tensor4 y(x.n(), kern.out_channels(), x.h(), x.w());
    for (int in = 0; in < x.n(); ++in)
        for (int oc = 0; oc < kern.out_channels(); ++oc)
            for (int oy = 0; oy < x.h(); ++oy)
                for (int ox = 0; ox < x.w(); ++ox) {
                    double acc = kern.bias[oc];
                    for (int ic = 0; ic < x.c(); ++ic)
                        for (int ky = 0; ky < kern.k(); ++ky)
                            for (int kx = 0; kx < kern.k(); ++kx) {
                                const int iy = oy + ky - r, ix = ox + kx - r;
                                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w())
                                    continue;
                                acc += static_cast<double>(kern.weights.at(oc, ic, ky, kx)) *
                                       static_cast<double>(x.at(in, ic, iy, ix));
                            }
                    y.at(in, oc, oy, ox) = static_cast<float>(acc);
                }
    return y;
}

} // namespace

TEST_CASE("conv2d with a center-delta kernel is the identity", "[ops]") {
    Tensor4 x = testutil::fd_smooth_input(1, 1, 4, 4, 11);
    ConvKernel k = make_kernel(1, 1, 3);
    k.weights.at(0, 0, 1, 1) = 1.0f;
    CHECK(bit_equal(conv2d(x, k), x));
}

TEST_CASE("conv2d with zero weights yields the bias everywhere", "[ops]") {
    Tensor4 x = testutil::fd_smooth_input(2, 3, 4, 4, 12);
    ConvKernel k = make_kernel(2, 3, 3);
    k.bias[0] = 1.5f;
    k.bias[1] = -0.5f;
    Tensor4 y = conv2d(x, k);
    for (int in = 0; in < 2; ++in)
        for (int iy = 0; iy < 4; ++iy)
            for (int ix = 0; ix < 4; ++ix) {
                CHECK(y.at(in, 0, iy, ix) == 1.5f);
                CHECK(y.at(in, 1, iy, ix) == -0.5f);
            }
}

TEST_CASE("conv2d all-ones 3x3 kernel equals the neighborhood sum oracle", "[ops]") {
    Tensor4 x = testutil::fd_smooth_input(1, 1, 5, 5, 13);
    ConvKernel k = make_kernel(1, 1, 3);
    for (auto& v : k.weights.raw())
        v = 1.0f;
    Tensor4 y = conv2d(x, k);
    Tensor4 ref = naive_conv(x, k);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK_THAT(y.raw()[i], Catch::Matchers::WithinRel(ref.raw()[i], 1e-5f));
}

TEST_CASE("conv2d matches the naive oracle on random inputs", "[ops]") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const int k = (s % 2 == 0) ? 3 : 1;
        Tensor4 x = testutil::fd_smooth_input(2, 3, 4, 6, s);
        ConvKernel kern = testutil::fd_random_kernel(2, 3, k, s + 100);
        Tensor4 y = conv2d(x, kern);
        Tensor4 ref = naive_conv(x, kern);
        REQUIRE(y.same_dims(ref));
        for (std::size_t i = 0; i < y.size(); ++i)
            REQUIRE_THAT(y.raw()[i], Catch::Matchers::WithinAbs(ref.raw()[i], 1e-5));
    }
}

TEST_CASE("conv2d rejects channel mismatch", "[ops]") {
    Tensor4 x(1, 2, 4, 4);
    CHECK_THROWS_AS(conv2d(x, make_kernel(1, 3, 3)), DimError);
    CHECK_THROWS_AS(make_kernel(1, 1, 2), DimError);
    CHECK_THROWS_AS(make_kernel(0, 1, 3), DimError);
}

TEST_CASE("conv2d is linear for zero bias", "[ops]") {
    const float alpha = 0.7f, beta = -1.3f;
    Tensor4 x = testutil::fd_smooth_input(1, 2, 4, 4, 21);
    Tensor4 y = testutil::fd_smooth_input(1, 2, 4, 4, 22);
    ConvKernel k = testutil::fd_random_kernel(2, 2, 3, 23);
    for (auto& b : k.bias)
        b = 0.0f;

    Tensor4 mix(1, 2, 4, 4);
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.raw()[i] = alpha * x.raw()[i] + beta * y.raw()[i];

    Tensor4 lhs = conv2d(mix, k);
    Tensor4 cx = conv2d(x, k), cy = conv2d(y, k);
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const float rhs = alpha * cx.raw()[i] + beta * cy.raw()[i];
        REQUIRE_THAT(lhs.raw()[i], Catch::Matchers::WithinAbs(rhs, 1e-5));
    }
}

TEST_CASE("maxpool2 takes block maxima and routes ties to the first cell", "[ops]") {
    Tensor4 x(1, 1, 2, 4);
    // Block 1: distinct values; block 2: all equal (tie).
    x.at(0, 0, 0, 0) = 1.0f;
    x.at(0, 0, 0, 1) = 4.0f;
    x.at(0, 0, 1, 0) = 3.0f;
    x.at(0, 0, 1, 1) = 2.0f;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
            x.at(0, 0, dy, 2 + dx) = 5.0f;

    MaxPool2Result r = maxpool2(x);
    REQUIRE(r.y.h() == 1);
    REQUIRE(r.y.w() == 2);
    CHECK(r.y.at(0, 0, 0, 0) == 4.0f);
    CHECK(r.y.at(0, 0, 0, 1) == 5.0f);
    CHECK(r.argmax[0] == static_cast<std::int32_t>(x.index(0, 0, 0, 1)));
    // Tie: first occurrence in row-major block order wins.
    CHECK(r.argmax[1] == static_cast<std::int32_t>(x.index(0, 0, 0, 2)));

    Tensor4 dy(1, 1, 1, 2);
    dy.at(0, 0, 0, 0) = 10.0f;
    dy.at(0, 0, 0, 1) = 20.0f;
    Tensor4 dx = maxpool2_backward(x, r, dy);
    CHECK(dx.at(0, 0, 0, 1) == 10.0f);
    CHECK(dx.at(0, 0, 0, 2) == 20.0f);
    CHECK(dx.at(0, 0, 0, 0) == 0.0f);
    CHECK(dx.at(0, 0, 1, 3) == 0.0f);

    CHECK_THROWS_AS(maxpool2(Tensor4(1, 1, 3, 4)), DimError);
}

TEST_CASE("avgpool2 averages each 2x2 block exactly", "[ops]") {
    Tensor4 x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1.0f;
    x.at(0, 0, 0, 1) = 2.0f;
    x.at(0, 0, 1, 0) = 3.0f;
    x.at(0, 0, 1, 1) = 6.0f;
    Tensor4 y = avgpool2(x);
    CHECK(y.at(0, 0, 0, 0) == 3.0f);

    Tensor4 dy(1, 1, 1, 1);
    dy.at(0, 0, 0, 0) = 2.0f;
    Tensor4 dx = avgpool2_backward(dy);
    for (float v : dx.raw())
        CHECK(v == 0.5f);

    CHECK_THROWS_AS(avgpool2(Tensor4(1, 1, 2, 3)), DimError);
}

TEST_CASE("upsample2 replicates and its backward sums the block", "[ops]") {
    Tensor4 x(1, 1, 1, 2);
    x.at(0, 0, 0, 0) = 3.0f;
    x.at(0, 0, 0, 1) = -1.0f;
    Tensor4 y = upsample2(x);
    REQUIRE(y.h() == 2);
    REQUIRE(y.w() == 4);
    CHECK(y.at(0, 0, 0, 0) == 3.0f);
    CHECK(y.at(0, 0, 1, 1) == 3.0f);
    CHECK(y.at(0, 0, 0, 2) == -1.0f);
    CHECK(y.at(0, 0, 1, 3) == -1.0f);

    Tensor4 dy(1, 1, 2, 4, 1.0f);
    dy.at(0, 0, 0, 0) = 5.0f;
    Tensor4 dx = upsample2_backward(dy);
    CHECK(dx.at(0, 0, 0, 0) == 8.0f);  // 5 + 1 + 1 + 1
    CHECK(dx.at(0, 0, 0, 1) == 4.0f);
}

TEST_CASE("concat_c and split_c are inverse", "[ops]") {
    Tensor4 a = testutil::fd_smooth_input(2, 3, 4, 4, 31);
    Tensor4 b = testutil::fd_smooth_input(2, 2, 4, 4, 32);
    Tensor4 cat = concat_c(a, b);
    REQUIRE(cat.c() == 5);
    // a occupies the leading channels.
    CHECK(cat.at(1, 0, 2, 3) == a.at(1, 0, 2, 3));
    CHECK(cat.at(1, 3, 2, 3) == b.at(1, 0, 2, 3));

    auto [ra, rb] = split_c(cat, 3);
    CHECK(bit_equal(ra, a));
    CHECK(bit_equal(rb, b));

    CHECK_THROWS_AS(concat_c(a, Tensor4(2, 2, 4, 5)), DimError);
    CHECK_THROWS_AS(split_c(cat, 0), DimError);
    CHECK_THROWS_AS(split_c(cat, 5), DimError);
}

TEST_CASE("relu zeroes negatives and keeps positives", "[ops]") {
    Tensor4 x(1, 1, 1, 4);
    x.at(0, 0, 0, 0) = -2.0f;
    x.at(0, 0, 0, 1) = 0.0f;
    x.at(0, 0, 0, 2) = 0.5f;
    x.at(0, 0, 0, 3) = 3.0f;
    Tensor4 y = activation(x, Act::Relu);
    CHECK(y.at(0, 0, 0, 0) == 0.0f);
    CHECK(y.at(0, 0, 0, 1) == 0.0f);
    CHECK(y.at(0, 0, 0, 2) == 0.5f);
    CHECK(y.at(0, 0, 0, 3) == 3.0f);

    Tensor4 g(1, 1, 1, 4, 1.0f);
    Tensor4 dx = activation_backward(x, Act::Relu, g);
    CHECK(dx.at(0, 0, 0, 0) == 0.0f);
    CHECK(dx.at(0, 0, 0, 1) == 0.0f);  // subgradient 0 at the kink
    CHECK(dx.at(0, 0, 0, 2) == 1.0f);
    CHECK(dx.at(0, 0, 0, 3) == 1.0f);
}

TEST_CASE("sigmoid is exact at 0 and stays inside the open interval", "[ops]") {
    CHECK(sigmoid_scalar(0.0f) == 0.5f);
    CHECK_THAT(sigmoid_scalar(1.0f), Catch::Matchers::WithinAbs(0.7310585786300049, 1e-6));

    // Saturation must never reach the closed endpoints.
    CHECK(sigmoid_scalar(1000.0f) < 1.0f);
    CHECK(sigmoid_scalar(-1000.0f) > 0.0f);
    CHECK(sigmoid_scalar(40.0f) < 1.0f);
    CHECK(sigmoid_scalar(-40.0f) > 0.0f);
}

TEST_CASE("bce_loss matches hand-computed values", "[ops]") {
    // pred == 0.5 everywhere gives exactly ln 2 regardless of target.
    Tensor4 p(1, 1, 2, 2, 0.5f);
    Tensor4 t(1, 1, 2, 2);
    t.at(0, 0, 0, 0) = 1.0f;
    CHECK_THAT(bce_loss(p, t), Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

    // Mixed hand case: -(ln 0.8 + ln 0.7) / 2.
    Tensor4 p2(1, 1, 1, 2), t2(1, 1, 1, 2);
    p2.at(0, 0, 0, 0) = 0.2f;
    t2.at(0, 0, 0, 0) = 0.0f;
    p2.at(0, 0, 0, 1) = 0.7f;
    t2.at(0, 0, 0, 1) = 1.0f;
    const double expect =
        -(std::log(1.0 - static_cast<double>(p2.at(0, 0, 0, 0))) +
          std::log(static_cast<double>(p2.at(0, 0, 0, 1)))) /
        2.0;
    CHECK_THAT(bce_loss(p2, t2), Catch::Matchers::WithinAbs(expect, 1e-12));

    CHECK_THROWS_AS(bce_loss(p, Tensor4(1, 1, 2, 3)), DimError);
}

TEST_CASE("bce_loss is finite at collapsed predictions", "[ops]") {
    Tensor4 p(1, 1, 1, 2);
    p.at(0, 0, 0, 0) = 0.0f;  // clamped to eps inside the loss
    p.at(0, 0, 0, 1) = 1.0f;
    Tensor4 t(1, 1, 1, 2);
    t.at(0, 0, 0, 0) = 1.0f;
    t.at(0, 0, 0, 1) = 0.0f;
    const double l = bce_loss(p, t);
    CHECK(std::isfinite(l));
    // Both terms clamp at eps = 1e-7: loss = -ln(1e-7).
    CHECK_THAT(l, Catch::Matchers::WithinRel(-std::log(1e-7), 1e-9));
}

TEST_CASE("ops are bit-deterministic across repeated calls", "[ops]") {
    Tensor4 x = testutil::fd_smooth_input(2, 3, 4, 4, 41);
    ConvKernel k = testutil::fd_random_kernel(4, 3, 3, 42);
    CHECK(bit_equal(conv2d(x, k), conv2d(x, k)));
    CHECK(bit_equal(maxpool2(x).y, maxpool2(x).y));
    CHECK(bit_equal(activation(x, Act::Sigmoid), activation(x, Act::Sigmoid)));
}
