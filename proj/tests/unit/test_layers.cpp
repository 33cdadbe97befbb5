#include <cmath>

#include "doctest.h"
#include "facedet/errors.hpp"
#include "facedet/layers.hpp"
#include "facedet/parallel.hpp"
#include "oracles.hpp"

using namespace facedet;

namespace {

ConvKernels random_kernels(Rng& rng, std::size_t out, std::size_t k, std::size_t in_per_group) {
    return ConvKernels(out, k, k, in_per_group, oracle::random_vector(rng, out * k * k * in_per_group));
}

}  // namespace

TEST_CASE("1x1 identity kernel returns the input") {
    Rng rng(1);
    const Tensor3 x = oracle::random_tensor(rng, 5, 7, 1);
    const ConvKernels k(1, 1, 1, 1, {1.0f});
    const std::vector<float> bias{0.0f};
    CHECK(conv2d(x, k, bias, 1, 0, 1) == x);
}

TEST_CASE("all-ones 3x3 kernel on constant input gives 9c inside") {
    const Tensor3 x(6, 6, 1, 1.5f);
    const ConvKernels k(1, 3, 3, 1, std::vector<float>(9, 1.0f));
    const std::vector<float> bias{0.0f};
    const Tensor3 y = conv2d(x, k, bias, 1, 1, 1);
    REQUIRE(y.height() == 6);
    for (std::size_t r = 1; r < 5; ++r)
        for (std::size_t c = 1; c < 5; ++c) CHECK(y(r, c, 0) == doctest::Approx(13.5));
    CHECK(y(0, 0, 0) == doctest::Approx(6.0));
}

TEST_CASE("grouped conv on 11x13x4 matches the naive loop") {
    Rng rng(2);
    const Tensor3 x = oracle::random_tensor(rng, 11, 13, 4);
    const ConvKernels k = random_kernels(rng, 6, 3, 2);
    const std::vector<float> bias = oracle::random_vector(rng, 6);
    for (std::size_t stride : {1, 2}) {
        const Padding pad{1, 2, 0, 1};
        CHECK(oracle::max_abs_diff(conv2d(x, k, bias, stride, pad, 2), oracle::conv2d(x, k, bias, stride, pad, 2)) <
              1e-5);
    }
}

TEST_CASE("conv results do not depend on worker count") {
    Rng rng(3);
    const Tensor3 x = oracle::random_tensor(rng, 23, 17, 12);
    const ConvKernels k = random_kernels(rng, 20, 5, 6);
    const std::vector<float> bias = oracle::random_vector(rng, 20);
    set_worker_count(1);
    const Tensor3 one = conv2d(x, k, bias, 2, 2, 2);
    set_worker_count(4);
    const Tensor3 four = conv2d(x, k, bias, 2, 2, 2);
    set_worker_count(0);
    CHECK(one == four);
}

TEST_CASE("conv shape errors name the axis") {
    const Tensor3 x(4, 4, 3);
    const std::vector<float> bias(2, 0.0f);
    CHECK_THROWS_AS(conv2d(x, ConvKernels(2, 3, 3, 2, std::vector<float>(36)), bias, 1, 0, 1), DimensionError);
    CHECK_THROWS_AS(conv2d(x, ConvKernels(2, 7, 7, 3, std::vector<float>(2 * 49 * 3)), bias, 1, 0, 1),
                    DimensionError);
}

TEST_CASE("same padding gives ceil(in / stride)") {
    for (std::size_t in = 1; in < 60; ++in)
        for (std::size_t s : {1, 2, 4})
            for (std::size_t k : {1, 3, 5, 11}) {
                const Padding p = same_padding(in, in, k, s);
                REQUIRE(in + p.top + p.bottom >= k);
                CHECK((in + p.top + p.bottom - k) / s + 1 == (in + s - 1) / s);
                CHECK(p.bottom - p.top <= 1);
                CHECK(p == Padding{p.left, p.right, p.left, p.right});
            }
}

TEST_CASE("relu") {
    Rng rng(4);
    Tensor3 x = oracle::random_tensor(rng, 3, 3, 3, -4.0, 4.0);
    x(0, 0, 0) = -3.5f;
    const Tensor3 y = relu(x);
    CHECK(y(0, 0, 0) == 0.0f);
    CHECK(relu(y) == y);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(y.data()[k] == std::max(0.0f, x.data()[k]));
}

TEST_CASE("maxpool hand cases") {
    Rng rng(5);
    const Tensor3 x = oracle::random_tensor(rng, 5, 6, 2);
    CHECK(maxpool2d(x, 1, 1, 0) == x);
    const Tensor3 q(2, 2, 1, std::vector<float>{1, 2, 3, 4});
    const Tensor3 y = maxpool2d(q, 2, 2, 0);
    REQUIRE(y.size() == 1);
    CHECK(y(0, 0, 0) == 4.0f);
}

TEST_CASE("maxpool matches the naive loop") {
    Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const Tensor3 x = oracle::random_tensor(rng, 3 + rng.below(12), 3 + rng.below(12), 1 + rng.below(4));
        const Padding pad{rng.below(2), rng.below(2), rng.below(2), rng.below(2)};
        CHECK(oracle::max_abs_diff(maxpool2d(x, 3, 2, pad), oracle::maxpool2d(x, 3, 2, pad)) == 0.0);
    }
}

TEST_CASE("lrn") {
    SUBCASE("zero input gives zero output") {
        const Tensor3 z(2, 2, 7);
        CHECK(lrn(z, 5, 2.0f, 1e-4f, 0.75f, ExpMode::exact) == z);
    }
    SUBCASE("single channel scalar reference") {
        const Tensor3 x(1, 1, 1, 1.0f);
        const double expected = 1.0 / std::pow(2.0 + 1e-4 / 5.0, 0.75);
        CHECK(lrn(x, 5, 2.0f, 1e-4f, 0.75f, ExpMode::exact)(0, 0, 0) == doctest::Approx(expected).epsilon(1e-7));
    }
    SUBCASE("exact mode matches the naive loop") {
        Rng rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            const Tensor3 x = oracle::random_tensor(rng, 4, 5, 3 + rng.below(10), -5.0, 5.0);
            CHECK(oracle::max_abs_diff(lrn(x, 5, 2.0f, 1e-4f, 0.75f, ExpMode::exact),
                                       oracle::lrn(x, 5, 2.0f, 1e-4f, 0.75f)) < 1e-5);
        }
    }
    SUBCASE("fast mode within 5% of exact") {
        Rng rng(8);
        // Large alpha so the denominator is far from k and the exponent matters.
        const Tensor3 x = oracle::random_tensor(rng, 6, 6, 16, -5.0, 5.0);
        const Tensor3 e = lrn(x, 5, 2.0f, 0.5f, 0.75f, ExpMode::exact);
        const Tensor3 f = lrn(x, 5, 2.0f, 0.5f, 0.75f, ExpMode::fast);
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (e.data()[k] == 0.0f) continue;
            CHECK(std::fabs(f.data()[k] - e.data()[k]) / std::fabs(e.data()[k]) <= 0.05);
        }
    }
    SUBCASE("even n is rejected") {
        CHECK_THROWS(lrn(Tensor3(1, 1, 4), 4, 2.0f, 1e-4f, 0.75f, ExpMode::exact));
    }
}

TEST_CASE("fast_exp") {
    CHECK(std::fabs(fast_exp(0.0) - 1.0) <= 0.05);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const double y = -10.0 + 20.0 * k / 9999.0;
        worst = std::max(worst, std::fabs(fast_exp(y) - std::exp(y)) / std::exp(y));
    }
    CHECK(worst <= 0.05);
    Rng rng(9);
    for (int k = 0; k < 1000; ++k) {
        double a = rng.uniform(-50.0, 50.0), b = rng.uniform(-50.0, 50.0);
        if (a > b) std::swap(a, b);
        CHECK(fast_exp(a) <= fast_exp(b));
    }
    CHECK_THROWS_AS(fast_exp(701.0), NumericError);
    CHECK_THROWS_AS(fast_exp(-701.0), NumericError);
}
