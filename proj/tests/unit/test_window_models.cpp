#include "doctest.h"
#include "facedet/errors.hpp"
#include "facedet/window_models.hpp"
#include "oracles.hpp"

using namespace facedet;

TEST_CASE("window grid") {
    const auto grid = window_grid();
    REQUIRE(grid.size() == 56);
    CHECK(grid.front() == WindowSize{9, 8});
    CHECK(grid.back() == WindowSize{23, 20});
    for (const auto& w : grid) {
        CHECK(w.i % 2 == 1);
        CHECK(w.j % 2 == 0);
    }
}

TEST_CASE("flatten_patch") {
    Rng rng(1);
    const Tensor3 one = oracle::random_tensor(rng, 1, 1, 256);
    const auto v = flatten_patch(one, 0, 0, {1, 1});
    CHECK(std::equal(v.begin(), v.end(), one.data().begin()));

    const Tensor3 f = oracle::random_tensor(rng, 6, 5, 4);
    const WindowSize w{3, 2};
    const auto p = flatten_patch(f, 2, 1, w);
    REQUIRE(p.size() == w.length(4));
    std::size_t idx = 0;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t k = 0; k < 4; ++k) CHECK(p[idx++] == f(2 + r, 1 + c, k));
    CHECK_THROWS_AS(flatten_patch(f, 4, 0, w), BoundsError);
}

TEST_CASE("score_window") {
    Rng rng(2);
    const Tensor3 f = oracle::random_tensor(rng, 5, 5, 3);
    WindowModel m = oracle::random_model(rng, {2, 3}, 3);
    CHECK(score_window(m, f, 1, 2) == doctest::Approx(oracle::score(m, f, 1, 2)).epsilon(1e-5));

    WindowModel zero = m;
    std::fill(zero.weights.begin(), zero.weights.end(), 0.0f);
    CHECK(score_window(zero, f, 0, 0) == doctest::Approx(zero.bias));

    WindowModel centred = m;
    centred.mean = flatten_patch(f, 3, 1, m.size);
    CHECK(score_window(centred, f, 3, 1) == doctest::Approx(m.bias).epsilon(1e-6));

    Tensor3 g = f;
    g(0, 0, 0) += 100.0f;
    CHECK(score_window(m, g, 2, 2) == score_window(m, f, 2, 2));
}

TEST_CASE("best_position equals a brute-force scan") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const WindowSize w{1 + rng.below(4), 1 + rng.below(4)};
        const WindowModel m = oracle::random_model(rng, w, 5);
        const Tensor3 f = oracle::random_tensor(rng, w.i + rng.below(6), w.j + rng.below(6), 5);
        const auto got = best_position(m, f);
        REQUIRE(got);
        const auto want = oracle::brute_force_best(m, f, &score_window);
        CHECK(got->r == want.r);
        CHECK(got->c == want.c);
        CHECK(got->score == want.score);
        CHECK(got->score == doctest::Approx(oracle::brute_force_best(m, f).score).epsilon(1e-5));
    }
}

TEST_CASE("best_position hand cases") {
    Rng rng(4);
    WindowModel m = oracle::random_model(rng, {2, 2}, 3);
    CHECK_FALSE(best_position(m, Tensor3(1, 5, 3)));
    const Tensor3 exact = oracle::random_tensor(rng, 2, 2, 3);
    const auto p = best_position(m, exact);
    REQUIRE(p);
    CHECK(p->r == 0);
    CHECK(p->c == 0);
    CHECK(p->score == score_window(m, exact, 0, 0));

    // One channel selected; a spike at (5, 3) dominates.
    WindowModel spike;
    spike.size = {1, 1};
    spike.weights = {0.0f, 1.0f, 0.0f};
    spike.mean.assign(3, 0.0f);
    spike.std.assign(3, 1.0f);
    Tensor3 f(9, 7, 3);
    f(5, 3, 1) = 10.0f;
    const auto s = best_position(spike, f);
    CHECK(s->r == 5);
    CHECK(s->c == 3);

    // Flat map: every placement ties, the first wins.
    const auto tie = best_position(spike, Tensor3(4, 4, 3));
    CHECK(tie->r == 0);
    CHECK(tie->c == 0);
}

TEST_CASE("scaling a model scales scores and keeps the argmax") {
    Rng rng(5);
    const WindowModel m = oracle::random_model(rng, {2, 3}, 4);
    WindowModel m2 = m;
    for (float& w : m2.weights) w *= 2.0f;
    m2.bias *= 2.0f;
    const Tensor3 f = oracle::random_tensor(rng, 7, 8, 4);
    const auto a = best_position(m, f);
    const auto b = best_position(m2, f);
    CHECK(a->r == b->r);
    CHECK(a->c == b->c);
    CHECK(b->score == doctest::Approx(2.0 * a->score).epsilon(1e-5));
}

TEST_CASE("map_to_image") {
    const BoundingBox b = map_to_image({9, 8}, 0, 0);
    CHECK(b.x == 0.0);
    CHECK(b.y == 0.0);
    CHECK(b.w == 128.0);
    CHECK(b.h == 144.0);
    const BoundingBox s = map_to_image({9, 8}, 1, 1);
    CHECK(s.x == 16.0);
    CHECK(s.y == 16.0);
    const BoundingBox big = map_to_image({23, 20}, 0, 0);
    CHECK(big.w == 320.0);
    CHECK(big.h == 368.0);
}

TEST_CASE("bank survives the DFW store") {
    Rng rng(6);
    ModelBank bank;
    bank.detection_threshold = 0.25;
    bank.nms.containment_thresh = 0.625;
    bank.models.push_back(oracle::random_model(rng, {9, 8}, 256));
    bank.models.push_back(oracle::random_model(rng, {11, 10}, 256));
    const ModelBank back = bank_from_store(bank_to_store(bank));
    REQUIRE(back.models.size() == 2);
    CHECK(back.detection_threshold == bank.detection_threshold);
    CHECK(back.nms.containment_thresh == bank.nms.containment_thresh);
    CHECK(back.models[1].size == WindowSize{11, 10});
    CHECK(back.models[1].weights == bank.models[1].weights);
    CHECK(back.models[0].bias == bank.models[0].bias);
}
