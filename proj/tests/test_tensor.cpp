#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "voxelseg/tensor.hpp"

using namespace voxelseg;
using oracle::close_rel;
using testutil::randint;
using testutil::random_tensor;

TEST_CASE("tensor builders") {
    Tensor z = Tensor::zeros({2, 2});
    CHECK(z.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(z[i] == 0.0);

    Tensor f = Tensor::full({3}, 1.5);
    for (int i = 0; i < 3; ++i) CHECK(f[i] == 1.5);

    CHECK_THROWS(Tensor::from_values({2}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(Tensor::zeros({2, 0}));
    CHECK_THROWS(Tensor::zeros({}));
}

TEST_CASE("matmul identities and small cases") {
    Tensor id = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_values({2, 2}, {3, 4, 5, 6});
    Tensor prod = matmul(id, a);
    for (int i = 0; i < 4; ++i) CHECK(prod[i] == a[i]);
    prod = matmul(a, id);
    for (int i = 0; i < 4; ++i) CHECK(prod[i] == a[i]);

    Tensor r = matmul(Tensor::from_values({1, 2}, {1, 2}), Tensor::from_values({2, 1}, {3, 4}));
    CHECK(r.size() == 1);
    CHECK(r[0] == 11.0);

    CHECK_THROWS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})));
}

TEST_CASE("matmul against triple-loop oracle") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = randint(rng, 1, 8), k = randint(rng, 1, 8), n = randint(rng, 1, 8);
        Tensor a = random_tensor(rng, {m, k});
        Tensor b = random_tensor(rng, {k, n});
        CHECK(close_rel(matmul(a, b), oracle::matmul(a, b), 1e-12));
    }
}

TEST_CASE("conv2d trivial fields and shape arithmetic") {
    Tensor out = conv2d_valid(Tensor::full({1, 3, 3}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0),
                              Tensor::zeros({1}));
    CHECK(out.shape() == std::vector<int>{1, 2, 2});
    for (int i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(4.0));

    // 24x24 input with a 5x5 kernel leaves a 20x20 map
    Tensor big = conv2d_valid(Tensor::zeros({1, 24, 24}), Tensor::zeros({1, 1, 5, 5}),
                              Tensor::zeros({1}));
    CHECK(big.shape() == std::vector<int>{1, 20, 20});

    CHECK_THROWS(conv2d_valid(Tensor::zeros({1, 3, 3}), Tensor::zeros({1, 1, 4, 4}),
                              Tensor::zeros({1})));
}

TEST_CASE("conv2d against naive loop oracle") {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 110; ++trial) {
        const int C = randint(rng, 1, 3), K = randint(rng, 1, 3);
        const int H = randint(rng, 1, 16), W = randint(rng, 1, 16);
        const int kh = randint(rng, 1, H), kw = randint(rng, 1, W);
        Tensor in = random_tensor(rng, {C, H, W});
        Tensor ker = random_tensor(rng, {K, C, kh, kw});
        Tensor bias = random_tensor(rng, {K});
        Tensor got = conv2d_valid(in, ker, bias);
        CHECK(got.shape() == std::vector<int>{K, H - kh + 1, W - kw + 1});
        CHECK(close_rel(got, oracle::conv2d(in, ker, bias), 1e-10));
    }
}

TEST_CASE("conv3d trivial fields and shape arithmetic") {
    Tensor out = conv3d_valid(Tensor::full({1, 3, 3, 3}, 1.0), Tensor::full({1, 1, 2, 2, 2}, 1.0),
                              Tensor::zeros({1}));
    CHECK(out.shape() == std::vector<int>{1, 2, 2, 2});
    for (int i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(8.0));

    Tensor big = conv3d_valid(Tensor::zeros({1, 20, 20, 20}), Tensor::zeros({1, 1, 5, 5, 5}),
                              Tensor::zeros({1}));
    CHECK(big.shape() == std::vector<int>{1, 16, 16, 16});
}

TEST_CASE("conv3d against naive loop oracle") {
    std::mt19937_64 rng(303);
    for (int trial = 0; trial < 100; ++trial) {
        const int C = randint(rng, 1, 2), K = randint(rng, 1, 2);
        const int D = randint(rng, 1, 8), H = randint(rng, 1, 8), W = randint(rng, 1, 8);
        const int kd = randint(rng, 1, D), kh = randint(rng, 1, H), kw = randint(rng, 1, W);
        Tensor in = random_tensor(rng, {C, D, H, W});
        Tensor ker = random_tensor(rng, {K, C, kd, kh, kw});
        Tensor bias = random_tensor(rng, {K});
        Tensor got = conv3d_valid(in, ker, bias);
        CHECK(got.shape() == std::vector<int>{K, D - kd + 1, H - kh + 1, W - kw + 1});
        CHECK(close_rel(got, oracle::conv3d(in, ker, bias), 1e-10));
    }
}

TEST_CASE("maxpool2d single window, ties, argmax consistency") {
    auto r = maxpool2d(Tensor::from_values({1, 2, 2}, {1, 2, 3, 4}), 2, 2);
    CHECK(r.output.size() == 1);
    CHECK(r.output[0] == 4.0);
    CHECK(r.argmax[0] == 3);  // position (1,1)

    auto tie = maxpool2d(Tensor::full({1, 2, 2}, 7.0), 2, 2);
    CHECK(tie.output[0] == 7.0);
    CHECK(tie.argmax[0] == 0);  // first index wins

    CHECK_THROWS(maxpool2d(Tensor::zeros({1, 3, 3}), 2, 2));
}

TEST_CASE("maxpool2d against window scan oracle") {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int C = randint(rng, 1, 3);
        const int ph = randint(rng, 1, 4), pw = randint(rng, 1, 4);
        const int H = ph * randint(rng, 1, 4), W = pw * randint(rng, 1, 4);
        Tensor in = random_tensor(rng, {C, H, W});
        auto r = maxpool2d(in, ph, pw);
        const int oh = H / ph, ow = W / pw;
        REQUIRE(r.output.shape() == std::vector<int>{C, oh, ow});
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double best = -1e300;
                    for (int dy = 0; dy < ph; ++dy)
                        for (int dx = 0; dx < pw; ++dx)
                            best = std::max(best, in[(c * H + y * ph + dy) * W + x * pw + dx]);
                    const int oi = (c * oh + y) * ow + x;
                    CHECK(r.output[oi] == best);
                    // stored argmax points at the winning input value
                    CHECK(in[r.argmax[oi]] == r.output[oi]);
                }
    }
}
