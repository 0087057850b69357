#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ganevade/kernels.hpp"
#include "ganevade/rng.hpp"
#include "support/ref_kernels.hpp"
#include "support/testers.hpp"

using namespace ganevade;
using namespace ganevade::kernels;
using ganevade::testing::bitwise_equal;
using ganevade::testing::max_abs_diff;
using ganevade::testing::rand_tensor;
using ganevade::testing::rel_err;

namespace {

Tensor<double> identity_kernel(int channels) {
    Tensor<double> w({channels, channels, 3, 3});
    for (int c = 0; c < channels; ++c) w.at4(c, c, 1, 1) = 1.0;
    return w;
}

bool has_small(const Tensor<double>& t, double thr) {
    for (double v : t.data) {
        if (std::abs(v) < thr) return true;
    }
    return false;
}

// min gap between the window max and the runner-up, over all 2x2 windows
double min_pool_gap(const Tensor<double>& x) {
    double gap = 1e300;
    for (int c = 0; c < x.dims[0]; ++c) {
        for (int i = 0; i + 1 < x.dims[1]; i += 2) {
            for (int j = 0; j + 1 < x.dims[2]; j += 2) {
                double vals[4] = {x.at(c, i, j), x.at(c, i, j + 1), x.at(c, i + 1, j), x.at(c, i + 1, j + 1)};
                std::sort(vals, vals + 4);
                gap = std::min(gap, vals[3] - vals[2]);
            }
        }
    }
    return gap;
}

} // namespace

TEST_CASE("conv2d identity kernel is the exact identity") {
    Rng rng(1);
    Tensor<double> x = rand_tensor({1, 3, 3}, rng);
    const ConvSpec spec{1, 1, 1, 1};
    Tensor<double> y = conv2d(x, identity_kernel(1), Tensor<double>({1}), spec);
    CHECK(bitwise_equal(x, y));

    Tensor<double> x4 = rand_tensor({4, 6, 6}, rng);
    const ConvSpec spec4{4, 4, 1, 1};
    CHECK(bitwise_equal(x4, conv2d(x4, identity_kernel(4), Tensor<double>({4}), spec4)));
}

TEST_CASE("conv2d all-ones kernel on constant input sums the window") {
    Tensor<double> x = Tensor<double>::full({1, 5, 5}, 1.0);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    const ConvSpec spec{1, 1, 0, 1};
    Tensor<double> y = conv2d(x, w, Tensor<double>({1}), spec);
    REQUIRE(y.dims == std::vector<int>{1, 3, 3});
    for (double v : y.data) CHECK(v == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("conv2d matches direct-summation oracle") {
    for (int trial = 0; trial < 60; ++trial) {
        Rng rng(100 + static_cast<std::uint64_t>(trial));
        const int cin = 1 + static_cast<int>(rng.below(3));
        const int cout = 1 + static_cast<int>(rng.below(3));
        const int h = 5 + 2 * static_cast<int>(rng.below(3));
        const int dil = 1 + static_cast<int>(rng.below(2));
        const int pad = static_cast<int>(rng.below(3));
        const ConvSpec spec{cin, cout, pad, dil};
        if (spec.out_extent(h) < 1) continue;
        Tensor<double> x = rand_tensor({cin, h, h}, rng);
        Tensor<double> w = rand_tensor({cout, cin, 3, 3}, rng);
        Tensor<double> b = rand_tensor({cout}, rng);
        Tensor<double> got = conv2d(x, w, b, spec);
        Tensor<double> want = ref::conv2d(x, w, b, spec);
        REQUIRE(got.dims == want.dims);
        CHECK(max_abs_diff(got, want) < 1e-6);
    }
}

TEST_CASE("conv2d shape errors name the offending axis") {
    Tensor<double> x({2, 4, 4});
    Tensor<double> w({3, 2, 3, 3});
    Tensor<double> b({3});
    const ConvSpec spec{2, 3, 1, 1};
    CHECK_THROWS_AS(conv2d(Tensor<double>({1, 4, 4}), w, b, spec), ShapeError);
    try {
        conv2d(Tensor<double>({1, 4, 4}), w, b, spec);
    } catch (const ShapeError& e) {
        CHECK(e.axis() == 0);
    }
    CHECK_THROWS_AS(conv2d(x, Tensor<double>({3, 2, 3, 2}), b, spec), ShapeError);
    CHECK_THROWS_AS(conv2d(x, w, Tensor<double>({2}), spec), ShapeError);
}

TEST_CASE("conv2d_input_grad basics") {
    const ConvSpec spec{2, 3, 1, 1};
    Rng rng(5);
    Tensor<double> w = rand_tensor({3, 2, 3, 3}, rng);

    SUBCASE("zero gradient propagates to zero") {
        Tensor<double> gy({3, 4, 4});
        Tensor<double> gx = conv2d_input_grad(gy, w, spec);
        CHECK(max_abs(gx) == 0.0);
        CHECK(gx.dims == std::vector<int>{2, 4, 4});
    }
    SUBCASE("1x1 spatial case reduces over output channels through the center tap") {
        Tensor<double> gy = rand_tensor({3, 1, 1}, rng);
        Tensor<double> gx = conv2d_input_grad(gy, w, spec);
        for (int c = 0; c < 2; ++c) {
            double want = 0.0;
            for (int o = 0; o < 3; ++o) want += gy.at(o, 0, 0) * w.at4(o, c, 1, 1);
            CHECK(gx.at(c, 0, 0) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv gradients match finite differences") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 8 && seed < 40; ++seed) {
        Rng rng(900 + seed);
        const int dil = 1 + static_cast<int>(rng.below(2));
        const ConvSpec spec{2, 3, dil, dil};
        Tensor<double> x = rand_tensor({2, 6, 6}, rng);
        Tensor<double> w = rand_tensor({3, 2, 3, 3}, rng);
        Tensor<double> b = rand_tensor({3}, rng);
        Tensor<double> r = rand_tensor({3, 6, 6}, rng); // projection direction
        ++done;

        auto f_x = [&](const Tensor<double>& probe) { return dot(conv2d(probe, w, b, spec), r); };
        Tensor<double> gx_fd = finite_diff_grad(f_x, x, 1e-4);
        Tensor<double> gx = conv2d_input_grad(r, w, spec);
        CHECK(rel_err(gx_fd, gx) < 1e-5);

        auto f_w = [&](const Tensor<double>& probe) { return dot(conv2d(x, probe, b, spec), r); };
        Tensor<double> gw_fd = finite_diff_grad(f_w, w, 1e-4);
        auto [gw, gb] = conv2d_weight_grad(r, x, spec);
        CHECK(rel_err(gw_fd, gw) < 1e-5);

        auto f_b = [&](const Tensor<double>& probe) { return dot(conv2d(x, w, probe, spec), r); };
        Tensor<double> gb_fd = finite_diff_grad(f_b, b, 1e-4);
        CHECK(rel_err(gb_fd, gb) < 1e-5);
    }
    CHECK(done == 8);
}

TEST_CASE("conv2d_weight_grad special cases") {
    const ConvSpec spec{2, 3, 1, 1};
    Rng rng(6);
    SUBCASE("zeros") {
        Tensor<double> x = rand_tensor({2, 4, 4}, rng);
        auto [gw, gb] = conv2d_weight_grad(Tensor<double>({3, 4, 4}), x, spec);
        CHECK(max_abs(gw) == 0.0);
        CHECK(max_abs(gb) == 0.0);
    }
    SUBCASE("1x1 spatial keeps only the center tap") {
        Tensor<double> x = rand_tensor({2, 1, 1}, rng);
        Tensor<double> gy = rand_tensor({3, 1, 1}, rng);
        auto [gw, gb] = conv2d_weight_grad(gy, x, spec);
        for (int o = 0; o < 3; ++o) {
            CHECK(gb.data[o] == doctest::Approx(gy.at(o, 0, 0)));
            for (int c = 0; c < 2; ++c) {
                for (int u = 0; u < 3; ++u) {
                    for (int v = 0; v < 3; ++v) {
                        const double want = (u == 1 && v == 1) ? gy.at(o, 0, 0) * x.at(c, 0, 0) : 0.0;
                        CHECK(gw.at4(o, c, u, v) == doctest::Approx(want).epsilon(1e-12));
                    }
                }
            }
        }
    }
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    for (int trial = 0; trial < 25; ++trial) {
        Rng rng(200 + static_cast<std::uint64_t>(trial));
        const int cin = 1 + static_cast<int>(rng.below(3));
        const int cout = 1 + static_cast<int>(rng.below(3));
        const int h = 4 + static_cast<int>(rng.below(4));
        const int dil = 1 + static_cast<int>(rng.below(2));
        const int pad = static_cast<int>(rng.below(3));
        const ConvSpec cspec{cin, cout, pad, dil};
        if (cspec.out_extent(h) < 1) continue;
        const int oh = cspec.out_extent(h);

        Tensor<double> x = rand_tensor({cin, h, h}, rng);
        Tensor<double> y = rand_tensor({cout, oh, oh}, rng);
        Tensor<double> w = rand_tensor({cout, cin, 3, 3}, rng);
        Tensor<double> zero_cout({cout});
        Tensor<double> zero_cin({cin});

        const double lhs = dot(conv2d(x, w, zero_cout, cspec), y);
        const ConvSpec tspec{cout, cin, pad, dil};
        const double rhs = dot(x, conv_transpose2d(y, w, zero_cin, tspec));
        CHECK(std::abs(lhs - rhs) <= 1e-6 * l2_norm(x) * l2_norm(y) + 1e-12);
    }
}

TEST_CASE("conv_transpose2d basics") {
    SUBCASE("zero input with bias gives a constant plane") {
        const ConvSpec spec{2, 3, 1, 1};
        Tensor<double> x({2, 4, 4});
        Rng rng(7);
        Tensor<double> w = rand_tensor({2, 3, 3, 3}, rng);
        Tensor<double> b({3});
        b.data = {0.25, -1.0, 3.5};
        Tensor<double> z = conv_transpose2d(x, w, b, spec);
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 4; ++i) {
                for (int j = 0; j < 4; ++j) CHECK(z.at(c, i, j) == b.data[c]);
            }
        }
    }
    SUBCASE("identity kernel is the identity") {
        const ConvSpec spec{2, 2, 1, 1};
        Rng rng(8);
        Tensor<double> x = rand_tensor({2, 5, 5}, rng);
        Tensor<double> z = conv_transpose2d(x, identity_kernel(2), Tensor<double>({2}), spec);
        CHECK(bitwise_equal(x, z));
    }
    SUBCASE("matches the scatter-add oracle") {
        for (int trial = 0; trial < 50; ++trial) {
            Rng rng(300 + static_cast<std::uint64_t>(trial));
            const int cin = 1 + static_cast<int>(rng.below(3));
            const int cout = 1 + static_cast<int>(rng.below(3));
            const int h = 4 + static_cast<int>(rng.below(4));
            const int dil = 1 + static_cast<int>(rng.below(2));
            const int pad = static_cast<int>(rng.below(2 * dil + 1));
            const ConvSpec spec{cin, cout, pad, dil};
            if (spec.transposed_out_extent(h) < 1) continue;
            Tensor<double> x = rand_tensor({cin, h, h}, rng);
            Tensor<double> w = rand_tensor({cin, cout, 3, 3}, rng);
            Tensor<double> b = rand_tensor({cout}, rng);
            Tensor<double> got = conv_transpose2d(x, w, b, spec);
            Tensor<double> want = ref::conv_transpose2d(x, w, b, spec);
            REQUIRE(got.dims == want.dims);
            CHECK(max_abs_diff(got, want) < 1e-6);
        }
    }
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(400 + seed);
        const int dil = 1 + static_cast<int>(rng.below(2));
        const ConvSpec spec{3, 2, dil, dil};
        Tensor<double> x = rand_tensor({3, 5, 5}, rng);
        Tensor<double> w = rand_tensor({3, 2, 3, 3}, rng);
        Tensor<double> b = rand_tensor({2}, rng);
        Tensor<double> r = rand_tensor({2, 5, 5}, rng);

        auto f_x = [&](const Tensor<double>& probe) { return dot(conv_transpose2d(probe, w, b, spec), r); };
        CHECK(rel_err(finite_diff_grad(f_x, x, 1e-4), conv_transpose2d_input_grad(r, w, spec)) < 1e-5);

        auto f_w = [&](const Tensor<double>& probe) { return dot(conv_transpose2d(x, probe, b, spec), r); };
        auto [gw, gb] = conv_transpose2d_weight_grad(r, x, spec);
        CHECK(rel_err(finite_diff_grad(f_w, w, 1e-4), gw) < 1e-5);

        auto f_b = [&](const Tensor<double>& probe) { return dot(conv_transpose2d(x, w, probe, spec), r); };
        CHECK(rel_err(finite_diff_grad(f_b, b, 1e-4), gb) < 1e-5);
    }
}

TEST_CASE("maxpool2d picks window maxima and records argmax") {
    Tensor<double> x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto [y, idx] = maxpool2d(x);
    CHECK(y.numel() == 1);
    CHECK(y.data[0] == 4.0);
    CHECK(idx.idx[0] == 3);
}

TEST_CASE("maxpool2d ties break to the lowest flat index") {
    Tensor<double> x = Tensor<double>::full({2, 4, 4}, 0.75);
    auto [y, idx] = maxpool2d(x);
    CHECK(y.data == std::vector<double>(8, 0.75));
    for (int c = 0; c < 2; ++c) {
        for (int wi = 0; wi < 2; ++wi) {
            for (int wj = 0; wj < 2; ++wj) {
                CHECK(idx.idx[(c * 2 + wi) * 2 + wj] == (2 * wi) * 4 + 2 * wj);
            }
        }
    }
}

TEST_CASE("maxpool2d matches the window-scan oracle") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(500 + static_cast<std::uint64_t>(trial));
        Tensor<double> x = rand_tensor({3, 8, 8}, rng);
        auto [y, idx] = maxpool2d(x);
        auto [ry, ridx] = ref::maxpool2d(x);
        CHECK(bitwise_equal(y, ry));
        CHECK(idx.idx == ridx.idx);
    }
}

TEST_CASE("maxpool2d rejects odd spatial dims") {
    CHECK_THROWS_AS(maxpool2d(Tensor<double>({1, 3, 4})), ShapeError);
    try {
        maxpool2d(Tensor<double>({1, 4, 5}));
    } catch (const ShapeError& e) {
        CHECK(e.axis() == 2);
    }
}

TEST_CASE("maxunpool2d scatters back to the recorded cells") {
    Rng rng(9);
    Tensor<double> x = rand_tensor({2, 6, 6}, rng);
    auto [y, idx] = maxpool2d(x);
    Tensor<double> up = maxunpool2d(y, idx, 6, 6);
    // each window max lands back on its own cell, zeros elsewhere
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                const double v = up.at(c, i, j);
                if (v != 0.0) CHECK(v == x.at(c, i, j));
            }
        }
    }
    // pool o unpool o pool is pool, bitwise
    auto [y2, idx2] = maxpool2d(up);
    CHECK(bitwise_equal(y2, y));
    CHECK(idx2.idx == idx.idx);
}

TEST_CASE("maxunpool2d rejects corrupted indices") {
    Tensor<double> x({1, 2, 2});
    kernels::PoolIndices idx;
    idx.dims = {1, 2, 2};
    idx.idx = {0, 2, 8, 10}; // window (0,1) must hold flats {2,3,6,7}; 8 is outside
    CHECK_THROWS_AS(maxunpool2d(x, idx, 4, 4), Error);
}

TEST_CASE("maxunpool2d gradient is the gather; matches finite differences") {
    Rng rng(10);
    Tensor<double> src = rand_tensor({2, 4, 4}, rng);
    auto [x, idx] = maxpool2d(src);
    Tensor<double> r = rand_tensor({2, 4, 4}, rng);
    auto f = [&](const Tensor<double>& probe) { return dot(maxunpool2d(probe, idx, 4, 4), r); };
    Tensor<double> fd = finite_diff_grad(f, x, 1e-4);
    CHECK(rel_err(fd, maxunpool2d_input_grad(r, idx)) < 1e-5);
}

TEST_CASE("maxpool2d gradient via scatter matches finite differences on clean gaps") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 30; ++seed) {
        Rng rng(600 + seed);
        Tensor<double> x = rand_tensor({2, 6, 6}, rng);
        if (min_pool_gap(x) < 1e-3) continue;
        ++done;
        Tensor<double> r = rand_tensor({2, 3, 3}, rng);
        auto f = [&](const Tensor<double>& probe) { return dot(maxpool2d(probe).first, r); };
        Tensor<double> fd = finite_diff_grad(f, x, 1e-4);
        auto [y, idx] = maxpool2d(x);
        CHECK(rel_err(fd, maxunpool2d(r, idx, 6, 6)) < 1e-5);
    }
    CHECK(done == 5);
}

TEST_CASE("relu and relu_grad") {
    Tensor<double> x({1, 1, 3}, {-1.0, 0.0, 2.0});
    Tensor<double> y = relu(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0});

    Tensor<double> gy = Tensor<double>::full({1, 1, 3}, 1.0);
    Tensor<double> gx = relu_grad(gy, x);
    CHECK(gx.data == std::vector<double>{0.0, 0.0, 1.0}); // subgradient at 0 is 0

    Tensor<double> neg = Tensor<double>::full({2, 2, 2}, -3.0);
    CHECK(max_abs(relu(neg)) == 0.0);
    CHECK(max_abs(relu_grad(Tensor<double>::full({2, 2, 2}, 1.0), neg)) == 0.0);

    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 30; ++seed) {
        Rng rng(700 + seed);
        Tensor<double> t = rand_tensor({3, 4, 4}, rng);
        if (has_small(t, 1e-3)) continue;
        ++done;
        Tensor<double> r = rand_tensor({3, 4, 4}, rng);
        auto f = [&](const Tensor<double>& probe) { return dot(relu(probe), r); };
        CHECK(rel_err(finite_diff_grad(f, t, 1e-4), relu_grad(r, t)) < 1e-5);
    }
    CHECK(done == 5);
}

TEST_CASE("finite_diff_grad sanity") {
    Rng rng(11);
    Tensor<double> x = rand_tensor({2, 3}, rng);
    auto sum_f = [](const Tensor<double>& t) {
        double acc = 0.0;
        for (double v : t.data) acc += v;
        return acc;
    };
    Tensor<double> g = finite_diff_grad(sum_f, x, 1e-4);
    for (double v : g.data) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    auto quad = [](const Tensor<double>& t) {
        double acc = 0.0;
        for (double v : t.data) acc += 0.5 * v * v;
        return acc;
    };
    Tensor<double> g2 = finite_diff_grad(quad, x, 1e-4);
    CHECK(rel_err(g2, x) < 1e-8); // central differences are exact on quadratics
}

TEST_CASE("kernels are bitwise identical across thread settings") {
    const int saved = threads();
    Rng rng(12);
    Tensor<double> x = rand_tensor({8, 16, 16}, rng);
    Tensor<double> w = rand_tensor({16, 8, 3, 3}, rng);
    Tensor<double> b = rand_tensor({16}, rng);
    const ConvSpec spec{8, 16, 1, 1};

    set_threads(1);
    Tensor<double> serial = conv2d(x, w, b, spec);
    Tensor<double> serial_gx = conv2d_input_grad(serial, w, spec);
    auto serial_wg = conv2d_weight_grad(serial, x, spec);

    set_threads(4);
    Tensor<double> par = conv2d(x, w, b, spec);
    Tensor<double> par_gx = conv2d_input_grad(serial, w, spec);
    auto par_wg = conv2d_weight_grad(serial, x, spec);

    CHECK(bitwise_equal(serial, par));
    CHECK(bitwise_equal(serial_gx, par_gx));
    CHECK(bitwise_equal(serial_wg.first, par_wg.first));
    CHECK(bitwise_equal(serial_wg.second, par_wg.second));
    set_threads(saved);
}

TEST_CASE("float instantiation tracks the double path") {
    Rng rng(13);
    Tensor<double> x64 = rand_tensor({2, 6, 6}, rng);
    Tensor<double> w64 = rand_tensor({3, 2, 3, 3}, rng);
    Tensor<double> b64 = rand_tensor({3}, rng);
    Tensor<float> x32({2, 6, 6}), w32({3, 2, 3, 3}), b32({3});
    for (std::size_t i = 0; i < x64.numel(); ++i) x32.data[i] = static_cast<float>(x64.data[i]);
    for (std::size_t i = 0; i < w64.numel(); ++i) w32.data[i] = static_cast<float>(w64.data[i]);
    for (std::size_t i = 0; i < b64.numel(); ++i) b32.data[i] = static_cast<float>(b64.data[i]);
    const ConvSpec spec{2, 3, 1, 1};
    Tensor<double> y64 = conv2d(x64, w64, b64, spec);
    Tensor<float> y32 = conv2d(x32, w32, b32, spec);
    for (std::size_t i = 0; i < y64.numel(); ++i) {
        CHECK(std::abs(y64.data[i] - y32.data[i]) < 1e-4);
    }
}
