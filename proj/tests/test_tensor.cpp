#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "ganevade/rng.hpp"
#include "ganevade/tensor.hpp"

using namespace ganevade;

TEST_CASE("tensor shape invariants") {
    Tensor<double> t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.ndim() == 3);
    CHECK_THROWS_AS(Tensor<double>({2, 0, 4}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>(std::vector<int>{}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    try {
        Tensor<double> bad({3, -1});
        CHECK(false);
    } catch (const ShapeError& e) {
        CHECK(e.axis() == 1);
    }
}

TEST_CASE("tensor file roundtrip is bitwise for both dtypes") {
    Rng rng(42);
    Tensor<double> t64({3, 5, 7});
    for (auto& v : t64.data) v = rng.uniform(-10.0, 10.0);
    Tensor<float> t32({4, 2});
    for (auto& v : t32.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    std::stringstream buf64, buf32;
    save_tensor(t64, buf64);
    save_tensor(t32, buf32);
    const std::string bytes64 = buf64.str();

    Tensor<double> back64 = load_tensor_as<double>(buf64);
    CHECK(back64.dims == t64.dims);
    CHECK(std::memcmp(back64.data.data(), t64.data.data(), t64.numel() * sizeof(double)) == 0);

    Tensor<float> back32 = load_tensor_as<float>(buf32);
    CHECK(back32.dims == t32.dims);
    CHECK(std::memcmp(back32.data.data(), t32.data.data(), t32.numel() * sizeof(float)) == 0);

    // save(load(x)) reproduces the original bytes
    std::stringstream again;
    save_tensor(back64, again);
    CHECK(again.str() == bytes64);
}

TEST_CASE("tensor file header validation") {
    Tensor<double> t({2, 2});
    std::stringstream buf;
    save_tensor(t, buf);
    std::string bytes = buf.str();

    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::stringstream in(bytes);
        CHECK_THROWS_AS(load_tensor(in), FormatError);
    }
    SUBCASE("unknown dtype code") {
        bytes[4] = 7;
        std::stringstream in(bytes);
        CHECK_THROWS_AS(load_tensor(in), FormatError);
    }
    SUBCASE("truncated payload") {
        std::stringstream in(bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(load_tensor(in), FormatError);
    }
    SUBCASE("dtype mismatch on typed load") {
        std::stringstream in(bytes);
        CHECK_THROWS_AS(load_tensor_as<float>(in), FormatError);
    }
}

TEST_CASE("rng streams are deterministic and distinct") {
    Rng a = Rng::derive(7, 1);
    Rng b = Rng::derive(7, 1);
    Rng c = Rng::derive(7, 2);
    bool same = true, distinct = false;
    for (int i = 0; i < 100; ++i) {
        const double va = a.uniform();
        same = same && (va == b.uniform());
        distinct = distinct || (va != c.uniform());
    }
    CHECK(same);
    CHECK(distinct);
}

TEST_CASE("rng uniform stays in range") {
    Rng rng(123);
    for (int i = 0; i < 10000; ++i) {
        const double v = rng.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
