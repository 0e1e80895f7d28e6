#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sirrkit/rng.hpp"
#include "sirrkit/tensor.hpp"

using namespace sirrkit;

TEST_CASE("conv_forward identity kernel passes input through") {
    Rng rng(7);
    const Tensor3 in = oracle::random_tensor(6, 5, 3, rng);
    const KernelBank id = oracle::identity_bank(3);
    const Tensor3 out = conv_forward(id, in);
    REQUIRE(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("conv_forward of zero input is zero") {
    Rng rng(11);
    const KernelBank k = oracle::random_bank(3, 2, 4, rng);
    const Tensor3 zero(5, 5, 2);
    const Tensor3 out = conv_forward(k, zero);
    REQUIRE(max_abs(out) == 0.0);
}

TEST_CASE("conv_forward matches the naive-loop oracle") {
    Rng rng(23);
    const Tensor3 in = oracle::random_tensor(5, 5, 2, rng);
    const KernelBank k = oracle::random_bank(3, 2, 4, rng);
    const Tensor3 out = conv_forward(k, in);
    const Tensor3 ref = oracle::conv_naive(k, in);
    REQUIRE(max_abs_diff(out, ref) <= 1e-12);

    // explicit double-sum spot check at an interior and a corner pixel
    for (auto [y, x] : {std::pair{2, 2}, std::pair{0, 0}}) {
        for (int o = 0; o < 4; ++o) {
            double acc = 0.0;
            for (int c = 0; c < 2; ++c)
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        const int yy = y + ky - 1, xx = x + kx - 1;
                        if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
                        acc += k.at(o, c, ky, kx) * in.at(yy, xx, c);
                    }
            REQUIRE(out.at(y, x, o) == Catch::Approx(acc).margin(1e-12));
        }
    }
}

TEST_CASE("conv_forward rejects channel mismatch") {
    Rng rng(3);
    const KernelBank k = oracle::random_bank(3, 2, 4, rng);
    const Tensor3 in(4, 4, 3);
    REQUIRE_THROWS_AS(conv_forward(k, in), std::invalid_argument);
    REQUIRE_THROWS_AS(conv_transpose(k, in), std::invalid_argument);
}

TEST_CASE("conv_transpose identity kernel is self-adjoint identity") {
    Rng rng(5);
    const Tensor3 in = oracle::random_tensor(4, 7, 2, rng);
    const KernelBank id = oracle::identity_bank(2);
    REQUIRE(max_abs_diff(conv_transpose(id, in), in) == 0.0);
    REQUIRE(max_abs(conv_transpose(id, Tensor3(4, 7, 2))) == 0.0);
}

TEST_CASE("conv_transpose is the exact adjoint of conv_forward") {
    Rng rng(31);
    const KernelBank k = oracle::random_bank(3, 4, 2, rng);
    const Tensor3 z = oracle::random_tensor(5, 5, 4, rng);
    const Tensor3 y = oracle::random_tensor(5, 5, 2, rng);
    const double lhs = dot(conv_forward(k, z), y);
    const double rhs = dot(z, conv_transpose(k, y));
    REQUIRE(std::fabs(lhs - rhs) <= 1e-12 * std::max(1.0, std::fabs(lhs)));
}

TEST_CASE("adjointness holds over randomized shapes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed * 977 + 13);
        const int ks = 1 + 2 * static_cast<int>(rng.uniform() * 3);  // 1,3,5
        const int cin = 1 + static_cast<int>(rng.uniform() * 4);
        const int cout = 1 + static_cast<int>(rng.uniform() * 4);
        const int h = 3 + static_cast<int>(rng.uniform() * 8);
        const int w = 3 + static_cast<int>(rng.uniform() * 8);
        const KernelBank k = oracle::random_bank(ks, cin, cout, rng);
        const Tensor3 z = oracle::random_tensor(h, w, cin, rng);
        const Tensor3 y = oracle::random_tensor(h, w, cout, rng);
        const double lhs = dot(conv_forward(k, z), y);
        const double rhs = dot(z, conv_transpose(k, y));
        const double bound =
            1e-10 * frob_norm(z) * frob_norm(y) * kernel_frob_norm(k) + 1e-14;
        REQUIRE(std::fabs(lhs - rhs) <= bound);
    }
}

TEST_CASE("conv_forward is linear") {
    Rng rng(41);
    const KernelBank k = oracle::random_bank(3, 3, 2, rng);
    const Tensor3 x = oracle::random_tensor(6, 6, 3, rng);
    const Tensor3 y = oracle::random_tensor(6, 6, 3, rng);
    const double a = 0.7, b = -1.3;
    Tensor3 combo(6, 6, 3);
    for (std::size_t i = 0; i < combo.size(); ++i)
        combo.data[i] = a * x.data[i] + b * y.data[i];
    const Tensor3 lhs = conv_forward(k, combo);
    const Tensor3 fx = conv_forward(k, x);
    const Tensor3 fy = conv_forward(k, y);
    double worst = 0.0;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double want = a * fx.data[i] + b * fy.data[i];
        worst = std::max(worst,
                         std::fabs(lhs.data[i] - want) / std::max(1.0, std::fabs(want)));
    }
    REQUIRE(worst <= 1e-12);
}

TEST_CASE("convolution is deterministic across repeated runs") {
    Rng rng(59);
    const KernelBank k = oracle::random_bank(5, 3, 4, rng);
    const Tensor3 in = oracle::random_tensor(9, 8, 3, rng);
    const Tensor3 a = conv_forward(k, in);
    const Tensor3 b = conv_forward(k, in);
    REQUIRE(a.data == b.data);
    const Tensor3 ta = conv_transpose(k, conv_forward(k, in));
    const Tensor3 tb = conv_transpose(k, conv_forward(k, in));
    REQUIRE(ta.data == tb.data);
}

TEST_CASE("compose_kernels with identity outer or inner is the other bank") {
    Rng rng(67);
    const KernelBank inner = oracle::random_bank(3, 2, 3, rng);
    const KernelBank outer_id = oracle::identity_bank(3);
    const KernelBank lhs = compose_kernels(outer_id, inner);
    REQUIRE(lhs.kernel_size == 3);
    for (int o = 0; o < 3; ++o)
        for (int c = 0; c < 2; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    REQUIRE(lhs.at(o, c, ky, kx) ==
                            Catch::Approx(inner.at(o, c, ky, kx)).margin(1e-15));

    const KernelBank outer = oracle::random_bank(3, 3, 4, rng);
    const KernelBank inner_id = oracle::identity_bank(3);
    const KernelBank rhs = compose_kernels(outer, inner_id);
    for (int o = 0; o < 4; ++o)
        for (int c = 0; c < 3; ++c)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    REQUIRE(rhs.at(o, c, ky, kx) ==
                            Catch::Approx(outer.at(o, c, ky, kx)).margin(1e-15));
}

TEST_CASE("compose_kernels matches sequential convolution in the interior") {
    Rng rng(71);
    const KernelBank inner = oracle::random_bank(3, 2, 3, rng);
    const KernelBank outer = oracle::random_bank(3, 3, 4, rng);
    const KernelBank composite = compose_kernels(outer, inner);
    REQUIRE(composite.kernel_size == 5);
    REQUIRE(composite.in_channels == 2);
    REQUIRE(composite.out_channels == 4);

    const Tensor3 x = oracle::random_tensor(16, 16, 2, rng);
    const Tensor3 twostep = conv_forward(outer, conv_forward(inner, x));
    const Tensor3 onestep = conv_forward(composite, x);
    const int border = (3 + 3 - 2) / 2;
    double worst = 0.0;
    for (int y = border; y < 16 - border; ++y)
        for (int xx = border; xx < 16 - border; ++xx)
            for (int o = 0; o < 4; ++o)
                worst = std::max(worst,
                                 std::fabs(twostep.at(y, xx, o) - onestep.at(y, xx, o)));
    REQUIRE(worst <= 1e-12);
}

TEST_CASE("compose_kernels rejects channel mismatch") {
    Rng rng(73);
    const KernelBank a = oracle::random_bank(3, 2, 3, rng);
    const KernelBank b = oracle::random_bank(3, 2, 3, rng);
    REQUIRE_THROWS_AS(compose_kernels(a, b), std::invalid_argument);
}

TEST_CASE("resize_bilinear preserves constants and identity") {
    Tensor3 c(4, 6, 2, 0.5);
    const Tensor3 up = resize_bilinear(c, 9, 13);
    REQUIRE(max_abs(elementwise(up, Tensor3(9, 13, 2, 0.5), ElemOp::sub)) == 0.0);

    Rng rng(79);
    const Tensor3 r = oracle::random_tensor(5, 7, 3, rng);
    const Tensor3 same = resize_bilinear(r, 5, 7);
    REQUIRE(same.data == r.data);
}

TEST_CASE("resize_bilinear checkerboard center is the mean") {
    Tensor3 board(2, 2, 1);
    board.at(0, 0, 0) = 0.0;
    board.at(0, 1, 0) = 1.0;
    board.at(1, 0, 0) = 1.0;
    board.at(1, 1, 0) = 0.0;
    const Tensor3 up = resize_bilinear(board, 3, 3);
    REQUIRE(up.at(1, 1, 0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(up.at(0, 0, 0) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(up.at(2, 2, 0) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(up.at(0, 2, 0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("resize_bilinear rejects degenerate targets") {
    Tensor3 t(3, 3, 1, 1.0);
    REQUIRE_THROWS_AS(resize_bilinear(t, 0, 3), std::invalid_argument);
}

TEST_CASE("elementwise operations") {
    Rng rng(83);
    const Tensor3 a = oracle::random_tensor(4, 4, 2, rng);
    const Tensor3 zero(4, 4, 2);
    const Tensor3 one(4, 4, 2, 1.0);
    REQUIRE(max_abs(elementwise(a, zero, ElemOp::mul)) == 0.0);
    REQUIRE(max_abs_diff(elementwise(a, one, ElemOp::mul), a) == 0.0);

    const Tensor3 b = oracle::random_tensor(4, 4, 2, rng);
    const Tensor3 ab = elementwise(a, b, ElemOp::mul);
    const Tensor3 ba = elementwise(b, a, ElemOp::mul);
    REQUIRE(ab.data == ba.data);

    const Tensor3 sum = elementwise(a, b, ElemOp::add);
    const Tensor3 diff = elementwise(sum, b, ElemOp::sub);
    REQUIRE(max_abs_diff(diff, a) <= 1e-15);

    REQUIRE_THROWS_AS(elementwise(a, Tensor3(3, 4, 2), ElemOp::add), std::invalid_argument);
}

TEST_CASE("KernelBank rejects even kernel sizes") {
    REQUIRE_THROWS_AS(KernelBank(4, 2, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(KernelBank(0, 2, 2), std::invalid_argument);
}

TEST_CASE("normalize_out_channels yields unit slices") {
    Rng rng(89);
    KernelBank k = oracle::random_bank(3, 3, 5, rng);
    normalize_out_channels(k);
    for (int o = 0; o < 5; ++o)
        REQUIRE(out_channel_norm(k, o) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(k.unit_norm);
}
