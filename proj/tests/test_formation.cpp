#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sirrkit/formation.hpp"

using namespace sirrkit;

namespace {

Tensor3 random_image(int h, int w, Rng& rng) {
    Tensor3 t(h, w, 3);
    for (double& v : t.data) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("synthesize_blend with zero reflection scales by gamma1") {
    Rng rng(201);
    const Tensor3 t = random_image(6, 6, rng);
    const Tensor3 r(6, 6, 3);
    BlendParams p{0.9, 0.5, 0};
    const Tensor3 out = synthesize_blend(t, r, p);
    REQUIRE(max_abs_diff(out, scaled(t, 0.9)) <= 1e-15);
}

TEST_CASE("synthesize_blend saturates at all-ones") {
    const Tensor3 ones(4, 4, 3, 1.0);
    BlendParams p{1.0, 1.0, 0};
    const Tensor3 out = synthesize_blend(ones, ones, p);
    REQUIRE(max_abs_diff(out, ones) == 0.0);
}

TEST_CASE("synthesize_blend constant case evaluates to 0.52") {
    const Tensor3 half(3, 5, 3, 0.5);
    BlendParams p{0.8, 0.4, 0};
    const Tensor3 out = synthesize_blend(half, half, p);
    // 0.8*0.5 + 0.4*0.5 - 0.32*0.25
    REQUIRE(max_abs_diff(out, Tensor3(3, 5, 3, 0.52)) <= 1e-15);
}

TEST_CASE("synthesize_blend validates inputs") {
    const Tensor3 a(4, 4, 3, 0.5);
    REQUIRE_THROWS_AS(synthesize_blend(a, Tensor3(4, 5, 3, 0.5), BlendParams{}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(synthesize_blend(a, a, BlendParams{0.7, 0.5, 0}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(synthesize_blend(a, a, BlendParams{0.9, 0.3, 0}),
                      std::invalid_argument);
}

TEST_CASE("unclamped blend satisfies the formation identity exactly") {
    Rng rng(207);
    const Tensor3 t = random_image(8, 8, rng);
    const Tensor3 r = random_image(8, 8, rng);
    BlendParams p{0.85, 0.6, 0};
    const Tensor3 i = synthesize_blend_unclamped(t, r, p);
    // N = (g1-1)T + (g2-1)R - g1*g2*T.R, then I == T + R + N
    double worst = 0.0;
    for (std::size_t k = 0; k < i.size(); ++k) {
        const double n = (p.gamma1 - 1.0) * t.data[k] + (p.gamma2 - 1.0) * r.data[k] -
                         p.gamma1 * p.gamma2 * t.data[k] * r.data[k];
        worst = std::max(worst, std::fabs(i.data[k] - (t.data[k] + r.data[k] + n)));
    }
    REQUIRE(worst <= 1e-15);
}

TEST_CASE("blend output stays in [0,1] and is monotone in t") {
    Rng rng(211);
    const Tensor3 t = random_image(6, 6, rng);
    const Tensor3 r = random_image(6, 6, rng);
    BlendParams p{0.8, 0.9, 0};
    const Tensor3 i = synthesize_blend(t, r, p);
    for (double v : i.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    Tensor3 t2 = t;
    for (double& v : t2.data) v = std::min(1.0, v + 0.05);
    const Tensor3 i2 = synthesize_blend(t2, r, p);
    for (std::size_t k = 0; k < i.size(); ++k) REQUIRE(i2.data[k] >= i.data[k] - 1e-15);
}

TEST_CASE("sample_blend_params respects ranges and seed") {
    for (std::uint64_t seed : {1ull, 42ull, 977ull}) {
        const BlendParams a = sample_blend_params(seed);
        const BlendParams b = sample_blend_params(seed);
        REQUIRE(a.gamma1 == b.gamma1);
        REQUIRE(a.gamma2 == b.gamma2);
        REQUIRE(a.gamma1 >= 0.8);
        REQUIRE(a.gamma1 <= 1.0);
        REQUIRE(a.gamma2 >= 0.4);
        REQUIRE(a.gamma2 <= 1.0);
    }
}

TEST_CASE("init_dictionaries is deterministic in the seed") {
    const DictionarySet a = init_dictionaries(8, 12, 5, 99, DictScheme::gradient_seeded);
    const DictionarySet b = init_dictionaries(8, 12, 5, 99, DictScheme::gradient_seeded);
    REQUIRE(a.d_t.weights == b.d_t.weights);
    REQUIRE(a.d_r.weights == b.d_r.weights);
    REQUIRE(a.d_n.weights == b.d_n.weights);
    REQUIRE(a.w_filters.weights == b.w_filters.weights);
    REQUIRE(a.m_t.weights == b.m_t.weights);
    const DictionarySet c = init_dictionaries(8, 12, 5, 100, DictScheme::gradient_seeded);
    REQUIRE(a.d_t.weights != c.d_t.weights);
}

TEST_CASE("init_dictionaries produces unit out-channel norms") {
    for (DictScheme scheme : {DictScheme::random_unit, DictScheme::gradient_seeded}) {
        const DictionarySet d = init_dictionaries(6, 9, 3, 5, scheme);
        for (const KernelBank* bank : {&d.d_t, &d.d_r, &d.d_n, &d.w_filters})
            for (int o = 0; o < bank->out_channels; ++o)
                REQUIRE(out_channel_norm(*bank, o) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("init_dictionaries rejects even kernel sizes") {
    REQUIRE_THROWS_AS(init_dictionaries(4, 4, 4, 0, DictScheme::random_unit),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(init_dictionaries(0, 4, 3, 0, DictScheme::random_unit),
                      std::invalid_argument);
}

TEST_CASE("gradient-seeded derivative filters annihilate constant images") {
    const DictionarySet d = init_dictionaries(6, 9, 5, 17, DictScheme::gradient_seeded);
    const Tensor3 constant(12, 12, 3, 0.7);
    const Tensor3 response = conv_forward(d.w_filters, constant);
    const int half = (d.w_filters.kernel_size - 1) / 2;
    for (int y = half; y < 12 - half; ++y)
        for (int x = half; x < 12 - half; ++x)
            for (int c = 0; c < 3; ++c)  // dx, dy, Laplacian channels
                REQUIRE(std::fabs(response.at(y, x, c)) <= 1e-12);
}

TEST_CASE("composites equal compose_kernels of their constituents") {
    const DictionarySet d = init_dictionaries(4, 6, 3, 23, DictScheme::random_unit);
    const KernelBank mt = compose_kernels(d.w_filters, d.d_t);
    REQUIRE(d.m_t.weights == mt.weights);
    const KernelBank mr = compose_kernels(d.w_filters, d.d_r);
    REQUIRE(d.m_r.weights == mr.weights);
    REQUIRE(d.m_t.kernel_size == 5);
}

TEST_CASE("reconstruct_images maps zero features to zero images") {
    const DictionarySet d = init_dictionaries(4, 6, 3, 29, DictScheme::random_unit);
    const Tensor3 z(10, 10, 4);
    auto [t, r, n] = reconstruct_images(d, z, z, z);
    REQUIRE(max_abs(t) == 0.0);
    REQUIRE(max_abs(r) == 0.0);
    REQUIRE(max_abs(n) == 0.0);
}

TEST_CASE("reconstruct_images passes a delta through an identity-tap bank") {
    DictionarySet d;
    d.d_t = oracle::identity_bank(3);
    d.d_r = oracle::identity_bank(3);
    d.d_n = oracle::identity_bank(3);
    Rng rng(229);
    d.w_filters = oracle::random_bank(1, 3, 4, rng);
    d.rebuild_composites();
    Tensor3 z(8, 8, 3);
    z.at(4, 3, 0) = 1.0;
    auto [t, r, n] = reconstruct_images(d, z, Tensor3(8, 8, 3), Tensor3(8, 8, 3));
    REQUIRE(max_abs_diff(t, z) == 0.0);
    REQUIRE(max_abs(r) == 0.0);
}

TEST_CASE("gradient_seeded places the pass-through tap in the first out-channel") {
    const DictionarySet d = init_dictionaries(5, 4, 5, 31, DictScheme::gradient_seeded);
    Tensor3 z(8, 8, 5);
    z.at(4, 3, 0) = 1.0;
    const Tensor3 t = conv_forward(d.d_t, z);
    REQUIRE(t.at(4, 3, 0) == 1.0);  // the tap channel reproduces the delta in plane 0
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (!(y == 4 && x == 3)) REQUIRE(t.at(y, x, 0) == 0.0);
}

TEST_CASE("reconstruct_images matches the naive oracle on random features") {
    Rng rng(233);
    const DictionarySet d = init_dictionaries(5, 7, 3, 37, DictScheme::random_unit);
    const Tensor3 z_t = oracle::random_tensor(9, 9, 5, rng);
    const Tensor3 z_r = oracle::random_tensor(9, 9, 5, rng);
    const Tensor3 z_n = oracle::random_tensor(9, 9, 5, rng);
    auto [t, r, n] = reconstruct_images(d, z_t, z_r, z_n);
    REQUIRE(max_abs_diff(t, oracle::conv_naive(d.d_t, z_t)) <= 1e-12);
    REQUIRE(max_abs_diff(r, oracle::conv_naive(d.d_r, z_r)) <= 1e-12);
    REQUIRE(max_abs_diff(n, oracle::conv_naive(d.d_n, z_n)) <= 1e-12);
}

TEST_CASE("reconstruction_residual basics") {
    Rng rng(239);
    const DictionarySet d = init_dictionaries(4, 5, 3, 41, DictScheme::random_unit);
    const Tensor3 i = random_image(8, 8, rng);
    const Tensor3 zero(8, 8, 4);

    const Tensor3 res = reconstruction_residual(i, d, zero, zero, zero);
    REQUIRE(max_abs_diff(res, i) == 0.0);

    // build I from known features; the residual must vanish
    const Tensor3 z_t = oracle::random_tensor(8, 8, 4, rng);
    const Tensor3 z_r = oracle::random_tensor(8, 8, 4, rng);
    const Tensor3 z_n = oracle::random_tensor(8, 8, 4, rng);
    auto [t, r, n] = reconstruct_images(d, z_t, z_r, z_n);
    Tensor3 synth = elementwise(elementwise(t, r, ElemOp::add), n, ElemOp::add);
    REQUIRE(max_abs(reconstruction_residual(synth, d, z_t, z_r, z_n)) <= 1e-12);

    // linearity: residual(I, 2z) = I - 2*(I - residual(I, z))
    const Tensor3 res1 = reconstruction_residual(i, d, z_t, z_r, z_n);
    const Tensor3 res2 = reconstruction_residual(i, d, scaled(z_t, 2.0), scaled(z_r, 2.0),
                                                 scaled(z_n, 2.0));
    double worst = 0.0;
    for (std::size_t k = 0; k < i.size(); ++k) {
        const double want = i.data[k] - 2.0 * (i.data[k] - res1.data[k]);
        worst = std::max(worst, std::fabs(res2.data[k] - want));
    }
    REQUIRE(worst <= 1e-12);
}
