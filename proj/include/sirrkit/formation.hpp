#pragma once

#include <cstdint>
#include <stdexcept>
#include <tuple>

#include "sirrkit/rng.hpp"
#include "sirrkit/tensor.hpp"

namespace sirrkit {

/// Convolutional dictionaries for the formation model. d_t, d_r, d_n map
/// n-channel feature maps to 3-channel images; w_filters maps images to m
/// common-feature channels. m_t and m_r are the exact composites of w_filters
/// with d_t and d_r, rebuilt whenever the constituents change.
struct DictionarySet {
    KernelBank d_t;        // n -> 3
    KernelBank d_r;        // n -> 3
    KernelBank d_n;        // n -> 3
    KernelBank w_filters;  // 3 -> m
    KernelBank m_t;        // n -> m, w_filters o d_t
    KernelBank m_r;        // n -> m, w_filters o d_r

    int feature_channels() const { return d_t.in_channels; }
    int common_channels() const { return w_filters.out_channels; }

    void rebuild_composites() {
        m_t = compose_kernels(w_filters, d_t);
        m_r = compose_kernels(w_filters, d_r);
    }
};

struct BlendParams {
    double gamma1 = 0.8;
    double gamma2 = 0.4;
    std::uint64_t seed = 0;

    void validate() const {
        if (gamma1 < 0.8 || gamma1 > 1.0)
            throw std::invalid_argument("BlendParams: gamma1 out of [0.8, 1.0]");
        if (gamma2 < 0.4 || gamma2 > 1.0)
            throw std::invalid_argument("BlendParams: gamma2 out of [0.4, 1.0]");
    }
};

/// Samples blend parameters uniformly from their valid ranges.
inline BlendParams sample_blend_params(std::uint64_t seed) {
    Rng rng(seed);
    BlendParams p;
    p.gamma1 = rng.uniform(0.8, 1.0);
    p.gamma2 = rng.uniform(0.4, 1.0);
    p.seed = seed;
    return p;
}

/// gamma1*t + gamma2*r - gamma1*gamma2*t*r pointwise, no clamping. Satisfies
/// the exact identity I = T + R + N with
/// N = (gamma1-1)*T + (gamma2-1)*R - gamma1*gamma2*T*R.
inline Tensor3 synthesize_blend_unclamped(const Tensor3& t, const Tensor3& r,
                                          const BlendParams& params) {
    check_shape(t, r, "synthesize_blend");
    if (t.channels != 3)
        throw std::invalid_argument("synthesize_blend: inputs must have 3 channels");
    params.validate();
    Tensor3 out(t.height, t.width, 3);
    const double g1 = params.gamma1, g2 = params.gamma2, g12 = params.gamma1 * params.gamma2;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = g1 * t.data[i] + g2 * r.data[i] - g12 * t.data[i] * r.data[i];
    return out;
}

inline Tensor3 clamp01(const Tensor3& a) {
    Tensor3 out = a;
    for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return out;
}

/// Synthetic blended image, clamped to [0, 1] for storage.
inline Tensor3 synthesize_blend(const Tensor3& t, const Tensor3& r, const BlendParams& params) {
    return clamp01(synthesize_blend_unclamped(t, r, params));
}

enum class DictScheme { random_unit, gradient_seeded };

namespace detail {

inline KernelBank random_unit_bank(int ks, int in_ch, int out_ch, Rng& rng) {
    KernelBank bank(ks, in_ch, out_ch);
    for (int o = 0; o < out_ch; ++o)
        for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx)
                for (int c = 0; c < in_ch; ++c) bank.at(o, c, ky, kx) = rng.normal();
    normalize_out_channels(bank);
    return bank;
}

// Replicates a w x w stencil across all in-channels of one out-channel slice,
// then normalizes that slice.
inline void seed_stencil(KernelBank& bank, int out, const double* stencil3x3) {
    const int ks = bank.kernel_size, half = (ks - 1) / 2;
    for (int c = 0; c < bank.in_channels; ++c)
        for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx) bank.at(out, c, ky, kx) = 0.0;
    for (int c = 0; c < bank.in_channels; ++c)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                bank.at(out, c, half + dy, half + dx) = stencil3x3[(dy + 1) * 3 + (dx + 1)];
    double n = out_channel_norm(bank, out);
    for (int c = 0; c < bank.in_channels; ++c)
        for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx) bank.at(out, c, ky, kx) /= n;
}

inline void seed_identity_tap(KernelBank& bank, int out, int in) {
    const int ks = bank.kernel_size, half = (ks - 1) / 2;
    for (int c = 0; c < bank.in_channels; ++c)
        for (int ky = 0; ky < ks; ++ky)
            for (int kx = 0; kx < ks; ++kx) bank.at(out, c, ky, kx) = 0.0;
    bank.at(out, in, half, half) = 1.0;
}

}  // namespace detail

/// Builds the full dictionary set. random_unit draws i.i.d. Gaussian kernels
/// normalized per out-channel. gradient_seeded additionally places
/// horizontal-difference, vertical-difference and Laplacian stencils in the
/// first out-channels of w_filters and a center-tap identity filter (feature
/// channel 0 passes through) in the first out-channel of each d_i.
/// Deterministic in seed.
inline DictionarySet init_dictionaries(int n, int m, int w, std::uint64_t seed,
                                       DictScheme scheme) {
    if (n < 1 || m < 1) throw std::invalid_argument("init_dictionaries: n, m must be >= 1");
    if (w < 1 || w % 2 == 0)
        throw std::invalid_argument("init_dictionaries: kernel size must be odd");
    if (scheme == DictScheme::gradient_seeded && w < 3)
        throw std::invalid_argument("init_dictionaries: gradient_seeded needs kernel size >= 3");

    Rng rng(seed);
    DictionarySet d;
    d.d_t = detail::random_unit_bank(w, n, 3, rng);
    d.d_r = detail::random_unit_bank(w, n, 3, rng);
    d.d_n = detail::random_unit_bank(w, n, 3, rng);
    d.w_filters = detail::random_unit_bank(w, 3, m, rng);

    if (scheme == DictScheme::gradient_seeded) {
        static const double dx[9] = {0, 0, 0, -1, 0, 1, 0, 0, 0};
        static const double dy[9] = {0, -1, 0, 0, 0, 0, 0, 1, 0};
        static const double lap[9] = {0, 1, 0, 1, -4, 1, 0, 1, 0};
        if (m >= 1) detail::seed_stencil(d.w_filters, 0, dx);
        if (m >= 2) detail::seed_stencil(d.w_filters, 1, dy);
        if (m >= 3) detail::seed_stencil(d.w_filters, 2, lap);
        for (KernelBank* bank : {&d.d_t, &d.d_r, &d.d_n})
            detail::seed_identity_tap(*bank, 0, 0);
    }
    d.rebuild_composites();
    return d;
}

/// IRM: maps final features back to image domain through the dictionaries.
inline std::tuple<Tensor3, Tensor3, Tensor3> reconstruct_images(const DictionarySet& dicts,
                                                                const Tensor3& z_t,
                                                                const Tensor3& z_r,
                                                                const Tensor3& z_n) {
    return {conv_forward(dicts.d_t, z_t), conv_forward(dicts.d_r, z_r),
            conv_forward(dicts.d_n, z_n)};
}

/// I minus the sum of the three dictionary reconstructions.
inline Tensor3 reconstruction_residual(const Tensor3& i, const DictionarySet& dicts,
                                       const Tensor3& z_t, const Tensor3& z_r,
                                       const Tensor3& z_n) {
    Tensor3 acc = conv_forward(dicts.d_t, z_t);
    const Tensor3 rr = conv_forward(dicts.d_r, z_r);
    const Tensor3 rn = conv_forward(dicts.d_n, z_n);
    check_shape(i, acc, "reconstruction_residual");
    Tensor3 out(i.height, i.width, i.channels);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = i.data[k] - acc.data[k] - rr.data[k] - rn.data[k];
    return out;
}

}  // namespace sirrkit
