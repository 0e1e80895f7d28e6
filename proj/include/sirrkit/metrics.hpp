#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "sirrkit/tensor.hpp"

namespace sirrkit {

/// PSNR is capped at this value when the images match exactly.
inline constexpr double kPsnrCap = 99.0;

struct PsnrResult {
    double value = 0.0;
    bool exact_match = false;
};

/// 10*log10(peak^2 / MSE). Exact matches report the 99.0 dB cap with a flag
/// instead of infinity.
inline PsnrResult psnr(const Tensor3& a, const Tensor3& b, double peak = 1.0) {
    check_shape(a, b, "psnr");
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be > 0");
    double sq = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        sq += d * d;
    }
    if (sq == 0.0) return {kPsnrCap, true};
    const double mse = sq / static_cast<double>(a.size());
    return {10.0 * std::log10(peak * peak / mse), false};
}

namespace detail {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

inline void ssim_window_weights(double* w) {
    double total = 0.0;
    const int half = kSsimWindow / 2;
    for (int y = 0; y < kSsimWindow; ++y)
        for (int x = 0; x < kSsimWindow; ++x) {
            const double dy = y - half, dx = x - half;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
            w[y * kSsimWindow + x] = v;
            total += v;
        }
    for (int k = 0; k < kSsimWindow * kSsimWindow; ++k) w[k] /= total;
}

}  // namespace detail

/// Mean SSIM with the 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, peak 1.0. Computed per channel over fully interior windows and
/// averaged across channels. Identical inputs give exactly 1.0.
inline double ssim(const Tensor3& a, const Tensor3& b) {
    check_shape(a, b, "ssim");
    if (a.height < detail::kSsimWindow || a.width < detail::kSsimWindow)
        throw std::invalid_argument("ssim: images smaller than the 11x11 window");
    double w[detail::kSsimWindow * detail::kSsimWindow];
    detail::ssim_window_weights(w);
    constexpr double c1 = detail::kSsimK1 * detail::kSsimK1;
    constexpr double c2 = detail::kSsimK2 * detail::kSsimK2;
    const int half = detail::kSsimWindow / 2;

    double channel_sum = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        double acc = 0.0;
        long count = 0;
        for (int y = half; y < a.height - half; ++y) {
            for (int x = half; x < a.width - half; ++x) {
                double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
                for (int wy = 0; wy < detail::kSsimWindow; ++wy)
                    for (int wx = 0; wx < detail::kSsimWindow; ++wx) {
                        const double wt = w[wy * detail::kSsimWindow + wx];
                        const double va = a.at(y + wy - half, x + wx - half, c);
                        const double vb = b.at(y + wy - half, x + wx - half, c);
                        mu_a += wt * va;
                        mu_b += wt * vb;
                        aa += wt * va * va;
                        bb += wt * vb * vb;
                        ab += wt * va * vb;
                    }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                acc += num / den;
                ++count;
            }
        }
        channel_sum += acc / static_cast<double>(count);
    }
    return channel_sum / static_cast<double>(a.channels);
}

/// Reference reflection when no ground truth exists: clamp(I - T, 0, 1).
inline Tensor3 reflection_reference(const Tensor3& i, const Tensor3& t) {
    check_shape(i, t, "reflection_reference");
    Tensor3 out(i.height, i.width, i.channels);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double v = i.data[k] - t.data[k];
        out.data[k] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

/// Flat metric report. Fields that a given run cannot compute stay empty and
/// serialize as null. ssim_mode records the channel handling convention.
struct MetricReport {
    std::optional<double> psnr_t, psnr_r;
    std::optional<double> ssim_t, ssim_r;
    std::optional<double> recon_l1;  // ||I - T_hat - R_hat - N_hat||_1 per pixel
    std::optional<double> aux_l1;    // ||z_A||_1 per element
    bool exact_match_t = false;
    bool exact_match_r = false;
    static constexpr const char* ssim_mode = "per_channel_average";
};

}  // namespace sirrkit
