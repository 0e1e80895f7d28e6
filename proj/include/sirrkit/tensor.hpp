#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sirrkit {

/// Dense H x W x C real tensor, double precision, row-major (y, x, c).
/// Values are immutable by convention once an operation returns them;
/// all free functions below are pure and safe to call concurrently.
struct Tensor3 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor3() = default;

    Tensor3(int h, int w, int c, double fill = 0.0) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("Tensor3: dimensions must be positive");
        height = h;
        width = w;
        channels = c;
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    const double& at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Tensor3& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Bank of kernel_size x kernel_size x in_channels x out_channels filters.
/// kernel_size must be odd so "same" zero padding is symmetric. Weights are
/// indexed (out, in, ky, kx); storage order is (out, ky, kx, in) so the
/// innermost convolution loop runs over contiguous memory.
struct KernelBank {
    int kernel_size = 0;
    int in_channels = 0;
    int out_channels = 0;
    bool unit_norm = false;
    std::vector<double> weights;

    KernelBank() = default;

    KernelBank(int ks, int in_ch, int out_ch, double fill = 0.0) {
        if (ks <= 0 || ks % 2 == 0)
            throw std::invalid_argument("KernelBank: kernel_size must be odd and positive");
        if (in_ch <= 0 || out_ch <= 0)
            throw std::invalid_argument("KernelBank: channel counts must be positive");
        kernel_size = ks;
        in_channels = in_ch;
        out_channels = out_ch;
        weights.assign(static_cast<std::size_t>(ks) * ks * in_ch * out_ch, fill);
    }

    double& at(int out, int in, int ky, int kx) {
        return weights[((static_cast<std::size_t>(out) * kernel_size + ky) * kernel_size + kx) *
                           in_channels +
                       in];
    }
    double at(int out, int in, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(out) * kernel_size + ky) * kernel_size + kx) *
                           in_channels +
                       in];
    }
};

inline void check_shape(const Tensor3& a, const Tensor3& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.height) + "x" + std::to_string(b.width) +
                                    "x" + std::to_string(b.channels) + ")");
}

/// Zero-padded "same" correlation, stride 1. out(y,x,o) = sum over (c,ky,kx)
/// of weight(o,c,ky,kx) * input(y+ky-h, x+kx-h, c) with h = (kernel_size-1)/2.
/// Linear in both input and weights.
inline Tensor3 conv_forward(const KernelBank& kernels, const Tensor3& input) {
    if (input.channels != kernels.in_channels)
        throw std::invalid_argument("conv_forward: input channels " +
                                    std::to_string(input.channels) + " != kernel in_channels " +
                                    std::to_string(kernels.in_channels));
    const int h = input.height, w = input.width;
    const int cin = kernels.in_channels, cout = kernels.out_channels;
    const int ks = kernels.kernel_size, half = (ks - 1) / 2;
    Tensor3 out(h, w, cout);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* orow = &out.at(y, x, 0);
            for (int o = 0; o < cout; ++o) {
                double acc = 0.0;
                for (int ky = 0; ky < ks; ++ky) {
                    const int yy = y + ky - half;
                    if (yy < 0 || yy >= h) continue;
                    for (int kx = 0; kx < ks; ++kx) {
                        const int xx = x + kx - half;
                        if (xx < 0 || xx >= w) continue;
                        const double* wp =
                            &kernels.weights[((static_cast<std::size_t>(o) * ks + ky) * ks + kx) *
                                             cin];
                        const double* ip = &input.at(yy, xx, 0);
                        for (int c = 0; c < cin; ++c) acc += wp[c] * ip[c];
                    }
                }
                orow[o] = acc;
            }
        }
    }
    return out;
}

/// Exact adjoint of conv_forward under the Frobenius inner product:
/// <conv_forward(K,z), y> == <z, conv_transpose(K,y)> for all z, y.
/// out(y,x,c) = sum over (o,ky,kx) of weight(o,c,ky,kx) * input(y-ky+h, x-kx+h, o).
inline Tensor3 conv_transpose(const KernelBank& kernels, const Tensor3& input) {
    if (input.channels != kernels.out_channels)
        throw std::invalid_argument("conv_transpose: input channels " +
                                    std::to_string(input.channels) + " != kernel out_channels " +
                                    std::to_string(kernels.out_channels));
    const int h = input.height, w = input.width;
    const int cin = kernels.in_channels, cout = kernels.out_channels;
    const int ks = kernels.kernel_size, half = (ks - 1) / 2;
    Tensor3 out(h, w, cin);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double* orow = &out.at(y, x, 0);
            for (int ky = 0; ky < ks; ++ky) {
                const int yy = y - ky + half;
                if (yy < 0 || yy >= h) continue;
                for (int kx = 0; kx < ks; ++kx) {
                    const int xx = x - kx + half;
                    if (xx < 0 || xx >= w) continue;
                    const double* ip = &input.at(yy, xx, 0);
                    for (int o = 0; o < cout; ++o) {
                        const double wv = ip[o];
                        const double* wp =
                            &kernels.weights[((static_cast<std::size_t>(o) * ks + ky) * ks + kx) *
                                             cin];
                        for (int c = 0; c < cin; ++c) orow[c] += wp[c] * wv;
                    }
                }
            }
        }
    }
    return out;
}

/// Composite bank equivalent to applying inner then outer. The result has
/// kernel size (outer + inner - 1); conv_forward with it matches the two
/// sequential convolutions except on a border of width (outer + inner - 2)/2,
/// where the sequential form sees the intermediate's zero padding.
inline KernelBank compose_kernels(const KernelBank& outer, const KernelBank& inner) {
    if (outer.in_channels != inner.out_channels)
        throw std::invalid_argument("compose_kernels: outer in_channels " +
                                    std::to_string(outer.in_channels) +
                                    " != inner out_channels " +
                                    std::to_string(inner.out_channels));
    const int ks_o = outer.kernel_size, ks_i = inner.kernel_size;
    const int half_o = (ks_o - 1) / 2, half_i = (ks_i - 1) / 2;
    const int ks = ks_o + ks_i - 1, half = half_o + half_i;
    KernelBank out(ks, inner.in_channels, outer.out_channels);
    for (int o = 0; o < out.out_channels; ++o) {
        for (int c = 0; c < out.in_channels; ++c) {
            for (int ry = 0; ry < ks; ++ry) {
                const int roy = ry - half;
                for (int rx = 0; rx < ks; ++rx) {
                    const int rox = rx - half;
                    double acc = 0.0;
                    // r = q + p over kernel offsets: q from outer, p from inner
                    for (int j = 0; j < inner.out_channels; ++j) {
                        for (int py = 0; py < ks_i; ++py) {
                            const int qy = roy - (py - half_i) + half_o;
                            if (qy < 0 || qy >= ks_o) continue;
                            for (int px = 0; px < ks_i; ++px) {
                                const int qx = rox - (px - half_i) + half_o;
                                if (qx < 0 || qx >= ks_o) continue;
                                acc += outer.at(o, j, qy, qx) * inner.at(j, c, py, px);
                            }
                        }
                    }
                    out.at(o, c, ry, rx) = acc;
                }
            }
        }
    }
    return out;
}

/// Corner-aligned bilinear resampling. Constant images map to the same
/// constant; the identity resize returns a bitwise copy.
inline Tensor3 resize_bilinear(const Tensor3& input, int new_height, int new_width) {
    if (new_height < 1 || new_width < 1)
        throw std::invalid_argument("resize_bilinear: target dimensions must be >= 1");
    if (new_height == input.height && new_width == input.width) return input;
    Tensor3 out(new_height, new_width, input.channels);
    const double sy = new_height > 1
                          ? static_cast<double>(input.height - 1) / (new_height - 1)
                          : 0.0;
    const double sx = new_width > 1
                         ? static_cast<double>(input.width - 1) / (new_width - 1)
                         : 0.0;
    for (int y = 0; y < new_height; ++y) {
        const double fy = y * sy;
        int y0 = static_cast<int>(fy);
        if (y0 > input.height - 1) y0 = input.height - 1;
        const int y1 = y0 + 1 < input.height ? y0 + 1 : y0;
        const double wy = fy - y0;
        for (int x = 0; x < new_width; ++x) {
            const double fx = x * sx;
            int x0 = static_cast<int>(fx);
            if (x0 > input.width - 1) x0 = input.width - 1;
            const int x1 = x0 + 1 < input.width ? x0 + 1 : x0;
            const double wx = fx - x0;
            for (int c = 0; c < input.channels; ++c) {
                const double top = (1.0 - wx) * input.at(y0, x0, c) + wx * input.at(y0, x1, c);
                const double bot = (1.0 - wx) * input.at(y1, x0, c) + wx * input.at(y1, x1, c);
                out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

enum class ElemOp { mul, add, sub };

inline Tensor3 elementwise(const Tensor3& a, const Tensor3& b, ElemOp op) {
    check_shape(a, b, "elementwise");
    Tensor3 out(a.height, a.width, a.channels);
    const std::size_t n = a.size();
    switch (op) {
        case ElemOp::mul:
            for (std::size_t i = 0; i < n; ++i) out.data[i] = a.data[i] * b.data[i];
            break;
        case ElemOp::add:
            for (std::size_t i = 0; i < n; ++i) out.data[i] = a.data[i] + b.data[i];
            break;
        case ElemOp::sub:
            for (std::size_t i = 0; i < n; ++i) out.data[i] = a.data[i] - b.data[i];
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// small dense helpers shared by the solver and the metrics
// ---------------------------------------------------------------------------

inline Tensor3 scaled(const Tensor3& a, double s) {
    Tensor3 out = a;
    for (double& v : out.data) v *= s;
    return out;
}

inline double dot(const Tensor3& a, const Tensor3& b) {
    check_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
    return acc;
}

inline double sum_abs(const Tensor3& a) {
    double acc = 0.0;
    for (double v : a.data) acc += std::fabs(v);
    return acc;
}

inline double sum_sq(const Tensor3& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return acc;
}

inline double frob_norm(const Tensor3& a) { return std::sqrt(sum_sq(a)); }

inline double max_abs(const Tensor3& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::fabs(v));
    return m;
}

inline double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    check_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

inline bool all_finite(const Tensor3& a) {
    for (double v : a.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline double kernel_frob_norm(const KernelBank& k) {
    double acc = 0.0;
    for (double v : k.weights) acc += v * v;
    return std::sqrt(acc);
}

/// Frobenius norm of one out-channel slice (all in-channels and taps).
inline double out_channel_norm(const KernelBank& k, int out) {
    double acc = 0.0;
    for (int c = 0; c < k.in_channels; ++c)
        for (int ky = 0; ky < k.kernel_size; ++ky)
            for (int kx = 0; kx < k.kernel_size; ++kx) {
                const double v = k.at(out, c, ky, kx);
                acc += v * v;
            }
    return std::sqrt(acc);
}

/// Rescales every out-channel slice to unit Frobenius norm and sets the flag.
/// All-zero slices are rejected, they cannot be normalized.
inline void normalize_out_channels(KernelBank& k) {
    for (int o = 0; o < k.out_channels; ++o) {
        const double n = out_channel_norm(k, o);
        if (n == 0.0)
            throw std::invalid_argument("normalize_out_channels: zero out-channel slice");
        for (int c = 0; c < k.in_channels; ++c)
            for (int ky = 0; ky < k.kernel_size; ++ky)
                for (int kx = 0; kx < k.kernel_size; ++kx) k.at(o, c, ky, kx) /= n;
    }
    k.unit_norm = true;
}

}  // namespace sirrkit
