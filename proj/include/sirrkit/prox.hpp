#pragma once

#include <cmath>
#include <stdexcept>

#include "sirrkit/tensor.hpp"

namespace sirrkit {

enum class ProxKind { soft_threshold, nonneg_soft_threshold, identity };

/// A separable proximal operator with a scalar threshold. The threshold is
/// the product of step size and regularization weight for the prior it
/// stands in for. identity requires threshold == 0.
struct ProxSpec {
    ProxKind kind = ProxKind::soft_threshold;
    double threshold = 0.0;

    ProxSpec() = default;
    ProxSpec(ProxKind k, double t) : kind(k), threshold(t) {
        if (t < 0.0) throw std::invalid_argument("ProxSpec: threshold must be >= 0");
        if (k == ProxKind::identity && t != 0.0)
            throw std::invalid_argument("ProxSpec: identity requires threshold 0");
    }
};

inline double soft_threshold(double v, double theta) {
    if (v > theta) return v - theta;
    if (v < -theta) return v + theta;
    return 0.0;
}

/// Applies the prox elementwise. soft_threshold is the exact minimizer of
/// (1/2)(x - v)^2 + theta*|x|; the nonneg variant adds an x >= 0 constraint.
inline Tensor3 prox_apply(const ProxSpec& spec, const Tensor3& v) {
    Tensor3 out = v;
    switch (spec.kind) {
        case ProxKind::identity:
            break;
        case ProxKind::soft_threshold:
            for (double& x : out.data) x = soft_threshold(x, spec.threshold);
            break;
        case ProxKind::nonneg_soft_threshold:
            for (double& x : out.data) x = std::max(x - spec.threshold, 0.0);
            break;
    }
    return out;
}

enum class PriorKind { l1 };

/// Prior value p(v); only the L1 norm is provided.
inline double prior_value(PriorKind kind, const Tensor3& v) {
    switch (kind) {
        case PriorKind::l1:
            return sum_abs(v);
    }
    return 0.0;
}

}  // namespace sirrkit
