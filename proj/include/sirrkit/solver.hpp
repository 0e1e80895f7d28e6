#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sirrkit/formation.hpp"
#include "sirrkit/prox.hpp"
#include "sirrkit/tensor.hpp"

namespace sirrkit {

/// Weights, step sizes and control knobs for the block solver.
/// tau may be zero, which decouples the four blocks into plain CSC solvers.
struct SolverConfig {
    double lambda_t = 0.01;
    double lambda_r = 0.01;
    double lambda_n = 0.01;
    double kappa = 0.01;
    double tau = 0.1;
    double eta_t = 0.1;
    double eta_r = 0.1;
    double eta_n = 0.1;
    double eta_a = 0.1;
    int stages = 10;  // K per scale
    int scales = 1;   // S
    double rel_tol = 1e-6;
    bool backtrack = true;
    double backtrack_beta = 0.5;
    int max_backtrack = 20;
    double init_beta = 0.0;  // 0 selects 1/(w*w*3) from the dictionary kernel size

    void validate() const {
        if (lambda_t < 0 || lambda_r < 0 || lambda_n < 0 || kappa < 0)
            throw std::invalid_argument("SolverConfig: weights must be >= 0");
        if (tau < 0) throw std::invalid_argument("SolverConfig: tau must be >= 0");
        if (eta_t <= 0 || eta_r <= 0 || eta_n <= 0 || eta_a <= 0)
            throw std::invalid_argument("SolverConfig: step sizes must be > 0");
        if (stages < 0) throw std::invalid_argument("SolverConfig: stages must be >= 0");
        if (scales < 1) throw std::invalid_argument("SolverConfig: scales must be >= 1");
        if (rel_tol <= 0) throw std::invalid_argument("SolverConfig: rel_tol must be > 0");
        if (backtrack_beta <= 0 || backtrack_beta >= 1)
            throw std::invalid_argument("SolverConfig: backtrack_beta must be in (0,1)");
        if (max_backtrack < 1)
            throw std::invalid_argument("SolverConfig: max_backtrack must be >= 1");
        if (init_beta < 0) throw std::invalid_argument("SolverConfig: init_beta must be >= 0");
    }
};

/// Which proximal operator stands in for each prior.
struct ProxSet {
    ProxKind t = ProxKind::soft_threshold;
    ProxKind r = ProxKind::soft_threshold;
    ProxKind n = ProxKind::soft_threshold;
    ProxKind a = ProxKind::soft_threshold;
};

struct SolverState {
    Tensor3 z_t, z_r, z_n;  // H x W x n
    Tensor3 z_a;            // H x W x m
    double eta_t = 0.0, eta_r = 0.0, eta_n = 0.0, eta_a = 0.0;  // accepted last stage
    std::vector<double> objective_trace;
    int stage_index = 0;
};

struct ObjectiveTerms {
    double recon = 0.0;      // (1/2)||I - sum D_i (x) z_i||^2
    double equality = 0.0;   // (tau/2)||z_A - (M_T z_T) . (M_R z_R)||^2
    double sparse = 0.0;     // sum lambda_i ||z_i||_1
    double exclusion = 0.0;  // kappa ||z_A||_1
    double total() const { return recon + equality + sparse + exclusion; }
};

struct StageRecord {
    int scale = 1;  // 1 = coarsest
    int stage = 1;
    double objective = 0.0;
    double recon_term = 0.0;
    double equality_term = 0.0;
    double sparse_term = 0.0;
    double exclusion_term = 0.0;
    double eta_t = 0.0, eta_r = 0.0, eta_n = 0.0, eta_a = 0.0;
};

using TraceCallback = std::function<void(const StageRecord&)>;

/// Thrown when a block update produces non-finite values.
class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(std::string block_name, int stage)
        : std::runtime_error("numerical divergence in block " + block_name + " at stage " +
                             std::to_string(stage)),
          block(std::move(block_name)) {}
    std::string block;
};

namespace detail {

// The five convolutions the objective is built from. Kept alongside the
// state during a solve so backtracking re-evaluations only redo the one
// convolution pair belonging to the block being updated.
struct BlockCaches {
    Tensor3 rec_t, rec_r, rec_n;  // D_i (x) z_i
    Tensor3 mt_zt, mr_zr;         // M_i (x) z_i
};

inline BlockCaches make_caches(const DictionarySet& dicts, const SolverState& state) {
    return {conv_forward(dicts.d_t, state.z_t), conv_forward(dicts.d_r, state.z_r),
            conv_forward(dicts.d_n, state.z_n), conv_forward(dicts.m_t, state.z_t),
            conv_forward(dicts.m_r, state.z_r)};
}

inline Tensor3 residual_from(const Tensor3& i, const BlockCaches& c) {
    check_shape(i, c.rec_t, "objective");
    Tensor3 out(i.height, i.width, i.channels);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = i.data[k] - c.rec_t.data[k] - c.rec_r.data[k] - c.rec_n.data[k];
    return out;
}

// References to the ten tensors the objective depends on; lets backtracking
// evaluate candidate objectives without copying any cached tensor.
struct ObjectiveParts {
    const Tensor3 *rec_t, *rec_r, *rec_n, *mt_zt, *mr_zr;
    const Tensor3 *z_t, *z_r, *z_n, *z_a;
};

inline ObjectiveTerms objective_terms_at(const Tensor3& i, const ObjectiveParts& p,
                                         const SolverConfig& cfg) {
    ObjectiveTerms t;
    check_shape(i, *p.rec_t, "objective");
    double rsq = 0.0;
    for (std::size_t k = 0; k < i.size(); ++k) {
        const double r =
            i.data[k] - p.rec_t->data[k] - p.rec_r->data[k] - p.rec_n->data[k];
        rsq += r * r;
    }
    t.recon = 0.5 * rsq;
    check_shape(*p.z_a, *p.mt_zt, "objective");
    double eq = 0.0;
    for (std::size_t k = 0; k < p.z_a->size(); ++k) {
        const double d = p.z_a->data[k] - p.mt_zt->data[k] * p.mr_zr->data[k];
        eq += d * d;
    }
    t.equality = 0.5 * cfg.tau * eq;
    t.sparse = cfg.lambda_t * sum_abs(*p.z_t) + cfg.lambda_r * sum_abs(*p.z_r) +
               cfg.lambda_n * sum_abs(*p.z_n);
    t.exclusion = cfg.kappa * sum_abs(*p.z_a);
    return t;
}

inline ObjectiveTerms objective_terms(const Tensor3& i, const BlockCaches& c,
                                      const SolverState& state, const SolverConfig& cfg) {
    ObjectiveParts p{&c.rec_t, &c.rec_r, &c.rec_n, &c.mt_zt, &c.mr_zr,
                     &state.z_t, &state.z_r, &state.z_n, &state.z_a};
    return objective_terms_at(i, p, cfg);
}

// z_A - (M_T z_T).(M_R z_R)
inline Tensor3 equality_gap(const SolverState& state, const BlockCaches& c) {
    Tensor3 out(state.z_a.height, state.z_a.width, state.z_a.channels);
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = state.z_a.data[k] - c.mt_zt.data[k] * c.mr_zr.data[k];
    return out;
}

inline Tensor3 grad_zt_cached(const Tensor3& i, const DictionarySet& dicts,
                              const BlockCaches& c, const SolverState& state,
                              const SolverConfig& cfg) {
    Tensor3 g = conv_transpose(dicts.d_t, residual_from(i, c));
    for (double& v : g.data) v = -v;
    if (cfg.tau != 0.0) {
        Tensor3 gap = equality_gap(state, c);
        for (std::size_t k = 0; k < gap.size(); ++k) gap.data[k] *= c.mr_zr.data[k];
        const Tensor3 gq = conv_transpose(dicts.m_t, gap);
        for (std::size_t k = 0; k < g.size(); ++k) g.data[k] -= cfg.tau * gq.data[k];
    }
    return g;
}

inline Tensor3 grad_zr_cached(const Tensor3& i, const DictionarySet& dicts,
                              const BlockCaches& c, const SolverState& state,
                              const SolverConfig& cfg) {
    Tensor3 g = conv_transpose(dicts.d_r, residual_from(i, c));
    for (double& v : g.data) v = -v;
    if (cfg.tau != 0.0) {
        Tensor3 gap = equality_gap(state, c);
        for (std::size_t k = 0; k < gap.size(); ++k) gap.data[k] *= c.mt_zt.data[k];
        const Tensor3 gq = conv_transpose(dicts.m_r, gap);
        for (std::size_t k = 0; k < g.size(); ++k) g.data[k] -= cfg.tau * gq.data[k];
    }
    return g;
}

inline Tensor3 grad_zn_cached(const Tensor3& i, const DictionarySet& dicts,
                              const BlockCaches& c) {
    Tensor3 g = conv_transpose(dicts.d_n, residual_from(i, c));
    for (double& v : g.data) v = -v;
    return g;
}

inline Tensor3 grad_za_cached(const SolverState& state, const BlockCaches& c) {
    return equality_gap(state, c);
}

}  // namespace detail

/// Value of the full objective: reconstruction + auxiliary equality +
/// L1 sparsity + exclusion penalty.
inline double objective(const Tensor3& i, const DictionarySet& dicts, const SolverState& state,
                        const SolverConfig& cfg) {
    return detail::objective_terms(i, detail::make_caches(dicts, state), state, cfg).total();
}

inline ObjectiveTerms objective_breakdown(const Tensor3& i, const DictionarySet& dicts,
                                          const SolverState& state, const SolverConfig& cfg) {
    return detail::objective_terms(i, detail::make_caches(dicts, state), state, cfg);
}

/// Gradient of the smooth part of the z_T sub-problem:
/// -D_T^T (I - sum D_i z_i) - tau * M_T^T ((M_R z_R) . (z_A - P)),
/// P = (M_T z_T) . (M_R z_R), all evaluated at the given state.
inline Tensor3 grad_zt(const Tensor3& i, const DictionarySet& dicts, const SolverState& state,
                       const SolverConfig& cfg) {
    return detail::grad_zt_cached(i, dicts, detail::make_caches(dicts, state), state, cfg);
}

/// Same with the roles of T and R exchanged. Stage ordering feeds this the
/// already-updated z_T (Gauss-Seidel).
inline Tensor3 grad_zr(const Tensor3& i, const DictionarySet& dicts, const SolverState& state,
                       const SolverConfig& cfg) {
    return detail::grad_zr_cached(i, dicts, detail::make_caches(dicts, state), state, cfg);
}

/// -D_N^T (I - sum D_i z_i); the exclusion terms do not touch z_N.
inline Tensor3 grad_zn(const Tensor3& i, const DictionarySet& dicts, const SolverState& state,
                       const SolverConfig& cfg) {
    (void)cfg;
    return detail::grad_zn_cached(i, dicts, detail::make_caches(dicts, state));
}

/// z_A - (M_T z_T) . (M_R z_R), the equality-term gradient with unit
/// coefficient; the tau factor is absorbed into the step and threshold.
inline Tensor3 grad_za(const DictionarySet& dicts, const SolverState& state,
                       const SolverConfig& cfg) {
    (void)cfg;
    return detail::grad_za_cached(state, detail::make_caches(dicts, state));
}

namespace detail {

enum class Block { t, r, n, a };

inline const char* block_name(Block b) {
    switch (b) {
        case Block::t: return "z_T";
        case Block::r: return "z_R";
        case Block::n: return "z_N";
        case Block::a: return "z_A";
    }
    return "?";
}

// One prox-gradient update of a single block with optional backtracking.
// Accepts a candidate when the full objective does not increase by more than
// 1e-12; on acceptance the state, the caches and the running objective are
// updated in place. Returns the accepted step size (0 when every trial failed
// and the block was left unchanged).
//
// Thresholds: eta*lambda for the sparse blocks. The auxiliary block pairs the
// unit-coefficient gradient z_A - P with threshold eta*kappa/tau, which is a
// prox-gradient step of effective size eta/tau on its tau-weighted
// sub-problem (and reaches that sub-problem's closed-form minimizer at
// eta = tau).
inline double update_block(Block block, const Tensor3& i, const DictionarySet& dicts,
                           SolverState& state, const SolverConfig& cfg, const ProxSet& proxes,
                           BlockCaches& caches, ObjectiveTerms& current) {
    Tensor3* z = nullptr;
    double eta = 0.0, weight = 0.0;
    ProxKind kind = ProxKind::identity;
    switch (block) {
        case Block::t: z = &state.z_t; eta = cfg.eta_t; weight = cfg.lambda_t; kind = proxes.t; break;
        case Block::r: z = &state.z_r; eta = cfg.eta_r; weight = cfg.lambda_r; kind = proxes.r; break;
        case Block::n: z = &state.z_n; eta = cfg.eta_n; weight = cfg.lambda_n; kind = proxes.n; break;
        case Block::a:
            z = &state.z_a;
            eta = cfg.eta_a;
            weight = cfg.tau > 0.0 ? cfg.kappa / cfg.tau : 0.0;
            kind = proxes.a;
            break;
    }

    Tensor3 grad;
    switch (block) {
        case Block::t: grad = grad_zt_cached(i, dicts, caches, state, cfg); break;
        case Block::r: grad = grad_zr_cached(i, dicts, caches, state, cfg); break;
        case Block::n: grad = grad_zn_cached(i, dicts, caches); break;
        case Block::a: grad = grad_za_cached(state, caches); break;
    }

    const int trials = cfg.backtrack ? cfg.max_backtrack : 1;
    for (int attempt = 0; attempt < trials; ++attempt) {
        Tensor3 cand(z->height, z->width, z->channels);
        for (std::size_t k = 0; k < cand.size(); ++k)
            cand.data[k] = z->data[k] - eta * grad.data[k];
        cand = prox_apply(ProxSpec(kind, eta * weight), cand);

        if (!all_finite(cand)) {
            if (!cfg.backtrack) throw DivergenceError(block_name(block), state.stage_index);
            eta *= cfg.backtrack_beta;
            continue;
        }

        // refresh only the convolutions this block feeds
        Tensor3 cand_rec, cand_m;
        switch (block) {
            case Block::t:
                cand_rec = conv_forward(dicts.d_t, cand);
                cand_m = conv_forward(dicts.m_t, cand);
                break;
            case Block::r:
                cand_rec = conv_forward(dicts.d_r, cand);
                cand_m = conv_forward(dicts.m_r, cand);
                break;
            case Block::n:
                cand_rec = conv_forward(dicts.d_n, cand);
                break;
            case Block::a:
                break;
        }

        ObjectiveParts p{&caches.rec_t, &caches.rec_r, &caches.rec_n,
                         &caches.mt_zt, &caches.mr_zr,
                         &state.z_t,    &state.z_r,    &state.z_n,    &state.z_a};
        switch (block) {
            case Block::t: p.rec_t = &cand_rec; p.mt_zt = &cand_m; p.z_t = &cand; break;
            case Block::r: p.rec_r = &cand_rec; p.mr_zr = &cand_m; p.z_r = &cand; break;
            case Block::n: p.rec_n = &cand_rec; p.z_n = &cand; break;
            case Block::a: p.z_a = &cand; break;
        }
        const ObjectiveTerms trial_terms = objective_terms_at(i, p, cfg);

        const bool accept =
            !cfg.backtrack || trial_terms.total() <= current.total() + 1e-12;
        if (accept) {
            if (!cfg.backtrack && !std::isfinite(trial_terms.total()))
                throw DivergenceError(block_name(block), state.stage_index);
            *z = std::move(cand);
            switch (block) {
                case Block::t:
                    caches.rec_t = std::move(cand_rec);
                    caches.mt_zt = std::move(cand_m);
                    break;
                case Block::r:
                    caches.rec_r = std::move(cand_rec);
                    caches.mr_zr = std::move(cand_m);
                    break;
                case Block::n:
                    caches.rec_n = std::move(cand_rec);
                    break;
                case Block::a:
                    break;
            }
            current = trial_terms;
            return eta;
        }
        eta *= cfg.backtrack_beta;
    }
    return 0.0;  // no step satisfied the decrease test; block kept unchanged
}

inline ObjectiveTerms safu_stage_impl(const Tensor3& i, const DictionarySet& dicts,
                                      SolverState& state, const SolverConfig& cfg,
                                      const ProxSet& proxes, BlockCaches& caches) {
    ObjectiveTerms current = objective_terms(i, caches, state, cfg);
    state.eta_t = update_block(Block::t, i, dicts, state, cfg, proxes, caches, current);
    state.eta_r = update_block(Block::r, i, dicts, state, cfg, proxes, caches, current);
    state.eta_n = update_block(Block::n, i, dicts, state, cfg, proxes, caches, current);
    state.eta_a = update_block(Block::a, i, dicts, state, cfg, proxes, caches, current);
    state.stage_index += 1;
    state.objective_trace.push_back(current.total());
    return current;
}

}  // namespace detail

/// One full SAFU stage: prox-gradient updates of z_T, z_R, z_N, then z_A in
/// Gauss-Seidel order, each seeing the freshest values of the others. With
/// backtracking each block halves its step until the full objective does not
/// increase.
inline SolverState safu_stage(const Tensor3& i, const DictionarySet& dicts,
                              const SolverState& state, const SolverConfig& cfg,
                              const ProxSet& proxes = ProxSet{}) {
    cfg.validate();
    SolverState next = state;
    detail::BlockCaches caches = detail::make_caches(dicts, next);
    detail::safu_stage_impl(i, dicts, next, cfg, proxes, caches);
    return next;
}

/// Warm-start state for one pyramid level: z_T from the analysis transpose of
/// the image, z_R = z_N = 0, z_A at the current product (zero here).
inline SolverState init_state(const Tensor3& i, const DictionarySet& dicts,
                              const SolverConfig& cfg) {
    const int n = dicts.feature_channels();
    const double beta = cfg.init_beta > 0.0
                            ? cfg.init_beta
                            : 1.0 / (static_cast<double>(dicts.d_t.kernel_size) *
                                     dicts.d_t.kernel_size * 3.0);
    SolverState s;
    s.z_t = scaled(conv_transpose(dicts.d_t, i), beta);
    s.z_r = Tensor3(i.height, i.width, n);
    s.z_n = Tensor3(i.height, i.width, n);
    const Tensor3 mt = conv_forward(dicts.m_t, s.z_t);
    const Tensor3 mr = conv_forward(dicts.m_r, s.z_r);
    s.z_a = elementwise(mt, mr, ElemOp::mul);
    s.eta_t = cfg.eta_t;
    s.eta_r = cfg.eta_r;
    s.eta_n = cfg.eta_n;
    s.eta_a = cfg.eta_a;
    return s;
}

struct SeparationResult {
    Tensor3 t_hat, r_hat, n_hat;
    Tensor3 residual;  // I - T_hat - R_hat - N_hat
    SolverState state;
    std::vector<StageRecord> trace;
    double recon_l1 = 0.0;  // ||residual||_1 per pixel
    double aux_l1 = 0.0;    // ||z_A||_1 per element
};

/// Coarse-to-fine solve: an S-level bilinear image pyramid, K SAFU stages per
/// level (halting early when the relative objective change drops below
/// rel_tol), features upsampled bilinearly between levels.
inline SeparationResult solve_multiscale(const Tensor3& i, const DictionarySet& dicts,
                                         const SolverConfig& cfg,
                                         const ProxSet& proxes = ProxSet{},
                                         const TraceCallback& on_stage = {}) {
    cfg.validate();
    if (i.channels != 3)
        throw std::invalid_argument("solve_multiscale: input must have 3 channels");
    const int min_dim = 1 << (cfg.scales - 1);
    if (i.height < min_dim || i.width < min_dim)
        throw std::invalid_argument("solve_multiscale: image too small for " +
                                    std::to_string(cfg.scales) + " scales");

    std::vector<Tensor3> pyramid;
    pyramid.reserve(cfg.scales);
    pyramid.push_back(i);
    for (int s = 1; s < cfg.scales; ++s) {
        const Tensor3& prev = pyramid.back();
        pyramid.push_back(
            resize_bilinear(prev, (prev.height + 1) / 2, (prev.width + 1) / 2));
    }

    SeparationResult result;
    SolverState state = init_state(pyramid.back(), dicts, cfg);

    for (int level = cfg.scales - 1; level >= 0; --level) {
        const Tensor3& img = pyramid[level];
        const int scale_index = cfg.scales - level;  // 1 = coarsest
        detail::BlockCaches caches = detail::make_caches(dicts, state);
        double prev_obj = detail::objective_terms(img, caches, state, cfg).total();
        for (int k = 0; k < cfg.stages; ++k) {
            const ObjectiveTerms terms =
                detail::safu_stage_impl(img, dicts, state, cfg, proxes, caches);
            StageRecord rec;
            rec.scale = scale_index;
            rec.stage = k + 1;
            rec.objective = terms.total();
            rec.recon_term = terms.recon;
            rec.equality_term = terms.equality;
            rec.sparse_term = terms.sparse;
            rec.exclusion_term = terms.exclusion;
            rec.eta_t = state.eta_t;
            rec.eta_r = state.eta_r;
            rec.eta_n = state.eta_n;
            rec.eta_a = state.eta_a;
            result.trace.push_back(rec);
            if (on_stage) on_stage(rec);
            const double obj = terms.total();
            if (std::fabs(prev_obj - obj) <= cfg.rel_tol * std::max(std::fabs(prev_obj), 1e-12))
                break;
            prev_obj = obj;
        }
        if (level > 0) {
            const Tensor3& finer = pyramid[level - 1];
            state.z_t = resize_bilinear(state.z_t, finer.height, finer.width);
            state.z_r = resize_bilinear(state.z_r, finer.height, finer.width);
            state.z_n = resize_bilinear(state.z_n, finer.height, finer.width);
            state.z_a = resize_bilinear(state.z_a, finer.height, finer.width);
        }
    }

    auto [t_hat, r_hat, n_hat] = reconstruct_images(dicts, state.z_t, state.z_r, state.z_n);
    result.residual = Tensor3(i.height, i.width, 3);
    for (std::size_t k = 0; k < result.residual.size(); ++k)
        result.residual.data[k] =
            i.data[k] - t_hat.data[k] - r_hat.data[k] - n_hat.data[k];
    result.t_hat = std::move(t_hat);
    result.r_hat = std::move(r_hat);
    result.n_hat = std::move(n_hat);
    result.recon_l1 =
        sum_abs(result.residual) / (static_cast<double>(i.height) * i.width);
    result.aux_l1 = sum_abs(state.z_a) / static_cast<double>(state.z_a.size());
    result.state = std::move(state);
    return result;
}

}  // namespace sirrkit
