#pragma once

// Baseline solver in the style of Kalkreuter and Simma: every vector of a
// block is improved by a few nonlinear CG steps on its Rayleigh quotient,
// restricted to the orthogonal complement of the vectors before it, and the
// block is then rotated by a direct minimization over its span.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "bsechase/chase.hpp"
#include "bsechase/errors.hpp"
#include "bsechase/linalg.hpp"

namespace bsechase {

struct KscgConfig {
    std::size_t nev = 10;
    std::size_t block_extra = 30;
    double tol = 1e-10;
    int max_cg_cycles_per_vector = 500;
    int ritz_every = 20;
    int lanczos_steps = 25;
    int lanczos_starts = 4;
    std::uint64_t seed = 42;
};

struct KscgResult {
    std::vector<double> values;
    BlockVectors vectors;
    std::vector<double> residuals;
    std::uint64_t total_cg_cycles = 0;
    std::uint64_t matvecs = 0;
    int sweeps = 0;
    double scale = 0.0;
    bool dense_fallback = false;
};

struct CgOutcome {
    double lambda = 0.0;
    BlockVectors x;  // n x 1, unit norm
    int cycles = 0;
    bool converged = false;
    double residual = 0.0;
};

namespace detail {

// Lowest eigenpair of [[a, b], [conj(b), d]] (a, d real); returns the unit eigenvector.
inline std::pair<Complex, Complex> lowest_2x2(double a, Complex b, double d) {
    const double mid = 0.5 * (a + d);
    const double rad = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(b));
    const double lam = mid - rad;
    Complex u1 = b, u2 = lam - a;
    Complex w1 = lam - d, w2 = std::conj(b);
    double nu = std::sqrt(std::norm(u1) + std::norm(u2));
    const double nw = std::sqrt(std::norm(w1) + std::norm(w2));
    if (nw > nu) {
        u1 = w1;
        u2 = w2;
        nu = nw;
    }
    if (nu == 0.0) return {1.0, 0.0};
    // Fix the phase so the coefficient on x is real and non-negative; the
    // iterate then moves continuously and earlier search directions stay aligned.
    const double m1 = std::abs(u1);
    const Complex ph = m1 > 0.0 ? std::conj(u1) / m1 : Complex(1.0);
    return {u1 * ph / nu, u2 * ph / nu};
}

inline void project_twice(std::span<Complex> x, const BlockVectors& q) {
    project_out(x, q);
    project_out(x, q);
}

}  // namespace detail

/// Nonlinear conjugate gradient (Polak-Ribiere, restarted when the direction
/// is not a descent direction) on the Rayleigh quotient of H over the
/// orthogonal complement of `locked`. `tol` is an absolute residual bound.
inline CgOutcome cg_minimize_rayleigh(const DenseHermitian& h, const BlockVectors& x0, const BlockVectors& locked,
                                      double tol, int max_cycles) {
    const std::size_t n = h.n();
    if (x0.rows() != n || x0.cols() != 1) throw DimensionError("cg_minimize_rayleigh: x0 must be an n-vector");
    if (locked.cols() > 0 && locked.rows() != n) throw DimensionError("cg_minimize_rayleigh: locked row mismatch");

    CgOutcome out;
    out.x = x0;
    auto x = out.x.col(0);
    detail::project_twice(x, locked);
    double nx = norm2(x);
    if (!(nx > 0.0)) throw PreconditionError("cg_minimize_rayleigh: start vector vanishes on the complement");
    for (auto& z : x) z /= nx;

    BlockVectors hx = multiply_block(h, out.x);
    BlockVectors p(n, 1), g(n, 1), g_prev(n, 1);
    double gg_prev = 0.0;
    bool restart = true;

    auto refresh = [&](double& lambda, double& true_res, double& proj_res) {
        lambda = dot(x, hx.col(0)).real();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g(i, 0) = hx(i, 0) - lambda * x[i];
            s += std::norm(g(i, 0));
        }
        true_res = std::sqrt(s);
        detail::project_twice(g.col(0), locked);
        proj_res = norm2(g.col(0));
    };

    double lambda = 0.0, true_res = 0.0, proj_res = 0.0;
    refresh(lambda, true_res, proj_res);
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        if (true_res <= tol || proj_res <= 0.1 * tol) break;

        // Direction update.
        const double gg = std::norm(norm2(g.col(0)));
        double beta_pr = 0.0;
        if (!restart && gg_prev > 0.0) {
            Complex num{};
            for (std::size_t i = 0; i < n; ++i) num += std::conj(g(i, 0)) * (g(i, 0) - g_prev(i, 0));
            beta_pr = std::max(0.0, num.real() / gg_prev);
        }
        for (std::size_t i = 0; i < n; ++i) p(i, 0) = -g(i, 0) + beta_pr * p(i, 0);
        detail::project_twice(p.col(0), locked);
        {
            const Complex px = dot(x, p.col(0));
            for (std::size_t i = 0; i < n; ++i) p(i, 0) -= px * x[i];
        }
        if (dot(g.col(0), p.col(0)).real() >= 0.0) {
            for (std::size_t i = 0; i < n; ++i) p(i, 0) = -g(i, 0);
            const Complex px = dot(x, p.col(0));
            for (std::size_t i = 0; i < n; ++i) p(i, 0) -= px * x[i];
        }
        restart = false;
        g_prev = g;
        gg_prev = gg;

        // Exact line search: lowest Ritz pair of H on span{x, p}.
        const double np = norm2(p.col(0));
        if (!(np > 0.0)) break;
        BlockVectors phat(n, 1);
        for (std::size_t i = 0; i < n; ++i) phat(i, 0) = p(i, 0) / np;
        const auto hp = multiply_block(h, phat);
        ++out.cycles;
        const Complex b = dot(x, hp.col(0));
        const double d = dot(phat.col(0), hp.col(0)).real();
        const auto [c1, c2] = detail::lowest_2x2(lambda, b, d);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = c1 * x[i] + c2 * phat(i, 0);
            hx(i, 0) = c1 * hx(i, 0) + c2 * hp(i, 0);
        }
        // Keep the iterate in the constraint space and hx consistent with x.
        if (out.cycles % 25 == 0) {
            detail::project_twice(x, locked);
            nx = norm2(x);
            for (auto& z : x) z /= nx;
            hx = multiply_block(h, out.x);
        } else {
            nx = norm2(x);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] /= nx;
                hx(i, 0) /= nx;
            }
        }
        refresh(lambda, true_res, proj_res);
    }
    out.lambda = lambda;
    out.residual = true_res;
    out.converged = true_res <= tol;
    return out;
}

/// Orthonormalizes the block and rotates it onto its Ritz vectors.
inline RitzResult kscg_subspace_rotate(const DenseHermitian& h, const BlockVectors& block) {
    return rayleigh_ritz(h, qr_orthonormalize(block));
}

inline KscgResult kscg_solve(const DenseHermitian& h, const KscgConfig& cfg) {
    if (cfg.nev == 0) throw PreconditionError("kscg_solve: nev must be positive");
    if (!(cfg.tol > 0.0)) throw PreconditionError("kscg_solve: tol must be positive");
    if (cfg.ritz_every < 1) throw PreconditionError("kscg_solve: ritz_every must be positive");
    const std::size_t n = h.n();
    const std::size_t m = cfg.nev + cfg.block_extra;
    if (m >= n) return detail::dense_fallback_solve<KscgResult>(h, cfg.nev);

    KscgResult res;
    const auto start = matvec_count();
    const auto lz = lanczos_bounds_detailed(h, cfg.lanczos_steps, cfg.lanczos_starts, m, cfg.seed);
    res.scale = std::max(std::abs(lz.bounds.mu1), std::abs(lz.bounds.beta));
    const double abs_tol = cfg.tol * res.scale;
    const std::uint64_t budget = static_cast<std::uint64_t>(cfg.max_cg_cycles_per_vector) * m;

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    auto rot = kscg_subspace_rotate(h, random_block(n, m, rng));
    BlockVectors block = std::move(rot.basis);
    std::vector<double> ritz = std::move(rot.values);
    std::vector<double> resid = residual_norms(h, block, ritz);
    std::size_t nlocked = 0;
    auto advance_locks = [&] {
        while (nlocked < cfg.nev && resid[nlocked] <= abs_tol) ++nlocked;
    };
    advance_locks();

    while (nlocked < cfg.nev) {
        if (res.total_cg_cycles >= budget) break;
        ++res.sweeps;
        for (std::size_t j = nlocked; j < m; ++j) {
            const auto prev = block.columns(0, j);
            auto cg = cg_minimize_rayleigh(h, block.columns(j, 1), prev, abs_tol, cfg.ritz_every);
            res.total_cg_cycles += static_cast<std::uint64_t>(cg.cycles);
            std::copy(cg.x.col(0).begin(), cg.x.col(0).end(), block.col(j).begin());
        }
        // Locked columns are exact to tolerance; rotate only the rest of the block.
        const auto locked = block.columns(0, nlocked);
        auto tail = orthogonalize_against(block.columns(nlocked, m - nlocked), locked, cfg.seed + res.sweeps).vectors;
        rot = kscg_subspace_rotate(h, tail);
        for (std::size_t j = 0; j < rot.basis.cols(); ++j) {
            std::copy(rot.basis.col(j).begin(), rot.basis.col(j).end(), block.col(nlocked + j).begin());
            ritz[nlocked + j] = rot.values[j];
        }
        const auto tail_resid = residual_norms(h, rot.basis, rot.values);
        std::copy(tail_resid.begin(), tail_resid.end(), resid.begin() + static_cast<std::ptrdiff_t>(nlocked));
        advance_locks();
    }

    res.matvecs = matvec_count() - start;
    res.values.assign(ritz.begin(), ritz.begin() + static_cast<std::ptrdiff_t>(nlocked));
    res.vectors = block.columns(0, nlocked);
    res.residuals.assign(resid.begin(), resid.begin() + static_cast<std::ptrdiff_t>(nlocked));
    if (nlocked < cfg.nev) {
        throw PartialConvergenceError<KscgResult>("kscg_solve: CG cycle budget exhausted with " +
                                                      std::to_string(nlocked) + " of " + std::to_string(cfg.nev) +
                                                      " eigenpairs converged",
                                                  std::move(res));
    }
    return res;
}

}  // namespace bsechase
