#pragma once

// Chebyshev accelerated subspace iteration for the lowest part of the
// spectrum of a dense Hermitian matrix.
//
// One solve runs
//   Lanczos -> [ filter -> QR -> Rayleigh-Ritz -> residuals -> lock ]*
// where the filter degree of every active column is re-planned from its
// residual and the current damping factor after the first sweep.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bsechase/errors.hpp"
#include "bsechase/linalg.hpp"

namespace bsechase {

struct SpectralBounds {
    double mu1 = 0.0;    // estimate of the lowest eigenvalue
    double alpha = 0.0;  // lower end of the damped interval (~ lambda_{nev+nex})
    double beta = 0.0;   // upper bound of the spectrum

    double center() const noexcept { return 0.5 * (alpha + beta); }
    double half_width() const noexcept { return 0.5 * (beta - alpha); }

    bool valid() const noexcept { return mu1 <= alpha && alpha < beta && std::isfinite(beta); }
};

struct ChaseConfig {
    std::size_t nev = 10;
    std::size_t nex = 10;
    double tol = 1e-10;
    int max_iters = 25;
    int lanczos_steps = 25;
    int lanczos_starts = 4;
    int base_degree = 20;
    int degree_cap = 72;
    std::uint64_t seed = 42;
    bool record_trace = false;
};

struct DampingReport {
    double gamma = 0.0;
    double c = 0.0;
    double e = 0.0;
    double rho_inverse = 1.0;
};

struct ChaseResult {
    std::vector<double> values;
    BlockVectors vectors;
    std::vector<double> residuals;
    int iterations = 0;
    std::uint64_t matvecs = 0;          // Lanczos + filter applications
    std::uint64_t lanczos_matvecs = 0;
    std::uint64_t filter_matvecs = 0;
    std::uint64_t planned_degree_sum = 0;
    std::map<std::string, double> phase_timers{
        {"lanczos", 0.0}, {"filter", 0.0}, {"qr", 0.0}, {"rr", 0.0}, {"resid", 0.0}};
    SpectralBounds bounds;
    double scale = 0.0;
    bool dense_fallback = false;
    std::optional<DampingReport> final_damping;
    // Locked eigenvalues after each iteration, in lock order (only with record_trace).
    std::vector<std::vector<double>> locked_trace;
};

// ---------------------------------------------------------------------------
// Spectral bounds
// ---------------------------------------------------------------------------

struct LanczosOutcome {
    SpectralBounds bounds;
    std::uint64_t matvecs = 0;
    int breakdowns = 0;
};

namespace detail {

struct LanczosRun {
    std::vector<double> ritz;     // ascending
    std::vector<double> weights;  // squared first components of the Ritz vectors
    double upper = 0.0;
    int steps_done = 0;
    bool breakdown = false;
};

inline LanczosRun lanczos_run(const DenseHermitian& h, int steps, std::mt19937_64& rng) {
    const std::size_t n = h.n();
    steps = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(steps), n));
    auto v = random_block(n, 1, rng);
    const double nv = norm2(v.col(0));
    for (auto& z : v.col(0)) z /= nv;
    BlockVectors v_prev(n, 1);

    std::vector<double> alphas, betas;
    double b_prev = 0.0, last_b = 0.0;
    LanczosRun run;
    for (int j = 0; j < steps; ++j) {
        auto w = multiply_block(h, v);
        ++run.steps_done;
        const double a = dot(v.col(0), w.col(0)).real();
        for (std::size_t i = 0; i < n; ++i) w(i, 0) -= a * v(i, 0) + b_prev * v_prev(i, 0);
        const double b = norm2(w.col(0));
        alphas.push_back(a);
        last_b = b;
        if (b < 1e-14 * std::max(1.0, std::abs(a))) {
            // Invariant Krylov subspace: the Ritz values found so far are exact.
            run.breakdown = true;
            break;
        }
        betas.push_back(b);
        v_prev = v;
        for (std::size_t i = 0; i < n; ++i) v(i, 0) = w(i, 0) / b;
        b_prev = b;
    }

    const std::size_t k = alphas.size();
    ComplexMatrix t(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        t(i, i) = alphas[i];
        if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = betas[i];
    }
    const auto eig = small_hermitian_eig(t);
    run.ritz = eig.values;
    run.weights.resize(k);
    for (std::size_t i = 0; i < k; ++i) run.weights[i] = std::norm(eig.vectors(0, i));
    run.upper = eig.values.back() + std::abs(last_b);
    return run;
}

}  // namespace detail

/// Lanczos estimate of (mu1, alpha, beta). beta is the largest Ritz value plus
/// the norm of the last Lanczos residual; alpha is read off the approximate
/// spectral density at the fraction (nev+nex)/N.
inline LanczosOutcome lanczos_bounds_detailed(const DenseHermitian& h, int steps, int starts,
                                              std::size_t nev_plus_nex, std::uint64_t seed) {
    const std::size_t n = h.n();
    if (steps < 10) throw PreconditionError("lanczos_bounds: at least 10 steps required");
    if (starts < 1) throw PreconditionError("lanczos_bounds: at least one start vector required");
    if (nev_plus_nex >= n) throw PreconditionError("lanczos_bounds: nev+nex must be below N");

    std::mt19937_64 rng(seed);
    LanczosOutcome out;
    double mu1 = std::numeric_limits<double>::infinity();
    double beta = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> density;
    int finite_runs = 0;
    for (int s = 0; s < starts; ++s) {
        const auto before = matvec_count();
        auto run = detail::lanczos_run(h, steps, rng);
        out.matvecs += matvec_count() - before;
        if (run.breakdown) ++out.breakdowns;
        if (!std::isfinite(run.upper)) continue;
        ++finite_runs;
        mu1 = std::min(mu1, run.ritz.front());
        beta = std::max(beta, run.upper);
        for (std::size_t i = 0; i < run.ritz.size(); ++i)
            density.emplace_back(run.ritz[i], run.weights[i] / static_cast<double>(starts));
    }
    if (finite_runs == 0) throw LanczosBreakdownError("lanczos_bounds: every start vector failed");

    std::sort(density.begin(), density.end());
    const double target = static_cast<double>(nev_plus_nex) / static_cast<double>(n);
    double cumulative = 0.0;
    double alpha = density.back().first;
    for (const auto& [theta, w] : density) {
        cumulative += w;
        if (cumulative >= target) {
            alpha = theta;
            break;
        }
    }
    alpha = std::max(alpha, mu1);
    const double gap = 1e-13 * std::max(1.0, std::abs(beta));
    if (beta - alpha < gap) {
        if (alpha > beta) alpha = beta;
        beta = alpha + gap;
    }
    out.bounds = {mu1, alpha, beta};
    return out;
}

inline SpectralBounds lanczos_bounds(const DenseHermitian& h, int steps, int starts, std::size_t nev_plus_nex,
                                     std::uint64_t seed) {
    return lanczos_bounds_detailed(h, steps, starts, nev_plus_nex, seed).bounds;
}

// ---------------------------------------------------------------------------
// Damping factor and degree planning
// ---------------------------------------------------------------------------

/// Convergence rate of the filter at gamma for the damped interval [alpha, beta].
/// rho = max_{+/-} |x +/- sqrt(x^2 - 1)|, x = (gamma - c)/e; returns 1/rho.
inline DampingReport damping_factor(double gamma, double alpha, double beta) {
    if (!(alpha < beta)) throw PreconditionError("damping_factor: alpha must be below beta");
    if (!(gamma < alpha)) throw PreconditionError("damping_factor: gamma lies inside the damped interval");
    DampingReport r;
    r.gamma = gamma;
    r.c = 0.5 * (alpha + beta);
    r.e = 0.5 * (beta - alpha);
    const double x = (gamma - r.c) / r.e;
    const double root = std::sqrt(std::max(0.0, x * x - 1.0));
    const double rho = std::max(std::abs(x + root), std::abs(x - root));
    r.rho_inverse = std::min(1.0, 1.0 / rho);
    return r;
}

struct DegreePlan {
    std::vector<int> degrees;
    std::vector<bool> saturated;  // no damping available, degree forced to the cap
    std::vector<bool> excluded;   // residual already at tolerance, column should be locked
};

/// Per-column filter degrees. The first sweep uses base_degree everywhere;
/// afterwards d_i = min(cap, ceil(ln(tol/res_i) / ln(1/rho_i))).
inline DegreePlan plan_degrees(const SpectralBounds& bounds, std::span<const double> ritz_values,
                               std::span<const double> residuals, double tol, int base_degree, int cap,
                               bool first_iteration = false) {
    if (ritz_values.size() != residuals.size()) throw DimensionError("plan_degrees: size mismatch");
    if (cap < 1) throw PreconditionError("plan_degrees: degree cap must be positive");
    const std::size_t k = ritz_values.size();
    DegreePlan plan{std::vector<int>(k, 0), std::vector<bool>(k, false), std::vector<bool>(k, false)};
    for (std::size_t i = 0; i < k; ++i) {
        if (first_iteration) {
            plan.degrees[i] = std::clamp(base_degree, 1, cap);
            continue;
        }
        if (residuals[i] <= tol) {
            plan.excluded[i] = true;
            continue;
        }
        double rho_inv = 1.0;
        if (ritz_values[i] < bounds.alpha && bounds.alpha < bounds.beta)
            rho_inv = damping_factor(ritz_values[i], bounds.alpha, bounds.beta).rho_inverse;
        if (!(rho_inv < 1.0)) {
            plan.degrees[i] = cap;
            plan.saturated[i] = true;
            continue;
        }
        const double d = std::ceil(std::log(tol / residuals[i]) / std::log(rho_inv));
        plan.degrees[i] = static_cast<int>(std::clamp(d, 1.0, static_cast<double>(cap)));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Filter
// ---------------------------------------------------------------------------

/// Replaces column j of V by p_{d_j}(H) v_j, where p_d is the degree-d
/// Chebyshev polynomial of the interval [alpha, beta] normalized to
/// p_d(mu1) = 1. Columns are grouped by degree so that the columns still
/// being filtered at step t form one contiguous block.
inline BlockVectors chebyshev_filter(const DenseHermitian& h, const BlockVectors& v, std::span<const int> degrees,
                                     const SpectralBounds& bounds) {
    if (v.rows() != h.n()) throw DimensionError("chebyshev_filter: row mismatch");
    if (degrees.size() != v.cols()) throw DimensionError("chebyshev_filter: one degree per column required");
    const double c = bounds.center();
    const double e = bounds.half_width();
    if (!(e > 0.0)) throw PreconditionError("chebyshev_filter: degenerate interval (e == 0)");
    if (!(bounds.mu1 < c)) throw PreconditionError("chebyshev_filter: mu1 must lie below the interval center");
    for (int d : degrees)
        if (d < 0) throw PreconditionError("chebyshev_filter: negative degree");

    const std::size_t n = v.rows();
    const std::size_t b = v.cols();
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return degrees[x] > degrees[y]; });
    const int max_d = b == 0 ? 0 : degrees[order.front()];

    BlockVectors out = v;
    if (max_d == 0) return out;

    auto active_at = [&](int t) {
        std::size_t k = 0;
        while (k < b && degrees[order[k]] >= t) ++k;
        return k;
    };
    auto finish = [&](const BlockVectors& y, int t, std::size_t kt) {
        for (std::size_t k = 0; k < kt; ++k)
            if (degrees[order[k]] == t) std::copy(y.col(k).begin(), y.col(k).end(), out.col(order[k]).begin());
    };

    BlockVectors x = v.select_columns(order);
    const double sigma1 = e / (bounds.mu1 - c);
    std::size_t kt = active_at(1);
    BlockVectors y(n, kt);
    {
        BlockVectors hx(n, kt);
        detail::multiply_columns(h, x.data(), kt, hx.data());
        const double s = sigma1 / e;
        for (std::size_t j = 0; j < kt; ++j)
            for (std::size_t i = 0; i < n; ++i) y(i, j) = s * (hx(i, j) - c * x(i, j));
    }
    finish(y, 1, kt);

    double sigma = sigma1;
    BlockVectors hy(n, kt), ynew(n, kt);
    for (int t = 2; t <= max_d; ++t) {
        kt = active_at(t);
        const double sigma_new = 1.0 / (2.0 / sigma1 - sigma);
        detail::multiply_columns(h, y.data(), kt, hy.data());
        const double s1 = 2.0 * sigma_new / e;
        const double s2 = sigma * sigma_new;
        for (std::size_t j = 0; j < kt; ++j)
            for (std::size_t i = 0; i < n; ++i) ynew(i, j) = s1 * (hy(i, j) - c * y(i, j)) - s2 * x(i, j);
        // Shift the recurrence: x <- y, y <- ynew (only the first kt columns matter from here on).
        std::swap(x, y);
        std::swap(y, ynew);
        sigma = sigma_new;
        finish(y, t, kt);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rayleigh-Ritz and locking
// ---------------------------------------------------------------------------

struct RitzResult {
    std::vector<double> values;  // ascending
    BlockVectors basis;          // Q W
};

inline RitzResult rayleigh_ritz(const DenseHermitian& h, const BlockVectors& q) {
    if (q.rows() != h.n()) throw DimensionError("rayleigh_ritz: row mismatch");
    if (q.cols() == 0) return {{}, q};
    if (orthonormality_defect(q) > 1e-10) throw PreconditionError("rayleigh_ritz: basis is not orthonormal");
    const auto hq = multiply_block(h, q);
    auto a = adjoint_times(q, hq);
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < j; ++i) {
            const Complex avg = 0.5 * (a(i, j) + std::conj(a(j, i)));
            a(i, j) = avg;
            a(j, i) = std::conj(avg);
        }
    auto eig = small_hermitian_eig(a, 1e-8);
    return {std::move(eig.values), times(q, eig.vectors)};
}

struct LockPartition {
    std::vector<std::size_t> locked;  // indices into the input columns, ascending eigenvalue order
    std::vector<std::size_t> active;
    BlockVectors locked_vectors;
    std::vector<double> locked_values;
    BlockVectors active_vectors;
    std::vector<double> active_values;
    std::vector<double> active_residuals;
    std::vector<std::size_t> replaced;  // active columns refilled during re-orthogonalization
};

/// Moves columns with residual <= tol*scale into the locked set. Only the
/// first `lockable` columns are candidates (all when lockable is unset).
/// The remaining active columns are re-orthogonalized against the new locks.
inline LockPartition lock_converged(std::span<const double> ritz_values, const BlockVectors& basis,
                                    std::span<const double> residuals, double tol, double scale,
                                    std::optional<std::size_t> lockable = std::nullopt) {
    if (ritz_values.size() != basis.cols() || residuals.size() != basis.cols())
        throw DimensionError("lock_converged: size mismatch");
    const std::size_t limit = std::min(lockable.value_or(basis.cols()), basis.cols());
    LockPartition p;
    for (std::size_t j = 0; j < basis.cols(); ++j) {
        if (j < limit && residuals[j] <= tol * scale)
            p.locked.push_back(j);
        else
            p.active.push_back(j);
    }
    std::stable_sort(p.locked.begin(), p.locked.end(),
                     [&](std::size_t x, std::size_t y) { return ritz_values[x] < ritz_values[y]; });
    p.locked_vectors = basis.select_columns(p.locked);
    for (auto j : p.locked) p.locked_values.push_back(ritz_values[j]);
    auto orth = orthogonalize_against(basis.select_columns(p.active), p.locked_vectors);
    p.active_vectors = std::move(orth.vectors);
    p.replaced = std::move(orth.replaced);
    for (auto j : p.active) {
        p.active_values.push_back(ritz_values[j]);
        p.active_residuals.push_back(residuals[j]);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

namespace detail {

class PhaseTimer {
public:
    PhaseTimer(std::map<std::string, double>& sink, const char* name)
        : sink_(sink), name_(name), start_(std::chrono::steady_clock::now()) {}
    ~PhaseTimer() {
        sink_[name_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    PhaseTimer(const PhaseTimer&) = delete;
    PhaseTimer& operator=(const PhaseTimer&) = delete;

private:
    std::map<std::string, double>& sink_;
    const char* name_;
    std::chrono::steady_clock::time_point start_;
};

inline void sort_result(std::vector<double>& values, BlockVectors& vectors, std::vector<double>& residuals) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> v2, r2;
    for (auto k : order) {
        v2.push_back(values[k]);
        r2.push_back(residuals[k]);
    }
    vectors = vectors.select_columns(order);
    values = std::move(v2);
    residuals = std::move(r2);
}

// Orthonormal basis for the filtered block, orthogonal to `locked`. A high
// filter degree can make columns numerically dependent; those are refilled
// with random directions instead of aborting the solve.
inline BlockVectors orthonormalize_filtered(const BlockVectors& v, const BlockVectors& locked, std::uint64_t seed) {
    auto projected = orthogonalize_against(v, locked, seed).vectors;
    try {
        return qr_orthonormalize(projected);
    } catch (const RankDeficiencyError&) {
    }
    std::mt19937_64 rng(seed);
    BlockVectors basis = locked;
    const std::size_t first = locked.cols();
    for (std::size_t j = 0; j < projected.cols(); ++j) {
        BlockVectors col = projected.columns(j, 1);
        const double before = norm2(col.col(0));
        for (int attempt = 0; attempt < 16; ++attempt) {
            detail::cgs_pass(col, basis);
            detail::cgs_pass(col, basis);
            const double after = norm2(col.col(0));
            if (after > 1e-10 * before && after > 0.0) {
                for (auto& z : col.col(0)) z /= after;
                break;
            }
            col = random_block(v.rows(), 1, rng);
        }
        basis = basis.hcat(col);
    }
    return basis.columns(first, projected.cols());
}

template <class Result>
Result dense_fallback_solve(const DenseHermitian& h, std::size_t nev) {
    const auto eig = dense_eig(h);
    Result r;
    const std::size_t k = std::min(nev, h.n());
    r.values.assign(eig.values.begin(), eig.values.begin() + static_cast<std::ptrdiff_t>(k));
    r.vectors = eig.vectors.columns(0, k);
    r.residuals = residual_norms(h, r.vectors, r.values);
    r.dense_fallback = true;
    return r;
}

}  // namespace detail

/// Lowest cfg.nev eigenpairs of H. Throws PartialConvergenceError<ChaseResult>
/// (carrying the locked pairs) when max_iters sweeps do not converge them all.
inline ChaseResult chase_solve(const DenseHermitian& h, const ChaseConfig& cfg) {
    if (cfg.nev == 0) throw PreconditionError("chase_solve: nev must be positive");
    if (!(cfg.tol > 0.0)) throw PreconditionError("chase_solve: tol must be positive");
    const std::size_t n = h.n();
    const std::size_t m = cfg.nev + cfg.nex;
    if (m >= n) return detail::dense_fallback_solve<ChaseResult>(h, cfg.nev);

    ChaseResult res;
    LanczosOutcome lz;
    {
        detail::PhaseTimer t(res.phase_timers, "lanczos");
        lz = lanczos_bounds_detailed(h, cfg.lanczos_steps, cfg.lanczos_starts, m, cfg.seed);
    }
    SpectralBounds bounds = lz.bounds;
    res.lanczos_matvecs = lz.matvecs;
    const double scale = std::max(std::abs(bounds.mu1), std::abs(bounds.beta));
    const double abs_tol = cfg.tol * scale;
    res.scale = scale;

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    BlockVectors active;
    {
        detail::PhaseTimer t(res.phase_timers, "qr");
        active = qr_orthonormalize(random_block(n, m, rng));
    }
    BlockVectors locked(n, 0);
    std::vector<double> locked_values, locked_residuals;
    std::vector<double> ritz, resid;

    int it = 0;
    for (it = 1; it <= cfg.max_iters; ++it) {
        const std::size_t wanted = cfg.nev - locked_values.size();
        std::vector<int> degrees(active.cols(), cfg.base_degree);
        if (it > 1) {
            const auto plan = plan_degrees(bounds, std::span(ritz).first(wanted), std::span(resid).first(wanted),
                                           abs_tol, cfg.base_degree, cfg.degree_cap);
            int top = 1;
            for (std::size_t j = 0; j < wanted; ++j) {
                degrees[j] = std::max(plan.degrees[j], 1);
                top = std::max(top, degrees[j]);
            }
            for (std::size_t j = wanted; j < active.cols(); ++j) degrees[j] = top;
        }
        for (int d : degrees) res.planned_degree_sum += static_cast<std::uint64_t>(d);

        {
            detail::PhaseTimer t(res.phase_timers, "filter");
            const auto before = matvec_count();
            active = chebyshev_filter(h, active, degrees, bounds);
            res.filter_matvecs += matvec_count() - before;
        }
        {
            detail::PhaseTimer t(res.phase_timers, "qr");
            active = detail::orthonormalize_filtered(active, locked, cfg.seed + static_cast<std::uint64_t>(it));
        }
        RitzResult rr;
        {
            detail::PhaseTimer t(res.phase_timers, "rr");
            rr = rayleigh_ritz(h, active);
        }
        ritz = rr.values;
        active = std::move(rr.basis);
        {
            const double top = ritz.back();
            bounds.alpha = std::clamp(top, bounds.mu1, bounds.beta);
            if (bounds.beta - bounds.alpha < 1e-13 * std::max(1.0, std::abs(bounds.beta)))
                bounds.alpha = std::max(bounds.mu1, bounds.beta - 1e-13 * std::max(1.0, std::abs(bounds.beta)));
        }
        {
            detail::PhaseTimer t(res.phase_timers, "resid");
            resid = residual_norms(h, active, ritz);
        }

        auto part = lock_converged(ritz, active, resid, cfg.tol, scale, wanted);
        for (std::size_t k = 0; k < part.locked.size(); ++k) {
            locked_values.push_back(part.locked_values[k]);
            locked_residuals.push_back(resid[part.locked[k]]);
        }
        locked = locked.hcat(part.locked_vectors);
        active = std::move(part.active_vectors);
        ritz = std::move(part.active_values);
        resid = std::move(part.active_residuals);
        if (cfg.record_trace) res.locked_trace.push_back(locked_values);

        if (locked_values.size() >= cfg.nev) break;
    }
    res.iterations = std::min(it, cfg.max_iters);
    res.matvecs = res.lanczos_matvecs + res.filter_matvecs;
    res.bounds = bounds;
    res.values = locked_values;
    res.vectors = locked;
    res.residuals = locked_residuals;
    detail::sort_result(res.values, res.vectors, res.residuals);
    if (!res.values.empty() && res.values.back() < bounds.alpha)
        res.final_damping = damping_factor(res.values.back(), bounds.alpha, bounds.beta);

    if (res.values.size() < cfg.nev) {
        throw PartialConvergenceError<ChaseResult>(
            "chase_solve: " + std::to_string(res.values.size()) + " of " + std::to_string(cfg.nev) +
                " eigenpairs converged within " + std::to_string(cfg.max_iters) + " iterations",
            std::move(res));
    }
    return res;
}

}  // namespace bsechase
