#pragma once

// Synthetic exciton Hamiltonian. Bands on a periodic k-grid give the
// electron-hole transition energies; an energy cutoff selects the pair
// basis; the kernel 2*vbar - W couples the pairs. All couplings are
// functions of the pair labels (v, c, k) only, so a basis built with a
// smaller cutoff yields a leading principal submatrix of a larger one.
//
// Units are eV. k-points live on the unit cube.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "bsechase/config.hpp"
#include "bsechase/errors.hpp"
#include "bsechase/linalg.hpp"

namespace bsechase {

struct BandModelParams {
    std::array<int, 3> nk{4, 4, 4};
    int nv = 2;
    int nc = 2;
    double gap = 1.0;
    double valence_width = 0.5;
    double conduction_width = 1.0;
    std::vector<double> valence_offsets;     // length nv, empty means zeros
    std::vector<double> conduction_offsets;  // length nc, empty means zeros
    std::uint64_t seed = 1;
};

struct CouplingModel {
    double exchange_strength = 0.0;
    double screened_strength = 0.0;
    double decay_length = 0.2;
    std::uint64_t seed = 7;
};

class BandModel {
public:
    explicit BandModel(BandModelParams p) : p_(std::move(p)) {
        if (!(p_.gap > 0.0)) throw PreconditionError("band model: gap must be positive");
        if (p_.valence_width < 0.0 || p_.conduction_width < 0.0)
            throw PreconditionError("band model: band widths must be non-negative");
        for (int d : p_.nk)
            if (d < 1) throw PreconditionError("band model: k-grid dimensions must be positive");
        if (p_.nv < 1 || p_.nc < 1) throw PreconditionError("band model: need at least one valence and one conduction band");
        if (p_.valence_offsets.empty()) p_.valence_offsets.assign(static_cast<std::size_t>(p_.nv), 0.0);
        if (p_.conduction_offsets.empty()) p_.conduction_offsets.assign(static_cast<std::size_t>(p_.nc), 0.0);
        if (p_.valence_offsets.size() != static_cast<std::size_t>(p_.nv) ||
            p_.conduction_offsets.size() != static_cast<std::size_t>(p_.nc))
            throw PreconditionError("band model: one offset per band required");

        const std::size_t nkt = nk_total();
        ev_.resize(static_cast<std::size_t>(p_.nv) * nkt);
        ec_.resize(static_cast<std::size_t>(p_.nc) * nkt);
        for (std::size_t k = 0; k < nkt; ++k) {
            const double d = dispersion(k);
            for (int v = 0; v < p_.nv; ++v)
                ev_[static_cast<std::size_t>(v) * nkt + k] = p_.valence_offsets[static_cast<std::size_t>(v)] - p_.valence_width * d;
            for (int c = 0; c < p_.nc; ++c)
                ec_[static_cast<std::size_t>(c) * nkt + k] =
                    p_.gap + p_.conduction_offsets[static_cast<std::size_t>(c)] + p_.conduction_width * d;
        }
        for (double x : ev_)
            if (!std::isfinite(x)) throw PreconditionError("band model: non-finite valence energy");
        for (double x : ec_)
            if (!std::isfinite(x)) throw PreconditionError("band model: non-finite conduction energy");
    }

    const BandModelParams& params() const noexcept { return p_; }
    std::size_t nk_total() const noexcept {
        return static_cast<std::size_t>(p_.nk[0]) * static_cast<std::size_t>(p_.nk[1]) * static_cast<std::size_t>(p_.nk[2]);
    }

    /// Integer grid coordinates of k-index k.
    std::array<int, 3> grid_coords(std::size_t k) const {
        const auto n1 = static_cast<std::size_t>(p_.nk[1]), n2 = static_cast<std::size_t>(p_.nk[2]);
        return {static_cast<int>(k / (n1 * n2)), static_cast<int>((k / n2) % n1), static_cast<int>(k % n2)};
    }

    std::array<double, 3> kpoint(std::size_t k) const {
        const auto g = grid_coords(k);
        return {static_cast<double>(g[0]) / p_.nk[0], static_cast<double>(g[1]) / p_.nk[1],
                static_cast<double>(g[2]) / p_.nk[2]};
    }

    /// d(k) = (3 - cos 2pi k1 - cos 2pi k2 - cos 2pi k3) / 2, in [0, 3].
    double dispersion(std::size_t k) const {
        const auto kp = kpoint(k);
        const double tau = 2.0 * std::numbers::pi;
        return 0.5 * (3.0 - std::cos(tau * kp[0]) - std::cos(tau * kp[1]) - std::cos(tau * kp[2]));
    }

    double valence_energy(int v, std::size_t k) const { return ev_[static_cast<std::size_t>(v) * nk_total() + k]; }
    double conduction_energy(int c, std::size_t k) const { return ec_[static_cast<std::size_t>(c) * nk_total() + k]; }
    double transition(int v, int c, std::size_t k) const { return conduction_energy(c, k) - valence_energy(v, k); }

private:
    BandModelParams p_;
    std::vector<double> ev_, ec_;
};

inline BandModel build_band_model(const BandModelParams& p) { return BandModel(p); }

struct PairLabel {
    int v = 0;
    int c = 0;
    std::size_t k = 0;
    double energy = 0.0;  // E_ck - E_vk

    friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

struct PairBasis {
    std::vector<PairLabel> pairs;  // ascending energy, ties by (k, v, c)
    double ecut = 0.0;

    std::size_t size() const noexcept { return pairs.size(); }
    double min_transition() const { return pairs.empty() ? std::numeric_limits<double>::infinity() : pairs.front().energy; }
};

/// All (v, c, k) with transition energy strictly below ecut.
inline PairBasis enumerate_pairs(const BandModel& model, double ecut) {
    if (!(ecut > 0.0)) throw PreconditionError("enumerate_pairs: ecut must be positive");
    PairBasis basis;
    basis.ecut = ecut;
    const auto& p = model.params();
    for (std::size_t k = 0; k < model.nk_total(); ++k)
        for (int v = 0; v < p.nv; ++v)
            for (int c = 0; c < p.nc; ++c) {
                const double t = model.transition(v, c, k);
                if (t < ecut) basis.pairs.push_back({v, c, k, t});
            }
    if (basis.pairs.empty())
        throw EmptyBasisError("enumerate_pairs: no electron-hole pair below ecut = " + std::to_string(ecut) + " eV");
    std::sort(basis.pairs.begin(), basis.pairs.end(), [](const PairLabel& a, const PairLabel& b) {
        return std::tie(a.energy, a.k, a.v, a.c) < std::tie(b.energy, b.k, b.v, b.c);
    });
    return basis;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t label_hash(std::uint64_t seed, std::uint64_t tag, const PairLabel& l, std::uint64_t q = 0) {
    std::uint64_t h = splitmix64(seed ^ (tag * 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ static_cast<std::uint64_t>(l.v));
    h = splitmix64(h ^ static_cast<std::uint64_t>(l.c));
    h = splitmix64(h ^ static_cast<std::uint64_t>(l.k));
    return splitmix64(h ^ q);
}

inline double unit_uniform(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Standard normal pair from one hash (Box-Muller).
inline std::pair<double, double> normal_pair(std::uint64_t h) {
    const double u1 = (static_cast<double>(h >> 40) + 0.5) * 0x1.0p-24;
    const double u2 = static_cast<double>(h & 0xffffffULL) * 0x1.0p-24;
    const double r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(2.0 * std::numbers::pi * u2), r * std::sin(2.0 * std::numbers::pi * u2)};
}

// Periodic Gaussian in one direction, sampled at offsets m/nk, through its
// Fourier series with positive coefficients exp(-2 pi^2 l^2 G^2). The
// kernel is positive semidefinite on any point set and equals one at zero.
inline std::vector<double> periodic_gaussian_table(int nk, double decay_length) {
    const double l2 = decay_length * decay_length;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    int gmax = 0;
    while (gmax < 4096 && 2.0 * pi2 * l2 * static_cast<double>(gmax) * gmax < 40.0) ++gmax;
    std::vector<double> coef(static_cast<std::size_t>(gmax) + 1);
    double norm = 0.0;
    for (int g = 0; g <= gmax; ++g) {
        coef[static_cast<std::size_t>(g)] = std::exp(-2.0 * pi2 * l2 * g * g);
        norm += g == 0 ? coef[0] : 2.0 * coef[static_cast<std::size_t>(g)];
    }
    std::vector<double> table(static_cast<std::size_t>(nk));
    for (int m = 0; m < nk; ++m) {
        const double delta = static_cast<double>(m) / nk;
        double s = coef[0];
        for (int g = 1; g <= gmax; ++g) s += 2.0 * coef[static_cast<std::size_t>(g)] * std::cos(2.0 * std::numbers::pi * g * delta);
        table[static_cast<std::size_t>(m)] = s / norm;
    }
    return table;
}

}  // namespace detail

/// Rank of the screened-interaction factor G in W = screened * (Phi o G G^H) / rank.
inline constexpr int kScreenedRank = 4;

/// Dense exciton Hamiltonian on the pair basis:
///   H_ij = delta_ij t_i + 2 vbar_ij - W_ij
///   vbar_ij = exchange * Phi(k_i, k_j) * exp(i (theta_i - theta_j))
///   W_ij    = screened * Phi(k_i, k_j) * (g_i . conj(g_j)) / rank
/// with Phi a periodic Gaussian of width decay_length on the k-torus and
/// theta, g seeded functions of the pair label. Phi and G G^H are both
/// positive semidefinite, hence so is W (Schur product).
inline DenseHermitian assemble_hamiltonian(const BandModel& model, const PairBasis& basis, const CouplingModel& coupling) {
    if (basis.pairs.empty()) throw EmptyBasisError("assemble_hamiltonian: empty basis");
    if (!(coupling.decay_length > 0.0)) throw PreconditionError("coupling: decay_length must be positive");
    if (coupling.exchange_strength < 0.0 || coupling.screened_strength < 0.0 ||
        !std::isfinite(coupling.exchange_strength) || !std::isfinite(coupling.screened_strength))
        throw PreconditionError("coupling: strengths must be finite and non-negative");

    const auto& p = model.params();
    std::array<std::vector<double>, 3> phi1;
    for (int d = 0; d < 3; ++d) phi1[static_cast<std::size_t>(d)] = detail::periodic_gaussian_table(p.nk[static_cast<std::size_t>(d)], coupling.decay_length);

    const std::size_t n = basis.size();
    std::vector<std::array<int, 3>> coords(n);
    std::vector<Complex> phase(n);
    std::vector<std::array<Complex, kScreenedRank>> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = basis.pairs[i];
        coords[i] = model.grid_coords(l.k);
        const double theta = 2.0 * std::numbers::pi * detail::unit_uniform(detail::label_hash(coupling.seed, 1, l));
        phase[i] = std::polar(1.0, theta);
        for (int q = 0; q < kScreenedRank; ++q) {
            const auto [a, b] = detail::normal_pair(detail::label_hash(coupling.seed, 2, l, static_cast<std::uint64_t>(q)));
            g[i][static_cast<std::size_t>(q)] = Complex(1.0 + 0.5 * a, 0.5 * b);
        }
    }

    DenseHermitian h(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double phi = 1.0;
            for (std::size_t d = 0; d < 3; ++d) {
                const int nk = p.nk[d];
                const int m = ((coords[i][d] - coords[j][d]) % nk + nk) % nk;
                phi *= phi1[d][static_cast<std::size_t>(m)];
            }
            Complex gg{};
            for (int q = 0; q < kScreenedRank; ++q)
                gg += g[i][static_cast<std::size_t>(q)] * std::conj(g[j][static_cast<std::size_t>(q)]);
            const Complex vbar = coupling.exchange_strength * phi * phase[i] * std::conj(phase[j]);
            const Complex w = coupling.screened_strength * phi * gg / static_cast<double>(kScreenedRank);
            Complex z = 2.0 * vbar - w;
            if (i == j) z += basis.pairs[i].energy;
            h.set(i, j, z);
        }
    }
    return h;
}

/// min_i t_i - eigenvalues[state_index - 1] (eigenvalues ascending, 1-based index).
inline double binding_energy(const PairBasis& basis, std::span<const double> eigenvalues, std::size_t state_index) {
    if (state_index < 1) throw PreconditionError("binding_energy: state_index is 1-based");
    if (eigenvalues.size() < state_index) throw PreconditionError("binding_energy: not enough eigenvalues");
    return basis.min_transition() - eigenvalues[state_index - 1];
}

struct BindingPoint {
    double inverse_ecut = 0.0;
    double e_b = 0.0;
    std::size_t state_index = 1;
};

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

struct BindingSeries {
    std::vector<BindingPoint> points;
    LinearFit fit;

    /// inverse_ecut must decrease strictly along the series (growing cutoff).
    void validate() const {
        for (std::size_t i = 1; i < points.size(); ++i)
            if (!(points[i].inverse_ecut < points[i - 1].inverse_ecut))
                throw PreconditionError("binding series: inverse_ecut must decrease strictly");
    }
};

/// Ordinary least squares of e_b against inverse_ecut over points with
/// inverse_ecut in [lo, hi]. The intercept is the infinite-cutoff estimate.
inline LinearFit extrapolate_binding(std::span<const BindingPoint> points, double lo = -std::numeric_limits<double>::infinity(),
                                     double hi = std::numeric_limits<double>::infinity()) {
    std::vector<std::pair<double, double>> xy;
    for (const auto& pt : points)
        if (pt.inverse_ecut >= lo && pt.inverse_ecut <= hi) xy.emplace_back(pt.inverse_ecut, pt.e_b);
    if (xy.size() < 2) throw PreconditionError("extrapolate_binding: need at least two points in the window");
    // Order-independent accumulation.
    std::sort(xy.begin(), xy.end());
    const double k = static_cast<double>(xy.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : xy) {
        mx += x;
        my += y;
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (!(sxx > 0.0)) throw PreconditionError("extrapolate_binding: abscissae are identical");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.points = xy.size();
    return fit;
}

inline LinearFit extrapolate_binding(BindingSeries& series, double lo = -std::numeric_limits<double>::infinity(),
                                     double hi = std::numeric_limits<double>::infinity()) {
    series.validate();
    series.fit = extrapolate_binding(std::span<const BindingPoint>(series.points), lo, hi);
    return series.fit;
}

// ---------------------------------------------------------------------------
// Model configuration files
// ---------------------------------------------------------------------------

struct ModelConfig {
    BandModelParams band;
    CouplingModel coupling;
};

/// Reads a [band] / [coupling] key-value file. band_offsets holds the
/// valence offsets, a '|' and the conduction offsets.
inline ModelConfig model_config_from(const KeyValueConfig& kv) {
    ModelConfig m;
    const std::string b = "band", c = "coupling";
    if (kv.has(b, "nk")) {
        const auto nk = kv.get_doubles(b, "nk");
        if (nk.size() != 3) throw ConfigError("[band] nk: expected three integers");
        for (std::size_t d = 0; d < 3; ++d) m.band.nk[d] = static_cast<int>(nk[d]);
    }
    m.band.nv = static_cast<int>(kv.get_int(b, "nv", m.band.nv));
    m.band.nc = static_cast<int>(kv.get_int(b, "nc", m.band.nc));
    m.band.gap = kv.get_double(b, "gap", m.band.gap);
    m.band.valence_width = kv.get_double(b, "valence_width", m.band.valence_width);
    m.band.conduction_width = kv.get_double(b, "conduction_width", m.band.conduction_width);
    m.band.seed = static_cast<std::uint64_t>(kv.get_int(b, "seed", static_cast<long long>(m.band.seed)));
    if (kv.has(b, "band_offsets")) {
        const auto& text = kv.get(b, "band_offsets");
        const auto bar = text.find('|');
        if (bar == std::string::npos) throw ConfigError("[band] band_offsets: expected '<valence> | <conduction>'");
        m.band.valence_offsets = KeyValueConfig::split_doubles(text.substr(0, bar), "band_offsets");
        m.band.conduction_offsets = KeyValueConfig::split_doubles(text.substr(bar + 1), "band_offsets");
    }
    m.coupling.exchange_strength = kv.get_double(c, "exchange_strength", m.coupling.exchange_strength);
    m.coupling.screened_strength = kv.get_double(c, "screened_strength", m.coupling.screened_strength);
    m.coupling.decay_length = kv.get_double(c, "decay_length", m.coupling.decay_length);
    m.coupling.seed = static_cast<std::uint64_t>(kv.get_int(c, "seed", static_cast<long long>(m.coupling.seed)));
    return m;
}

inline ModelConfig load_model_config(const std::string& path) { return model_config_from(KeyValueConfig::load(path)); }

}  // namespace bsechase
