#pragma once

// Dense complex kernels shared by the eigensolvers: Hermitian matrix storage,
// column-major blocks of vectors, blocked multiply, Householder QR, cyclic
// Jacobi for the reduced problem, block Gram-Schmidt and residual norms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bsechase/errors.hpp"

namespace bsechase {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Operation accounting
// ---------------------------------------------------------------------------

namespace detail {
inline thread_local std::uint64_t matvec_counter = 0;
}

/// Number of H-times-vector column applications performed on this thread.
inline std::uint64_t matvec_count() noexcept { return detail::matvec_counter; }
inline void reset_matvec_count() noexcept { detail::matvec_counter = 0; }

// ---------------------------------------------------------------------------
// Storage
// ---------------------------------------------------------------------------

/// Column-major complex matrix. Used both for tall blocks of vectors (N x b)
/// and for the small square matrices of the reduced problem.
class ComplexMatrix {
public:
    ComplexMatrix() = default;
    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, Complex{}) {}
    ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("ComplexMatrix: data size does not match shape");
        }
    }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return cols_ == 0 || rows_ == 0; }

    Complex& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
    const Complex& operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

    std::span<Complex> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
    std::span<const Complex> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

    Complex* data() noexcept { return data_.data(); }
    const Complex* data() const noexcept { return data_.data(); }
    const std::vector<Complex>& storage() const noexcept { return data_; }

    /// Copy of columns [first, first + count).
    ComplexMatrix columns(std::size_t first, std::size_t count) const {
        if (first + count > cols_) throw DimensionError("ComplexMatrix::columns out of range");
        ComplexMatrix out(rows_, count);
        std::copy_n(data_.data() + first * rows_, count * rows_, out.data_.data());
        return out;
    }

    /// Copy of the listed columns, in the listed order.
    ComplexMatrix select_columns(std::span<const std::size_t> idx) const {
        ComplexMatrix out(rows_, idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] >= cols_) throw DimensionError("ComplexMatrix::select_columns out of range");
            std::copy_n(data_.data() + idx[k] * rows_, rows_, out.data_.data() + k * rows_);
        }
        return out;
    }

    /// [this | other]
    ComplexMatrix hcat(const ComplexMatrix& other) const {
        if (cols_ == 0) return other;
        if (other.cols_ == 0) return *this;
        if (other.rows_ != rows_) throw DimensionError("ComplexMatrix::hcat row mismatch");
        ComplexMatrix out(rows_, cols_ + other.cols_);
        std::copy(data_.begin(), data_.end(), out.data_.begin());
        std::copy(other.data_.begin(), other.data_.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(data_.size()));
        return out;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](const Complex& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
    }

    friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Complex> data_;
};

/// A block of N-vectors, stored column by column.
using BlockVectors = ComplexMatrix;

/// N x N complex Hermitian matrix, full row-major storage. Entries are only
/// written through set(), which keeps (i,j) and (j,i) conjugate.
class DenseHermitian {
public:
    DenseHermitian() = default;
    explicit DenseHermitian(std::size_t n) : n_(n), data_(n * n, Complex{}) {
        if (n == 0) throw PreconditionError("DenseHermitian: order must be positive");
    }

    /// Builds from full row-major storage; rejects data that is not Hermitian
    /// to `rel_tol` (relative to the largest entry). The stored matrix is the
    /// exactly Hermitian lower-triangle completion.
    static DenseHermitian from_row_major(std::size_t n, std::span<const Complex> entries, double rel_tol = 0.0) {
        if (entries.size() != n * n) throw DimensionError("DenseHermitian: entry count is not n*n");
        double amax = 0.0;
        for (const auto& z : entries) amax = std::max(amax, std::abs(z));
        DenseHermitian h(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const Complex lo = entries[i * n + j];
                const Complex up = entries[j * n + i];
                if (std::abs(lo - std::conj(up)) > rel_tol * amax) {
                    throw NotHermitianError("DenseHermitian: entry (" + std::to_string(i) + "," +
                                            std::to_string(j) + ") violates Hermitian symmetry");
                }
                h.set(i, j, lo);
            }
        }
        return h;
    }

    static DenseHermitian diagonal(std::span<const double> d) {
        DenseHermitian h(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) h.set(i, i, d[i]);
        return h;
    }

    std::size_t n() const noexcept { return n_; }

    const Complex& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

    /// Sets (i,j) := z and (j,i) := conj(z). Diagonal entries keep the real part only.
    void set(std::size_t i, std::size_t j, Complex z) {
        if (i == j) {
            data_[i * n_ + i] = Complex(z.real(), 0.0);
        } else {
            data_[i * n_ + j] = z;
            data_[j * n_ + i] = std::conj(z);
        }
    }

    std::span<const Complex> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
    const std::vector<Complex>& storage() const noexcept { return data_; }

    /// Largest |entries(i,j) - conj(entries(j,i))|; zero for anything built through set().
    double hermiticity_defect() const {
        double d = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j <= i; ++j)
                d = std::max(d, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
        return d;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& z : data_) m = std::max(m, std::abs(z));
        return m;
    }

    friend bool operator==(const DenseHermitian&, const DenseHermitian&) = default;

private:
    std::size_t n_ = 0;
    std::vector<Complex> data_;
};

struct SmallEigResult {
    std::vector<double> values;  // ascending
    ComplexMatrix vectors;       // unitary, column k pairs with values[k]
};

struct OrthogonalizeReport {
    BlockVectors vectors;
    std::vector<std::size_t> replaced;  // columns that were annihilated and refilled at random
};

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

inline Complex dot(std::span<const Complex> x, std::span<const Complex> y) {
    // x^H y
    double re = 0.0, im = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double xr = x[k].real(), xi = x[k].imag();
        const double yr = y[k].real(), yi = y[k].imag();
        re += xr * yr + xi * yi;
        im += xr * yi - xi * yr;
    }
    return {re, im};
}

inline double norm2(std::span<const Complex> x) {
    double s = 0.0;
    for (const auto& z : x) s += std::norm(z);
    return std::sqrt(s);
}

inline double frobenius_norm(const ComplexMatrix& a) {
    double s = 0.0;
    for (const auto& z : a.storage()) s += std::norm(z);
    return std::sqrt(s);
}

/// a^H b
inline ComplexMatrix adjoint_times(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.rows() != b.rows()) throw DimensionError("adjoint_times: row mismatch");
    ComplexMatrix c(a.cols(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j)
        for (std::size_t i = 0; i < a.cols(); ++i) c(i, j) = dot(a.col(i), b.col(j));
    return c;
}

/// a b
inline ComplexMatrix times(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("times: inner dimension mismatch");
    ComplexMatrix c(a.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        auto cj = c.col(j);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Complex s = b(k, j);
            if (s == Complex{}) continue;
            auto ak = a.col(k);
            for (std::size_t i = 0; i < a.rows(); ++i) cj[i] += ak[i] * s;
        }
    }
    return c;
}

/// Block of seeded standard-normal complex entries (real and imaginary parts N(0,1)).
inline BlockVectors random_block(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    BlockVectors v(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i) {
            const double re = normal(rng);
            const double im = normal(rng);
            v(i, j) = {re, im};
        }
    return v;
}

// ---------------------------------------------------------------------------
// multiply_block
// ---------------------------------------------------------------------------

namespace detail {

// W[:, 0..ncols) = H * V[:, 0..ncols), both with leading dimension n.
// Each output entry is a fixed-order reduction over one row of H, so the
// result does not depend on how columns are grouped.
inline void multiply_columns(const DenseHermitian& h, const Complex* v, std::size_t ncols, Complex* w) {
    const std::size_t n = h.n();
    const double* hd = reinterpret_cast<const double*>(h.storage().data());
    const double* vd = reinterpret_cast<const double*>(v);
    double* wd = reinterpret_cast<double*>(w);
    for (std::size_t i = 0; i < n; ++i) {
        const double* hr = hd + 2 * i * n;
        for (std::size_t j = 0; j < ncols; ++j) {
            const double* vc = vd + 2 * j * n;
            double re0 = 0.0, im0 = 0.0, re1 = 0.0, im1 = 0.0;
            std::size_t k = 0;
            for (; k + 1 < n; k += 2) {
                re0 += hr[2 * k] * vc[2 * k] - hr[2 * k + 1] * vc[2 * k + 1];
                im0 += hr[2 * k] * vc[2 * k + 1] + hr[2 * k + 1] * vc[2 * k];
                re1 += hr[2 * k + 2] * vc[2 * k + 2] - hr[2 * k + 3] * vc[2 * k + 3];
                im1 += hr[2 * k + 2] * vc[2 * k + 3] + hr[2 * k + 3] * vc[2 * k + 2];
            }
            if (k < n) {
                re0 += hr[2 * k] * vc[2 * k] - hr[2 * k + 1] * vc[2 * k + 1];
                im0 += hr[2 * k] * vc[2 * k + 1] + hr[2 * k + 1] * vc[2 * k];
            }
            wd[2 * (j * n + i)] = re0 + re1;
            wd[2 * (j * n + i) + 1] = im0 + im1;
        }
    }
    matvec_counter += ncols;
}

}  // namespace detail

/// W = H V. Counts V.cols() matrix-vector products.
inline BlockVectors multiply_block(const DenseHermitian& h, const BlockVectors& v) {
    if (v.rows() != h.n()) {
        throw DimensionError("multiply_block: H is " + std::to_string(h.n()) + "x" + std::to_string(h.n()) +
                             " but V has " + std::to_string(v.rows()) + " rows");
    }
    BlockVectors w(v.rows(), v.cols());
    if (v.cols() > 0) detail::multiply_columns(h, v.data(), v.cols(), w.data());
    return w;
}

// ---------------------------------------------------------------------------
// Householder QR
// ---------------------------------------------------------------------------

struct QrFactors {
    BlockVectors q;    // n x b, orthonormal columns
    ComplexMatrix r;   // b x b upper triangular, real positive diagonal
};

/// Thin QR of V by Householder reflections. Q is normalized so that R has a
/// real positive diagonal; an already orthonormal V is returned unchanged up
/// to rounding.
inline QrFactors qr_decompose(const BlockVectors& v) {
    const std::size_t n = v.rows();
    const std::size_t b = v.cols();
    if (b > n) throw DimensionError("qr_orthonormalize: more columns than rows");
    const double vnorm = frobenius_norm(v);
    const double threshold = 1e-14 * vnorm;

    ComplexMatrix a = v;
    std::vector<std::vector<Complex>> reflectors(b);
    std::vector<Complex> rdiag(b);
    for (std::size_t k = 0; k < b; ++k) {
        auto ak = a.col(k);
        double xnorm = 0.0;
        for (std::size_t i = k; i < n; ++i) xnorm += std::norm(ak[i]);
        xnorm = std::sqrt(xnorm);
        if (!(xnorm > threshold)) throw RankDeficiencyError(k, xnorm, threshold);

        const Complex x0 = ak[k];
        const Complex phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : Complex(1.0);
        const Complex alpha = -phase * xnorm;
        std::vector<Complex> u(ak.begin() + static_cast<std::ptrdiff_t>(k), ak.end());
        u[0] -= alpha;
        const double unorm = norm2(u);
        for (auto& z : u) z /= unorm;

        // Apply I - 2 u u^H to the remaining columns.
        for (std::size_t j = k; j < b; ++j) {
            auto aj = a.col(j);
            Complex s{};
            for (std::size_t i = 0; i < u.size(); ++i) s += std::conj(u[i]) * aj[k + i];
            s *= 2.0;
            for (std::size_t i = 0; i < u.size(); ++i) aj[k + i] -= s * u[i];
        }
        rdiag[k] = alpha;
        reflectors[k] = std::move(u);
    }

    // Q = H_0 ... H_{b-1} [I; 0]
    BlockVectors q(n, b);
    for (std::size_t j = 0; j < b; ++j) q(j, j) = 1.0;
    for (std::size_t kk = b; kk-- > 0;) {
        const auto& u = reflectors[kk];
        for (std::size_t j = kk; j < b; ++j) {
            auto qj = q.col(j);
            Complex s{};
            for (std::size_t i = 0; i < u.size(); ++i) s += std::conj(u[i]) * qj[kk + i];
            s *= 2.0;
            for (std::size_t i = 0; i < u.size(); ++i) qj[kk + i] -= s * u[i];
        }
    }

    ComplexMatrix r(b, b);
    for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t i = 0; i < j; ++i) r(i, j) = a(i, j);
        r(j, j) = rdiag[j];
    }
    // Rotate column phases so diag(R) is real positive.
    for (std::size_t k = 0; k < b; ++k) {
        const Complex s = rdiag[k] / std::abs(rdiag[k]);
        for (auto& z : q.col(k)) z *= s;
        for (std::size_t j = k; j < b; ++j) r(k, j) *= std::conj(s);
    }
    return {std::move(q), std::move(r)};
}

inline BlockVectors qr_orthonormalize(const BlockVectors& v) { return qr_decompose(v).q; }

/// max |Q^H Q - I|
inline double orthonormality_defect(const BlockVectors& q) {
    const auto g = adjoint_times(q, q);
    double d = 0.0;
    for (std::size_t j = 0; j < g.cols(); ++j)
        for (std::size_t i = 0; i < g.rows(); ++i)
            d = std::max(d, std::abs(g(i, j) - (i == j ? Complex(1.0) : Complex{})));
    return d;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi for the reduced Hermitian problem
// ---------------------------------------------------------------------------

inline SmallEigResult small_hermitian_eig(const ComplexMatrix& a_in, double hermitian_tol = 1e-12) {
    const std::size_t m = a_in.rows();
    if (m == 0 || a_in.cols() != m) throw DimensionError("small_hermitian_eig: matrix must be square, order >= 1");

    double amax = 0.0, defect = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i) {
            amax = std::max(amax, std::abs(a_in(i, j)));
            defect = std::max(defect, std::abs(a_in(i, j) - std::conj(a_in(j, i))));
        }
    if (defect > hermitian_tol * std::max(1.0, amax)) {
        throw NotHermitianError("small_hermitian_eig: input deviates from Hermitian by " + std::to_string(defect));
    }

    ComplexMatrix a(m, m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i)
            a(i, j) = i == j ? Complex(a_in(i, i).real(), 0.0) : 0.5 * (a_in(i, j) + std::conj(a_in(j, i)));
    ComplexMatrix v = ComplexMatrix::identity(m);

    const double anorm = frobenius_norm(a);
    auto off_mass = [&] {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i < m; ++i)
                if (i != j) s += std::norm(a(i, j));
        return std::sqrt(s);
    };

    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (off_mass() <= 1e-14 * anorm) break;
        for (std::size_t p = 0; p + 1 < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                const Complex apq = a(p, q);
                const double mag = std::abs(apq);
                if (mag == 0.0) continue;
                const double app = a(p, p).real();
                const double aqq = a(q, q).real();
                if (mag < 1e-300) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                const Complex ph = apq / mag;  // e^{i phi}
                const double theta = 0.5 * std::atan2(2.0 * mag, aqq - app);
                const double c = std::cos(theta);
                const double s = std::sin(theta);
                // J = diag(1, conj(ph)) * [[c, s], [-s, c]]
                const Complex jpp = c, jpq = s;
                const Complex jqp = -s * std::conj(ph), jqq = c * std::conj(ph);

                for (std::size_t k = 0; k < m; ++k) {  // A <- A J
                    const Complex akp = a(k, p), akq = a(k, q);
                    a(k, p) = akp * jpp + akq * jqp;
                    a(k, q) = akp * jpq + akq * jqq;
                }
                for (std::size_t k = 0; k < m; ++k) {  // A <- J^H A
                    const Complex apk = a(p, k), aqk = a(q, k);
                    a(p, k) = std::conj(jpp) * apk + std::conj(jqp) * aqk;
                    a(q, k) = std::conj(jpq) * apk + std::conj(jqq) * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                a(p, p) = a(p, p).real();
                a(q, q) = a(q, q).real();
                for (std::size_t k = 0; k < m; ++k) {  // V <- V J
                    const Complex vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = vkp * jpp + vkq * jqp;
                    v(k, q) = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x).real() < a(y, y).real(); });
    SmallEigResult out;
    out.values.resize(m);
    for (std::size_t k = 0; k < m; ++k) out.values[k] = a(order[k], order[k]).real();
    out.vectors = v.select_columns(order);
    return out;
}

// ---------------------------------------------------------------------------
// Block Gram-Schmidt against a locked set
// ---------------------------------------------------------------------------

namespace detail {

inline void project_out(std::span<Complex> x, const BlockVectors& q) {
    for (std::size_t k = 0; k < q.cols(); ++k) {
        const Complex c = dot(q.col(k), x);
        auto qk = q.col(k);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= c * qk[i];
    }
}

// Classical Gram-Schmidt, one pass: V <- V - Q (Q^H V).
inline void cgs_pass(BlockVectors& v, const BlockVectors& q) {
    const auto coef = adjoint_times(q, v);
    for (std::size_t j = 0; j < v.cols(); ++j) {
        auto vj = v.col(j);
        for (std::size_t k = 0; k < q.cols(); ++k) {
            const Complex c = coef(k, j);
            auto qk = q.col(k);
            for (std::size_t i = 0; i < vj.size(); ++i) vj[i] -= c * qk[i];
        }
    }
}

}  // namespace detail

/// Two classical Gram-Schmidt passes of V against `locked`. A column whose
/// norm collapses below 1e-14 of its input norm is replaced by a fresh random
/// unit column orthogonal to `locked` and reported.
inline OrthogonalizeReport orthogonalize_against(const BlockVectors& v, const BlockVectors& locked,
                                                 std::uint64_t seed = 0x5eed) {
    if (locked.cols() == 0) return {v, {}};
    if (locked.rows() != v.rows()) throw DimensionError("orthogonalize_against: row mismatch");
    std::vector<double> before(v.cols());
    for (std::size_t j = 0; j < v.cols(); ++j) before[j] = norm2(v.col(j));

    OrthogonalizeReport rep{v, {}};
    detail::cgs_pass(rep.vectors, locked);
    detail::cgs_pass(rep.vectors, locked);

    std::mt19937_64 rng(seed);
    for (std::size_t j = 0; j < v.cols(); ++j) {
        if (norm2(rep.vectors.col(j)) >= 1e-14 * before[j] && before[j] > 0.0) continue;
        rep.replaced.push_back(j);
        for (int attempt = 0; attempt < 8; ++attempt) {
            auto fresh = random_block(v.rows(), 1, rng);
            detail::cgs_pass(fresh, locked);
            detail::cgs_pass(fresh, locked);
            const double nf = norm2(fresh.col(0));
            if (nf < 1e-8) continue;
            auto col = rep.vectors.col(j);
            for (std::size_t i = 0; i < col.size(); ++i) col[i] = fresh(i, 0) / nf;
            break;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

/// ||H v_i - lambda_i v_i|| for each column, with v_i normalized first.
inline std::vector<double> residual_norms(const DenseHermitian& h, const BlockVectors& v,
                                          std::span<const double> lambdas) {
    if (v.cols() != lambdas.size()) throw DimensionError("residual_norms: column/eigenvalue count mismatch");
    if (v.rows() != h.n()) throw DimensionError("residual_norms: row mismatch");
    BlockVectors u = v;
    for (std::size_t j = 0; j < u.cols(); ++j) {
        const double nj = norm2(u.col(j));
        if (nj > 0.0)
            for (auto& z : u.col(j)) z /= nj;
    }
    const auto hu = multiply_block(h, u);
    std::vector<double> out(u.cols());
    for (std::size_t j = 0; j < u.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) s += std::norm(hu(i, j) - lambdas[j] * u(i, j));
        out[j] = std::sqrt(s);
    }
    return out;
}

/// Full dense eigendecomposition of H through the Jacobi kernel. Meant for
/// small orders only (the dense fallback path of the solvers).
inline SmallEigResult dense_eig(const DenseHermitian& h) {
    ComplexMatrix a(h.n(), h.n());
    for (std::size_t j = 0; j < h.n(); ++j)
        for (std::size_t i = 0; i < h.n(); ++i) a(i, j) = h(i, j);
    return small_hermitian_eig(a);
}

}  // namespace bsechase
