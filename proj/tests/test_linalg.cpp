#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "bsechase/linalg.hpp"
#include "oracles.hpp"

using namespace bsechase;

namespace {

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

double gram_defect(const ComplexMatrix& q) {
    const auto g = adjoint_times(q, q);
    double m = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) m = std::max(m, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return m;
}

ComplexMatrix random_unitary(std::size_t m, std::uint64_t seed) {
    auto a = oracle::random_matrix(m, m, seed);
    return qr_orthonormalize(a);
}

}  // namespace

// ---------------------------------------------------------------- storage

TEST(DenseHermitian, SetWritesConjugatePair) {
    DenseHermitian h(3);
    h.set(2, 0, {1.0, 2.0});
    EXPECT_EQ(h(2, 0), Complex(1.0, 2.0));
    EXPECT_EQ(h(0, 2), Complex(1.0, -2.0));
    EXPECT_EQ(h.hermiticity_defect(), 0.0);
}

TEST(DenseHermitian, FromRowMajorRejectsNonHermitian) {
    std::vector<Complex> e{{1, 0}, {2, 1}, {2, 1}, {3, 0}};
    EXPECT_THROW(DenseHermitian::from_row_major(2, e, 0.0), NotHermitianError);
    e[2] = {2, -1};
    EXPECT_NO_THROW(DenseHermitian::from_row_major(2, e, 0.0));
}

TEST(DenseHermitian, ZeroOrderRejected) { EXPECT_THROW(DenseHermitian(0), Error); }

// ---------------------------------------------------------------- multiply

TEST(MultiplyBlock, IdentityReturnsInput) {
    std::vector<double> ones(5, 1.0);
    const auto h = DenseHermitian::diagonal(ones);
    const auto v = oracle::random_matrix(5, 2, 11);
    EXPECT_EQ(multiply_block(h, v), v);
}

TEST(MultiplyBlock, ZeroBlockGivesZero) {
    const auto h = oracle::random_hermitian(7, 3);
    const ComplexMatrix v(7, 2);
    const auto w = multiply_block(h, v);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(w(i, j), Complex{});
}

TEST(MultiplyBlock, MatchesNaiveTripleLoop) {
    const auto h = oracle::random_hermitian(16, 5);
    const auto v = oracle::random_matrix(16, 3, 6);
    const auto w = multiply_block(h, v);
    const auto ref = oracle::naive_multiply(h, v);
    EXPECT_LE(max_abs_diff(w, ref), 1e-13 * frobenius_norm(ref));
}

TEST(MultiplyBlock, DimensionMismatchThrows) {
    const auto h = oracle::random_hermitian(4, 1);
    EXPECT_THROW(multiply_block(h, ComplexMatrix(5, 1)), DimensionError);
}

TEST(MultiplyBlock, CountsOneMatvecPerColumn) {
    const auto h = oracle::random_hermitian(9, 2);
    reset_matvec_count();
    multiply_block(h, oracle::random_matrix(9, 4, 3));
    EXPECT_EQ(matvec_count(), 4u);
}

TEST(MultiplyBlock, DistributesOverColumnConcatenationBitwise) {
    const auto h = oracle::random_hermitian(23, 8);
    const auto v1 = oracle::random_matrix(23, 3, 1), v2 = oracle::random_matrix(23, 2, 2);
    const auto joint = multiply_block(h, v1.hcat(v2));
    EXPECT_EQ(joint, multiply_block(h, v1).hcat(multiply_block(h, v2)));
}

// ---------------------------------------------------------------- QR

TEST(QrOrthonormalize, OrthonormalInputUnchangedUpToPhase) {
    const auto v = random_unitary(8, 4).columns(0, 3);
    const auto q = qr_orthonormalize(v);
    for (std::size_t j = 0; j < 3; ++j) {
        const Complex ph = dot(q.col(j), v.col(j));
        EXPECT_NEAR(std::abs(ph), 1.0, 1e-12);
        for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(std::abs(q(i, j) * ph - v(i, j)), 0.0, 1e-12);
    }
}

TEST(QrOrthonormalize, RandomBlockReconstructs) {
    const auto v = oracle::random_matrix(8, 3, 17);
    const auto f = qr_decompose(v);
    EXPECT_LE(gram_defect(f.q), 1e-12);
    EXPECT_LE(max_abs_diff(times(f.q, f.r), v), 1e-12 * frobenius_norm(v));
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_GT(f.r(k, k).real(), 0.0);
        EXPECT_EQ(f.r(k, k).imag(), 0.0);
        for (std::size_t i = k + 1; i < 3; ++i) EXPECT_EQ(f.r(i, k), Complex{});
    }
}

TEST(QrOrthonormalize, DuplicatedColumnReportsRankDeficiency) {
    auto v = oracle::random_matrix(8, 3, 4);
    std::copy(v.col(0).begin(), v.col(0).end(), v.col(2).begin());
    try {
        qr_orthonormalize(v);
        FAIL() << "expected rank deficiency";
    } catch (const RankDeficiencyError& e) {
        EXPECT_EQ(e.column(), 2u);
    }
}

TEST(QrOrthonormalize, IdempotentInSpan) {
    const auto q1 = qr_orthonormalize(oracle::random_matrix(20, 5, 9));
    const auto q2 = qr_orthonormalize(q1);
    for (std::size_t j = 0; j < 5; ++j) {
        const Complex ph = dot(q1.col(j), q2.col(j));
        for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(std::abs(q2(i, j) - q1(i, j) * ph), 0.0, 1e-12);
    }
}

// ---------------------------------------------------------------- small eigensolver

TEST(SmallHermitianEig, DiagonalSorted) {
    ComplexMatrix a(3, 3);
    a(0, 0) = 3;
    a(1, 1) = 1;
    a(2, 2) = 2;
    const auto r = small_hermitian_eig(a);
    EXPECT_EQ(r.values, (std::vector<double>{1, 2, 3}));
}

TEST(SmallHermitianEig, IdentityAllOnes) {
    const auto r = small_hermitian_eig(ComplexMatrix::identity(4));
    for (double v : r.values) EXPECT_EQ(v, 1.0);
    EXPECT_LE(gram_defect(r.vectors), 1e-12);
}

TEST(SmallHermitianEig, RandomMatchesRealEmbeddingJacobi) {
    const auto h = oracle::random_hermitian(10, 21);
    ComplexMatrix a(10, 10);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j) a(i, j) = h(i, j);
    const auto r = small_hermitian_eig(a);
    const auto ref = oracle::jacobi_eigenvalues(a);
    ASSERT_EQ(r.values.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(r.values[i], ref[i], 1e-11);
    EXPECT_TRUE(std::is_sorted(r.values.begin(), r.values.end()));
    EXPECT_LE(gram_defect(r.vectors), 1e-12);
    // Eigen-equation residual.
    const auto av = times(a, r.vectors);
    for (std::size_t k = 0; k < 10; ++k)
        for (std::size_t i = 0; i < 10; ++i)
            EXPECT_NEAR(std::abs(av(i, k) - r.values[k] * r.vectors(i, k)), 0.0, 1e-11 * frobenius_norm(a));
}

TEST(SmallHermitianEig, RejectsNonHermitian) {
    ComplexMatrix a(2, 2);
    a(0, 1) = 1.0;
    EXPECT_THROW(small_hermitian_eig(a), NotHermitianError);
}

TEST(SmallHermitianEig, InvariantUnderUnitarySimilarity) {
    const auto h = oracle::random_hermitian(12, 31);
    ComplexMatrix a(12, 12);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 12; ++j) a(i, j) = h(i, j);
    const auto u = random_unitary(12, 32);
    auto b = adjoint_times(u, times(a, u));
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const Complex avg = 0.5 * (b(i, j) + std::conj(b(j, i)));
            b(i, j) = avg;
            b(j, i) = std::conj(avg);
        }
    const auto ra = small_hermitian_eig(a), rb = small_hermitian_eig(b);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_NEAR(ra.values[i], rb.values[i], 1e-11);
}

TEST(SmallHermitianEig, EigenvaluesSumToTrace) {
    const auto h = oracle::random_hermitian(15, 41);
    ComplexMatrix a(15, 15);
    double trace = 0.0;
    for (std::size_t i = 0; i < 15; ++i) {
        trace += h(i, i).real();
        for (std::size_t j = 0; j < 15; ++j) a(i, j) = h(i, j);
    }
    const auto r = small_hermitian_eig(a);
    EXPECT_NEAR(std::accumulate(r.values.begin(), r.values.end(), 0.0), trace, 1e-10 * frobenius_norm(a));
}

// ---------------------------------------------------------------- orthogonalization

TEST(OrthogonalizeAgainst, EmptyLockedIsIdentity) {
    const auto v = oracle::random_matrix(6, 2, 5);
    const auto r = orthogonalize_against(v, ComplexMatrix(6, 0));
    EXPECT_EQ(r.vectors, v);
    EXPECT_TRUE(r.replaced.empty());
}

TEST(OrthogonalizeAgainst, ColumnInsideLockedSpanIsReplaced) {
    const auto q = qr_orthonormalize(oracle::random_matrix(10, 3, 7));
    ComplexMatrix v(10, 1);
    for (std::size_t i = 0; i < 10; ++i) v(i, 0) = 0.5 * q(i, 0) - 2.0 * q(i, 2);
    const auto r = orthogonalize_against(v, q);
    ASSERT_EQ(r.replaced.size(), 1u);
    EXPECT_EQ(r.replaced[0], 0u);
    EXPECT_LE(std::abs(adjoint_times(q, r.vectors)(0, 0)), 1e-12);
    EXPECT_GT(norm2(r.vectors.col(0)), 0.5);
}

TEST(OrthogonalizeAgainst, RandomBlockIsOrthogonal) {
    const auto q = qr_orthonormalize(oracle::random_matrix(40, 6, 8));
    const auto v = oracle::random_matrix(40, 4, 9);
    const auto r = orthogonalize_against(v, q);
    const auto c = adjoint_times(q, r.vectors);
    for (std::size_t j = 0; j < c.cols(); ++j)
        for (std::size_t i = 0; i < c.rows(); ++i) EXPECT_LE(std::abs(c(i, j)), 1e-12 * frobenius_norm(r.vectors));
}

// ---------------------------------------------------------------- residuals

TEST(ResidualNorms, ExactEigenpairsAreZero) {
    const std::vector<double> d{1, 2, 3};
    const auto h = DenseHermitian::diagonal(d);
    const auto r = residual_norms(h, ComplexMatrix::identity(3), d);
    for (double x : r) EXPECT_LE(x, 1e-14);
}

TEST(ResidualNorms, WrongEigenvalueGivesDistance) {
    const std::vector<double> d{1, 2};
    ComplexMatrix v(2, 1);
    v(0, 0) = 1.0;
    const auto r = residual_norms(DenseHermitian::diagonal(d), v, std::vector<double>{0.0});
    EXPECT_DOUBLE_EQ(r[0], 1.0);
}

TEST(ResidualNorms, MatchesDirectEvaluation) {
    const auto h = oracle::random_hermitian(30, 12);
    auto v = oracle::random_matrix(30, 1, 13);
    const double nv = norm2(v.col(0));
    for (auto& z : v.col(0)) z /= nv;
    const auto hv = oracle::naive_multiply(h, v);
    const double lambda = dot(v.col(0), hv.col(0)).real();
    double s = 0.0;
    for (std::size_t i = 0; i < 30; ++i) s += std::norm(hv(i, 0) - lambda * v(i, 0));
    const auto r = residual_norms(h, v, std::vector<double>{lambda});
    EXPECT_NEAR(r[0], std::sqrt(s), 1e-13 * std::max(1.0, std::sqrt(s)));
}

TEST(ResidualNorms, LengthMismatchThrows) {
    const auto h = oracle::random_hermitian(4, 1);
    EXPECT_THROW(residual_norms(h, oracle::random_matrix(4, 2, 1), std::vector<double>{1.0}), DimensionError);
}
