#pragma once

// Dense complex matrix primitives: PSD predicates and projection, matrix
// exponential, PSD square root, resolvent and the Hermitian Lyapunov solver.
// Matrices are small (dim <= 16) and stored dense.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "qwss/types.hpp"

namespace qwss {

namespace detail {

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw Error(errc::kNotSquare,
                    std::string(what) + ": matrix is " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
}

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Eigenvalues of the Hermitian part of `m`, ascending.
inline RealVector hermitian_eigenvalues(const Matrix& m) {
    detail::require_square(m, "hermitian_eigenvalues");
    if (m.size() == 0) return RealVector{};
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
        throw Error(errc::kNumerical, "hermitian_eigenvalues: eigensolver failed");
    }
    return es.eigenvalues();
}

inline double min_hermitian_eigenvalue(const Matrix& m) {
    const RealVector ev = hermitian_eigenvalues(m);
    return ev.size() == 0 ? 0.0 : ev(0);
}

/// True iff `m` is Hermitian within `tol` and its smallest eigenvalue is at
/// least -tol, with both tolerances scaled by the matrix norm when it exceeds 1.
inline bool is_psd(const Matrix& m, double tol = kTolPsd) {
    detail::require_square(m, "is_psd");
    if (!all_finite(m)) return false;
    const RealVector ev = hermitian_eigenvalues(m);
    if (ev.size() == 0) return true;
    const double scale = std::max({1.0, std::abs(ev(0)), std::abs(ev(ev.size() - 1))});
    if (detail::max_abs(m - m.adjoint()) > tol * scale) return false;
    return ev(0) >= -tol * scale;
}

/// Throws kNotPsd with the witness eigenvalue if `m` fails `is_psd`.
inline void require_psd(const Matrix& m, const std::string& what, const std::string& location = {},
                        double tol = kTolPsd) {
    detail::require_square(m, what.c_str());
    if (!all_finite(m)) throw Error(errc::kNonFinite, what + ": non-finite entries", location);
    if (!is_psd(m, tol)) {
        const double w = min_hermitian_eigenvalue(m);
        throw Error(errc::kNotPsd,
                    what + ": matrix is not positive semidefinite (min eigenvalue " + std::to_string(w) + ")",
                    location, w);
    }
}

/// Nearest PSD matrix in Frobenius norm: Hermitize, clip negative eigenvalues.
inline Matrix nearest_psd(const Matrix& m) {
    detail::require_square(m, "nearest_psd");
    if (m.size() == 0) return m;
    if (!all_finite(m)) throw Error(errc::kNonFinite, "nearest_psd: non-finite entries");
    const Matrix h = hermitian_part(m);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) throw Error(errc::kNumerical, "nearest_psd: eigensolver failed");
    const RealVector& ev = es.eigenvalues();
    if (ev(0) >= 0.0) return h;
    const RealVector clipped = ev.cwiseMax(0.0);
    const Matrix& u = es.eigenvectors();
    return hermitian_part(u * clipped.cast<Complex>().asDiagonal() * u.adjoint());
}

/// exp(M) by scaling and squaring with a degree-13 Pade approximant.
inline Matrix matrix_exp(const Matrix& m) {
    detail::require_square(m, "matrix_exp");
    const Eigen::Index n = m.rows();
    if (n == 0) return m;
    if (!all_finite(m)) throw Error(errc::kNonFinite, "matrix_exp: non-finite entries");
    if (m.isZero(0.0)) return Matrix::Identity(n, n);

    static constexpr std::array<double, 14> b = {
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
        129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
        1323241920.0,        40840800.0,          960960.0,           16380.0,
        182.0,               1.0};
    constexpr double theta13 = 5.371920351148152;

    const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    if (squarings > 1000) throw Error(errc::kNumerical, "matrix_exp: norm too large");

    const Matrix a = m / std::ldexp(1.0, squarings);
    const Matrix id = Matrix::Identity(n, n);
    const Matrix a2 = a * a;
    const Matrix a4 = a2 * a2;
    const Matrix a6 = a4 * a2;
    const Matrix u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
    const Matrix u = a * (a6 * u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
    const Matrix v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
    const Matrix v = a6 * v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int i = 0; i < squarings; ++i) r = r * r;
    if (!all_finite(r)) throw Error(errc::kNumerical, "matrix_exp: overflow");
    return r;
}

/// Hermitian square root of a PSD matrix (negative roundoff eigenvalues clipped).
inline Matrix psd_sqrt(const Matrix& m) {
    require_psd(m, "psd_sqrt");
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(m));
    if (es.info() != Eigen::Success) throw Error(errc::kNumerical, "psd_sqrt: eigensolver failed");
    const RealVector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix& u = es.eigenvectors();
    return hermitian_part(u * root.cast<Complex>().asDiagonal() * u.adjoint());
}

/// Throws unless `gamma` is Hermitian with strictly positive spectrum.
inline void require_positive_definite(const Matrix& gamma, const std::string& what) {
    detail::require_square(gamma, what.c_str());
    if (!all_finite(gamma)) throw Error(errc::kNonFinite, what + ": non-finite entries");
    if (gamma.size() == 0) return;
    const double scale = std::max(1.0, detail::max_abs(gamma));
    if (detail::max_abs(gamma - gamma.adjoint()) > kTolPsd * scale) {
        throw Error(errc::kNotPositiveDefinite, what + ": damping matrix is not Hermitian");
    }
    const double lmin = min_hermitian_eigenvalue(gamma);
    if (!(lmin > 0.0)) {
        throw Error(errc::kNotPositiveDefinite,
                    what + ": matrix is not positive definite (min eigenvalue " + std::to_string(lmin) + ")",
                    {}, lmin);
    }
}

/// (Gamma - 2 pi i nu I)^{-1}: the frequency response of e^{-Gamma t} theta(t)
/// under the e^{+2 pi i t nu} transform convention.
inline Matrix resolvent(const Matrix& gamma, double nu) {
    require_positive_definite(gamma, "resolvent");
    const Eigen::Index n = gamma.rows();
    const Matrix shifted = gamma - Complex(0.0, kTwoPi * nu) * Matrix::Identity(n, n);
    Eigen::PartialPivLU<Matrix> lu(shifted);
    Matrix out = lu.solve(Matrix::Identity(n, n));
    // one refinement step keeps the residual at roundoff for large |nu|
    out += lu.solve(Matrix::Identity(n, n) - shifted * out);
    return out;
}

/// Solves Gamma M + M Gamma = S for Hermitian positive definite Gamma via the
/// eigenbasis of Gamma: M_jk = S'_jk / (g_j + g_k).
inline Matrix solve_lyapunov(const Matrix& gamma, const Matrix& s) {
    require_positive_definite(gamma, "solve_lyapunov");
    detail::require_square(s, "solve_lyapunov");
    if (s.rows() != gamma.rows()) {
        throw Error(errc::kDimMismatch, "solve_lyapunov: Gamma and S dimensions differ");
    }
    if (!all_finite(s)) throw Error(errc::kNonFinite, "solve_lyapunov: non-finite S");
    if (gamma.size() == 0) return s;
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(gamma));
    if (es.info() != Eigen::Success) throw Error(errc::kNumerical, "solve_lyapunov: eigensolver failed");
    const Matrix& u = es.eigenvectors();
    const RealVector& g = es.eigenvalues();
    Matrix t = u.adjoint() * s * u;
    for (Eigen::Index j = 0; j < t.rows(); ++j) {
        for (Eigen::Index k = 0; k < t.cols(); ++k) t(j, k) /= (g(j) + g(k));
    }
    Matrix m = u * t * u.adjoint();
    if (is_psd(s)) m = hermitian_part(m);
    return m;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

}  // namespace qwss
