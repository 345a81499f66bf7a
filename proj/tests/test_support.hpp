#pragma once

// Shared helpers for the test suites: seeded random matrices and quadrature
// oracles. Oracles use Boost.Math quadrature and Eigen's own decompositions,
// never the library routine under test.

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <random>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "qwss/types.hpp"

namespace qwss::testing {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }

    Matrix gaussian(Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = Complex(normal(), normal());
        return m;
    }

    /// G^dagger G with G of the given rank (default full).
    Matrix psd(Eigen::Index dim, Eigen::Index rank = -1) {
        const Eigen::Index r = rank < 0 ? dim : rank;
        const Matrix g = gaussian(r, dim);
        return g.adjoint() * g;
    }

    /// Hermitian positive definite with spectrum in [lo, hi].
    Matrix positive_definite(Eigen::Index dim, double lo = 0.5, double hi = 3.0) {
        const Matrix q = gaussian(dim, dim).householderQr().householderQ();
        Eigen::VectorXd ev(dim);
        for (Eigen::Index i = 0; i < dim; ++i) ev(i) = uniform(lo, hi);
        return q * ev.cast<Complex>().asDiagonal() * q.adjoint();
    }

    /// Random density matrix.
    Matrix density_matrix(Eigen::Index dim) {
        const Matrix p = psd(dim);
        return p / p.trace();
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline double frob(const Matrix& m) { return m.norm(); }

/// exp(-gamma * s) for Hermitian gamma from its eigendecomposition.
inline Matrix hermitian_exp_neg(const Matrix& gamma, double s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gamma);
    const Eigen::VectorXd e = (-s * es.eigenvalues()).array().exp();
    return es.eigenvectors() * e.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

/// Entry-wise integral of a matrix-valued function over [0, inf).
inline Matrix integrate_half_line(const std::function<Matrix(double)>& f, Eigen::Index rows, Eigen::Index cols) {
    boost::math::quadrature::exp_sinh<double> integrator;
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
            const double re = integrator.integrate([&](double s) { return f(s)(i, k).real(); }, 0.0,
                                                   std::numeric_limits<double>::infinity(), 1e-13);
            const double im = integrator.integrate([&](double s) { return f(s)(i, k).imag(); }, 0.0,
                                                   std::numeric_limits<double>::infinity(), 1e-13);
            out(i, k) = {re, im};
        }
    }
    return out;
}

/// Entry-wise adaptive Gauss-Kronrod integral of a matrix-valued function over [a, b].
inline Matrix integrate_interval(const std::function<Matrix(double)>& f, double a, double b, Eigen::Index rows,
                                 Eigen::Index cols, unsigned depth = 25) {
    using boost::math::quadrature::gauss_kronrod;
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
            const double re = gauss_kronrod<double, 61>::integrate([&](double x) { return f(x)(i, k).real(); }, a, b, depth, 1e-13);
            const double im = gauss_kronrod<double, 61>::integrate([&](double x) { return f(x)(i, k).imag(); }, a, b, depth, 1e-13);
            out(i, k) = {re, im};
        }
    }
    return out;
}

/// Lyapunov oracle: \int_0^inf e^{-Gamma s} S e^{-Gamma s} ds by quadrature.
inline Matrix lyapunov_by_quadrature(const Matrix& gamma, const Matrix& s) {
    return integrate_half_line(
        [&](double t) {
            const Matrix e = hermitian_exp_neg(gamma, t);
            return Matrix(e * s * e);
        },
        s.rows(), s.cols());
}

}  // namespace qwss::testing
