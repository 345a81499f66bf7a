#pragma once

// Finite-dimensional quantum realization: A = B(H (x) K) expected onto B(H)
// by partial expectation against a density matrix rho_K, with processes
//
//     X_t = sum_k e^{2 pi i nu_k t} M_k (x) D_k
//
// whose modes are mean-zero and mutually orthogonal under rho_K. Also the
// Kolmogorov factorization of PSD operator kernels.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qwss/operator_core.hpp"
#include "qwss/spectral_measure.hpp"
#include "qwss/types.hpp"

namespace qwss {

/// E[Z|B] = tr_K((I (x) rho_K) Z), i.e. the unique operator with
/// tr_H(T E[Z|B]) = tr((T (x) rho_K) Z) for all T. H (x) K is indexed as
/// (h, k) -> h * dim_K + k.
inline Matrix conditional_expectation(const Matrix& z, const Matrix& rho_k) {
    if (z.rows() != z.cols()) throw Error(errc::kNotSquare, "conditional_expectation: Z must be square");
    if (rho_k.rows() != rho_k.cols() || rho_k.rows() == 0) {
        throw Error(errc::kNotSquare, "conditional_expectation: rho_K must be square");
    }
    const Eigen::Index dk = rho_k.rows();
    if (z.rows() % dk != 0) {
        throw Error(errc::kDimMismatch, "conditional_expectation: dim(Z) is not a multiple of dim(K)");
    }
    const Eigen::Index dh = z.rows() / dk;
    Matrix out(dh, dh);
    for (Eigen::Index a = 0; a < dh; ++a) {
        for (Eigen::Index b = 0; b < dh; ++b) {
            // sum_{i,j} rho_{ji} Z_{(a,i),(b,j)} = tr(rho^T . block)
            out(a, b) = (rho_k.transpose().cwiseProduct(z.block(a * dk, b * dk, dk, dk))).sum();
        }
    }
    return out;
}

/// <D, E>_rho = tr(rho D^dagger E).
inline Complex rho_inner(const Matrix& rho, const Matrix& d, const Matrix& e) {
    return (rho * d.adjoint() * e).trace();
}

/// Makes candidate K-operators mean-zero (tr(rho D) = 0) and mutually
/// orthogonal in <.,.>_rho by Gram-Schmidt, without normalizing. Operators
/// reduced to zero norm are kept as zero.
inline std::vector<Matrix> orthogonalize_modes(const Matrix& rho_k, const std::vector<Matrix>& candidates) {
    const Eigen::Index dk = rho_k.rows();
    const Matrix id = Matrix::Identity(dk, dk);
    std::vector<Matrix> basis;
    std::vector<double> norms;
    basis.push_back(id);
    norms.push_back(rho_k.trace().real());
    std::vector<Matrix> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        if (c.rows() != dk || c.cols() != dk) throw Error(errc::kDimMismatch, "orthogonalize_modes: wrong shape");
        Matrix e = c;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < basis.size(); ++j) {
                if (norms[j] <= 0.0) continue;
                e -= (rho_inner(rho_k, basis[j], e) / norms[j]) * basis[j];
            }
        }
        const double n = rho_inner(rho_k, e, e).real();
        basis.push_back(e);
        norms.push_back(n > 1e-300 ? n : 0.0);
        out.push_back(e);
    }
    return out;
}

struct QuantumMode {
    double nu = 0.0;
    Matrix m;  ///< on H
    Matrix d;  ///< on K
};

class QuantumModel {
public:
    /// Validates rho_K (PSD, unit trace), mode shapes, mean-zero modes,
    /// orthogonality tr(rho D_j^dagger D_k) = delta_jk s_k and distinct
    /// frequencies, all at 1e-12.
    QuantumModel(Eigen::Index dim_h, Eigen::Index dim_k, Matrix rho_k, std::vector<QuantumMode> modes)
        : dim_h_(dim_h), dim_k_(dim_k), rho_k_(std::move(rho_k)), modes_(std::move(modes)) {
        if (dim_h_ <= 0 || dim_k_ <= 0) throw Error(errc::kInvalidArgument, "quantum model: dims must be positive");
        if (rho_k_.rows() != dim_k_ || rho_k_.cols() != dim_k_) {
            throw Error(errc::kDimMismatch, "quantum model: rho_K has the wrong shape", "rho_k");
        }
        require_psd(rho_k_, "quantum model rho_K", "rho_k");
        if (std::abs(rho_k_.trace() - Complex(1.0, 0.0)) > 1e-12) {
            throw Error(errc::kInvalidArgument, "quantum model: rho_K must have unit trace", "rho_k");
        }
        strengths_.reserve(modes_.size());
        for (std::size_t k = 0; k < modes_.size(); ++k) {
            const std::string loc = "modes[" + std::to_string(k) + "]";
            const auto& md = modes_[k];
            if (!std::isfinite(md.nu)) throw Error(errc::kNonFinite, "quantum model: non-finite mode frequency", loc);
            if (md.m.rows() != dim_h_ || md.m.cols() != dim_h_ || md.d.rows() != dim_k_ || md.d.cols() != dim_k_) {
                throw Error(errc::kDimMismatch, "quantum model: mode operator has the wrong shape", loc);
            }
            if (!all_finite(md.m) || !all_finite(md.d)) throw Error(errc::kNonFinite, "quantum model: non-finite mode operator", loc);
            if (std::abs((rho_k_ * md.d).trace()) > 1e-12) {
                throw Error(errc::kInvalidArgument, "quantum model: mode is not mean-zero (tr(rho_K D) != 0)", loc);
            }
            for (std::size_t j = 0; j < k; ++j) {
                if (modes_[j].nu == md.nu) throw Error(errc::kInvalidArgument, "quantum model: mode frequencies must be distinct", loc);
                if (std::abs(rho_inner(rho_k_, modes_[j].d, md.d)) > 1e-12) {
                    throw Error(errc::kInvalidArgument,
                                "quantum model: modes " + std::to_string(j) + " and " + std::to_string(k) +
                                    " are not orthogonal under rho_K",
                                loc);
                }
            }
            strengths_.push_back(rho_inner(rho_k_, md.d, md.d).real());
        }
    }

    Eigen::Index dim_h() const noexcept { return dim_h_; }
    Eigen::Index dim_k() const noexcept { return dim_k_; }
    const Matrix& rho_k() const noexcept { return rho_k_; }
    const std::vector<QuantumMode>& modes() const noexcept { return modes_; }
    /// s_k = tr(rho_K D_k^dagger D_k).
    const std::vector<double>& strengths() const noexcept { return strengths_; }

private:
    Eigen::Index dim_h_;
    Eigen::Index dim_k_;
    Matrix rho_k_;
    std::vector<QuantumMode> modes_;
    std::vector<double> strengths_;
};

/// X^(f) = sum_k f(nu_k) M_k (x) D_k. With f = e_t this is X_t.
template <class F>
Matrix xhat_apply(const QuantumModel& model, F&& f) {
    const Eigen::Index n = model.dim_h() * model.dim_k();
    Matrix out = Matrix::Zero(n, n);
    for (const auto& md : model.modes()) {
        const Complex c = f(md.nu);
        if (c != Complex(0.0, 0.0)) out += c * kron(md.m, md.d);
    }
    return out;
}

/// X_t.
inline Matrix process_at(const QuantumModel& model, double t) {
    return xhat_apply(model, [t](double nu) { return std::polar(1.0, kTwoPi * nu * t); });
}

/// C_X(tau) = E[X_t^dagger X_{t+tau} | B] = sum_k e^{2 pi i nu_k tau} s_k M_k^dagger M_k.
inline Matrix model_covariance(const QuantumModel& model, double tau) {
    Matrix out = Matrix::Zero(model.dim_h(), model.dim_h());
    for (std::size_t k = 0; k < model.modes().size(); ++k) {
        const auto& md = model.modes()[k];
        out += (model.strengths()[k] * std::polar(1.0, kTwoPi * md.nu * tau)) * (md.m.adjoint() * md.m);
    }
    return tau == 0.0 ? hermitian_part(out) : out;
}

/// Pure-point spectral measure with atoms (nu_k, s_k M_k^dagger M_k).
inline SpectralMeasure model_spectral_measure(const QuantumModel& model) {
    std::vector<std::size_t> order(model.modes().size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return model.modes()[a].nu < model.modes()[b].nu; });
    std::vector<SpectralAtom> atoms;
    atoms.reserve(order.size());
    for (const auto k : order) {
        const auto& md = model.modes()[k];
        atoms.push_back({md.nu, hermitian_part(model.strengths()[k] * (md.m.adjoint() * md.m))});
    }
    return SpectralMeasure(model.dim_h(), std::move(atoms));
}

// ---------------------------------------------------------------------------

struct KolmogorovFactorization {
    Eigen::Index rank = 0;
    /// V_i (rank x d), one per kernel point; K_ij = V_i^dagger V_j.
    std::vector<Matrix> blocks;
};

using KernelBlocks = std::vector<std::vector<Matrix>>;

inline Matrix assemble_block_gram(const KernelBlocks& kernel) {
    const std::size_t n = kernel.size();
    if (n == 0) throw Error(errc::kInvalidArgument, "kernel: need at least one point");
    const Eigen::Index d = kernel[0][0].rows();
    if (d == 0) throw Error(errc::kInvalidArgument, "kernel: empty blocks");
    Matrix g(static_cast<Eigen::Index>(n) * d, static_cast<Eigen::Index>(n) * d);
    for (std::size_t i = 0; i < n; ++i) {
        if (kernel[i].size() != n) throw Error(errc::kDimMismatch, "kernel: block array is not square", "blocks[" + std::to_string(i) + "]");
        for (std::size_t j = 0; j < n; ++j) {
            const auto& b = kernel[i][j];
            if (b.rows() != d || b.cols() != d) {
                throw Error(errc::kDimMismatch, "kernel: inconsistent block shape",
                            "blocks[" + std::to_string(i) + "][" + std::to_string(j) + "]");
            }
            g.block(static_cast<Eigen::Index>(i) * d, static_cast<Eigen::Index>(j) * d, d, d) = b;
        }
    }
    if (!all_finite(g)) throw Error(errc::kNonFinite, "kernel: non-finite entries");
    return g;
}

/// Minimal factorization K_ij = V_i^dagger V_j of a PSD block kernel from the
/// eigendecomposition of its block Gram. Eigenvalues at or below
/// 1e-9 * lambda_max are treated as zero. Non-PSD kernels are rejected with the
/// witness eigenvalue.
inline KolmogorovFactorization kolmogorov_decompose(const KernelBlocks& kernel) {
    const Matrix g = assemble_block_gram(kernel);
    const Eigen::Index d = kernel[0][0].rows();
    const std::size_t n = kernel.size();
    if (!is_psd(g, kTolPsd)) {
        const double w = min_hermitian_eigenvalue(g);
        throw Error(errc::kNotPsd, "kolmogorov_decompose: kernel is not positive semidefinite (min eigenvalue " + std::to_string(w) + ")",
                    "blocks", w);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian_part(g));
    if (es.info() != Eigen::Success) throw Error(errc::kNumerical, "kolmogorov_decompose: eigensolver failed");
    const RealVector& ev = es.eigenvalues();
    const double lmax = ev(ev.size() - 1);
    const double cut = 1e-9 * lmax;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
        if (lmax > 0.0 && ev(i) > cut) keep.push_back(i);
    }
    const auto r = static_cast<Eigen::Index>(keep.size());
    Matrix v(r, g.cols());
    for (Eigen::Index row = 0; row < r; ++row) {
        const Eigen::Index i = keep[static_cast<std::size_t>(row)];
        v.row(row) = std::sqrt(ev(i)) * es.eigenvectors().col(i).adjoint();
    }
    KolmogorovFactorization out;
    out.rank = r;
    out.blocks.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.blocks.push_back(v.middleCols(static_cast<Eigen::Index>(i) * d, d));
    return out;
}

/// Blocks V_i^dagger V_j of a factorization.
inline KernelBlocks reconstruct_kernel(const KolmogorovFactorization& f) {
    KernelBlocks out(f.blocks.size());
    for (std::size_t i = 0; i < f.blocks.size(); ++i) {
        out[i].reserve(f.blocks.size());
        for (const auto& vj : f.blocks) out[i].push_back(f.blocks[i].adjoint() * vj);
    }
    return out;
}

}  // namespace qwss
