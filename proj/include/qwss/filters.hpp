#pragma once

// Linear filters acting through operator-valued characteristic functions.
// A filter maps dS(nu) to psi(nu)^dagger dS(nu) psi(nu); psi multiplies the
// spectral increment from the right, so composing L1 then L2 gives psi1*psi2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qwss/operator_core.hpp"
#include "qwss/spectral_measure.hpp"
#include "qwss/types.hpp"

namespace qwss {

/// (LX)_t = X_{t+s}
struct ShiftFilter {
    double s = 0.0;
};

/// (LX)_t = dX_t/dt
struct DerivativeFilter {};

/// Convolution with a scalar kernel h, given through its transform hhat(nu).
struct ScalarConvolutionFilter {
    std::function<Complex(double)> hhat;
    /// Whether |hhat|^2 is integrable over the whole line. Decides the domain
    /// question for full-line white noise.
    bool square_integrable = false;
    /// Present when hhat is piecewise constant on a grid (serializable form).
    std::optional<std::pair<std::vector<double>, std::vector<Complex>>> table;
};

/// Convolution with h(t) = e^{-Gamma t} A theta(t).
struct ExpOperatorFilter {
    Matrix gamma;
    Matrix a;
};

/// Piecewise-constant psi on bins [edges[i], edges[i+1]).
struct TabulatedFilter {
    std::vector<double> edges;
    std::vector<Matrix> values;
};

class FilterSpec {
public:
    using Variant = std::variant<ShiftFilter, DerivativeFilter, ScalarConvolutionFilter, ExpOperatorFilter, TabulatedFilter>;

    static FilterSpec shift(Eigen::Index dim, double s) {
        if (!std::isfinite(s)) throw Error(errc::kInvalidArgument, "shift filter: non-finite shift");
        return FilterSpec(dim, ShiftFilter{s});
    }

    static FilterSpec derivative(Eigen::Index dim) { return FilterSpec(dim, DerivativeFilter{}); }

    static FilterSpec scalar_convolution(Eigen::Index dim, std::function<Complex(double)> hhat,
                                         bool square_integrable = false) {
        if (!hhat) throw Error(errc::kInvalidArgument, "scalar convolution: empty transform");
        return FilterSpec(dim, ScalarConvolutionFilter{std::move(hhat), square_integrable, std::nullopt});
    }

    /// Scalar convolution whose transform is tabulated per bin.
    static FilterSpec scalar_convolution(Eigen::Index dim, std::vector<double> edges, std::vector<Complex> values) {
        check_edges(edges, values.size(), "scalar convolution");
        auto fn = [edges, values](double nu) -> Complex {
            return values[bin_index(edges, nu, "scalar convolution")];
        };
        return FilterSpec(dim, ScalarConvolutionFilter{std::move(fn), false, std::make_pair(edges, values)});
    }

    static FilterSpec exp_operator(Matrix gamma, Matrix a) {
        require_positive_definite(gamma, "exp-operator filter");
        if (a.rows() != gamma.rows() || a.cols() != gamma.cols()) {
            throw Error(errc::kDimMismatch, "exp-operator filter: A must match Gamma's shape");
        }
        if (!all_finite(a)) throw Error(errc::kNonFinite, "exp-operator filter: non-finite A");
        const Eigen::Index dim = gamma.rows();
        return FilterSpec(dim, ExpOperatorFilter{std::move(gamma), std::move(a)});
    }

    static FilterSpec tabulated(std::vector<double> edges, std::vector<Matrix> values) {
        check_edges(edges, values.size(), "tabulated filter");
        const Eigen::Index dim = values.front().rows();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].rows() != dim || values[i].cols() != dim) {
                throw Error(errc::kDimMismatch, "tabulated filter: inconsistent value shapes", "values[" + std::to_string(i) + "]");
            }
            if (!all_finite(values[i])) throw Error(errc::kNonFinite, "tabulated filter: non-finite value", "values[" + std::to_string(i) + "]");
        }
        return FilterSpec(dim, TabulatedFilter{std::move(edges), std::move(values)});
    }

    Eigen::Index dim() const noexcept { return dim_; }
    const Variant& kind() const noexcept { return kind_; }

    template <class T>
    const T* as() const noexcept {
        return std::get_if<T>(&kind_);
    }

    static std::size_t bin_index(const std::vector<double>& edges, double nu, const char* what) {
        if (!(nu >= edges.front() && nu <= edges.back())) {
            throw Error(errc::kDomain, std::string(what) + ": nu = " + std::to_string(nu) + " outside tabulated grid");
        }
        const auto it = std::upper_bound(edges.begin(), edges.end(), nu);
        const auto idx = static_cast<std::size_t>(std::distance(edges.begin(), it));
        return std::min(idx, edges.size() - 1) - 1;
    }

private:
    FilterSpec(Eigen::Index dim, Variant kind) : dim_(dim), kind_(std::move(kind)) {
        if (dim_ <= 0) throw Error(errc::kInvalidArgument, "filter: dim must be positive");
    }

    static void check_edges(const std::vector<double>& edges, std::size_t nvalues, const char* what) {
        if (nvalues == 0 || edges.size() != nvalues + 1) {
            throw Error(errc::kInvalidArgument, std::string(what) + ": need bins >= 1 and edges = bins + 1");
        }
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (!std::isfinite(edges[i]) || (i > 0 && !(edges[i - 1] < edges[i]))) {
                throw Error(errc::kInvalidArgument, std::string(what) + ": grid must be finite and strictly increasing",
                            "edges[" + std::to_string(i) + "]");
            }
        }
    }

    Eigen::Index dim_;
    Variant kind_;
};

/// psi_L(nu).
inline Matrix eval_characteristic(const FilterSpec& filter, double nu) {
    const Eigen::Index d = filter.dim();
    const Matrix id = Matrix::Identity(d, d);
    return std::visit(
        [&](const auto& f) -> Matrix {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, ShiftFilter>) {
                return std::polar(1.0, kTwoPi * f.s * nu) * id;
            } else if constexpr (std::is_same_v<T, DerivativeFilter>) {
                return Complex(0.0, kTwoPi * nu) * id;
            } else if constexpr (std::is_same_v<T, ScalarConvolutionFilter>) {
                return f.hhat(nu) * id;
            } else if constexpr (std::is_same_v<T, ExpOperatorFilter>) {
                return resolvent(f.gamma, nu) * f.a;
            } else {
                return f.values[FilterSpec::bin_index(f.edges, nu, "tabulated filter")];
            }
        },
        filter.kind());
}

/// Whether \int psi^dagger dS psi is finite. Full-line white noise is decided
/// per variant from the tail of |psi|^2; other measures have compact support
/// and need psi finite (and defined) at every atom and bin midpoint.
inline bool in_domain(const SpectralMeasure& mu, const FilterSpec& filter) {
    if (mu.dim() != filter.dim()) return false;
    if (mu.is_symbolic()) {
        if (mu.full_line_level()->isZero(0.0)) return true;
        return std::visit(
            [](const auto& f) {
                using T = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<T, ScalarConvolutionFilter>) return f.square_integrable;
                return std::is_same_v<T, ExpOperatorFilter>;
            },
            filter.kind());
    }
    const auto finite_at = [&](double nu) {
        try {
            return all_finite(eval_characteristic(filter, nu));
        } catch (const Error&) {
            return false;
        }
    };
    for (const auto& a : mu.atoms()) {
        if (!finite_at(a.nu)) return false;
    }
    if (const auto& d = mu.density()) {
        for (std::size_t i = 0; i < d->bins(); ++i) {
            if (!finite_at(d->midpoint(i))) return false;
        }
    }
    return true;
}

/// dS_LX = psi^dagger dS_X psi, atoms at their frequency, bins at their midpoint.
inline SpectralMeasure apply_filter(const SpectralMeasure& mu, const FilterSpec& filter) {
    if (mu.dim() != filter.dim()) throw Error(errc::kDimMismatch, "apply_filter: measure and filter dims differ");
    mu.require_numeric("apply_filter");
    if (!in_domain(mu, filter)) throw Error(errc::kDomain, "apply_filter: measure outside the filter's domain");
    // |e^{2 pi i s nu}|^2 = 1: shifts leave the measure exactly invariant
    if (filter.as<ShiftFilter>()) return mu;

    const auto congruence = [&](const Matrix& w, double nu, const std::string& loc) {
        const Matrix psi = eval_characteristic(filter, nu);
        Matrix out = hermitian_part(psi.adjoint() * w * psi);
        if (!is_psd(out, 1e-12)) {
            throw Error(errc::kNumerical, "apply_filter: congruence lost positivity", loc, min_hermitian_eigenvalue(out));
        }
        return out;
    };

    std::vector<SpectralAtom> atoms;
    atoms.reserve(mu.atoms().size());
    for (std::size_t k = 0; k < mu.atoms().size(); ++k) {
        const auto& a = mu.atoms()[k];
        atoms.push_back({a.nu, congruence(a.weight, a.nu, "atoms[" + std::to_string(k) + "]")});
    }
    std::optional<DensityGrid> density;
    if (const auto& d = mu.density()) {
        DensityGrid g{d->nu_min, d->nu_max, {}};
        g.values.reserve(d->bins());
        for (std::size_t i = 0; i < d->bins(); ++i) {
            g.values.push_back(congruence(d->values[i], d->midpoint(i), "density.values[" + std::to_string(i) + "]"));
        }
        density = std::move(g);
    }
    return SpectralMeasure(mu.dim(), std::move(atoms), std::move(density));
}

/// Samples psi_L at the midpoints of the bins defined by `edges`.
inline FilterSpec tabulate(const FilterSpec& filter, const std::vector<double>& edges) {
    if (edges.size() < 2) throw Error(errc::kInvalidArgument, "tabulate: need at least two edges");
    std::vector<Matrix> values;
    values.reserve(edges.size() - 1);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (const auto* t = filter.as<TabulatedFilter>()) {
            values.push_back(t->values[FilterSpec::bin_index(t->edges, 0.5 * (edges[i] + edges[i + 1]), "tabulate")]);
        } else {
            values.push_back(eval_characteristic(filter, 0.5 * (edges[i] + edges[i + 1])));
        }
    }
    return FilterSpec::tabulated(edges, std::move(values));
}

/// L1 followed by L2 tabulated on `edges`: psi = psi1 * psi2.
inline FilterSpec compose(const FilterSpec& first, const FilterSpec& second, const std::vector<double>& edges) {
    if (first.dim() != second.dim()) throw Error(errc::kDimMismatch, "compose: filter dims differ");
    const FilterSpec a = tabulate(first, edges);
    const FilterSpec b = tabulate(second, edges);
    const auto& ta = *a.as<TabulatedFilter>();
    const auto& tb = *b.as<TabulatedFilter>();
    std::vector<Matrix> values;
    values.reserve(ta.values.size());
    for (std::size_t i = 0; i < ta.values.size(); ++i) values.push_back(ta.values[i] * tb.values[i]);
    return FilterSpec::tabulated(edges, std::move(values));
}

/// L1 followed by L2. Two shifts combine in closed form; otherwise the result
/// is tabulated on the grid of whichever operand is tabulated.
inline FilterSpec compose(const FilterSpec& first, const FilterSpec& second) {
    if (first.dim() != second.dim()) throw Error(errc::kDimMismatch, "compose: filter dims differ");
    const auto* s1 = first.as<ShiftFilter>();
    const auto* s2 = second.as<ShiftFilter>();
    if (s1 && s2) return FilterSpec::shift(first.dim(), s1->s + s2->s);
    const auto* t1 = first.as<TabulatedFilter>();
    const auto* t2 = second.as<TabulatedFilter>();
    if (t1 && t2 && t1->edges != t2->edges) {
        throw Error(errc::kIncompatibleGrids, "compose: tabulated filters live on different grids");
    }
    if (t1) return compose(first, second, t1->edges);
    if (t2) return compose(first, second, t2->edges);
    throw Error(errc::kInvalidArgument, "compose: closed-form filters other than shifts need a tabulation grid");
}

/// Flat density S on [-band, band]. An infinite band yields the symbolic
/// full-line white noise.
inline SpectralMeasure white_noise(const Matrix& level, double band, std::size_t bins = 1) {
    require_psd(level, "white_noise", "level");
    if (!(band > 0.0)) throw Error(errc::kInvalidArgument, "white_noise: band must be positive");
    if (std::isinf(band)) return SpectralMeasure::full_line_white(level);
    if (bins == 0) throw Error(errc::kInvalidArgument, "white_noise: bins must be >= 1");
    DensityGrid g{-band, band, std::vector<Matrix>(bins, level)};
    return SpectralMeasure(level.rows(), {}, std::move(g));
}

/// Stationary covariance of full-line white noise S dnu filtered through
/// h(t) = e^{-Gamma t} A theta(t): A^dagger e^{-Gamma tau} M A for tau >= 0,
/// where Gamma M + M Gamma = S, and the adjoint of the |tau| value for tau < 0.
inline Matrix ou_covariance(const Matrix& gamma, const Matrix& s, const Matrix& a, double tau) {
    const Matrix m = solve_lyapunov(gamma, s);
    if (a.rows() != gamma.rows() || a.cols() != gamma.cols()) {
        throw Error(errc::kDimMismatch, "ou_covariance: A must match Gamma's shape");
    }
    if (tau == 0.0) return hermitian_part(a.adjoint() * m * a);
    const Matrix positive = a.adjoint() * matrix_exp(-std::abs(tau) * gamma) * m * a;
    return tau > 0.0 ? positive : Matrix(positive.adjoint());
}

}  // namespace qwss
