#pragma once

// Operator-valued spectral measures (atoms plus a piecewise-constant density on
// a uniform grid) and their calculus: cumulative function, scalar integration,
// the covariance <-> spectrum transform pair, block-kernel positivity checks
// and orthogonal mixing.
//
// Frequencies are in cycles per unit time throughout. The covariance of a
// measure dS is C(tau) = \int e^{2 pi i tau nu} dS(nu).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qwss/operator_core.hpp"
#include "qwss/types.hpp"

namespace qwss {

struct SpectralAtom {
    double nu = 0.0;
    Matrix weight;
};

/// Uniform frequency grid carrying one constant density value per bin
/// (units: matrix per unit frequency).
struct DensityGrid {
    double nu_min = 0.0;
    double nu_max = 0.0;
    std::vector<Matrix> values;

    std::size_t bins() const noexcept { return values.size(); }
    double width() const noexcept { return (nu_max - nu_min) / static_cast<double>(values.size()); }
    double edge(std::size_t i) const noexcept { return nu_min + static_cast<double>(i) * width(); }
    double midpoint(std::size_t i) const noexcept { return nu_min + (static_cast<double>(i) + 0.5) * width(); }
};

class SpectralMeasure {
public:
    SpectralMeasure() = default;

    /// Validating constructor. Throws on non-PSD weights/bins (naming the index
    /// and the witness eigenvalue), unsorted atoms or a degenerate grid.
    SpectralMeasure(Eigen::Index dim, std::vector<SpectralAtom> atoms,
                    std::optional<DensityGrid> density = std::nullopt)
        : dim_(dim), atoms_(std::move(atoms)), density_(std::move(density)) {
        validate();
    }

    static SpectralMeasure empty(Eigen::Index dim) { return SpectralMeasure(dim, {}); }

    /// Flat density S over the whole frequency line. Only closed-form consumers
    /// accept it; numeric routines reject it.
    static SpectralMeasure full_line_white(const Matrix& level) {
        require_psd(level, "white_noise", "level");
        SpectralMeasure mu;
        mu.dim_ = level.rows();
        mu.full_line_level_ = level;
        return mu;
    }

    Eigen::Index dim() const noexcept { return dim_; }
    const std::vector<SpectralAtom>& atoms() const noexcept { return atoms_; }
    const std::optional<DensityGrid>& density() const noexcept { return density_; }
    const std::optional<Matrix>& full_line_level() const noexcept { return full_line_level_; }
    bool is_symbolic() const noexcept { return full_line_level_.has_value(); }

    void require_numeric(const char* what) const {
        if (is_symbolic()) {
            throw Error(errc::kDomain, std::string(what) +
                                           ": infinite-band white noise has no numeric representation; "
                                           "use a finite band");
        }
    }

private:
    void validate() const {
        if (dim_ <= 0) throw Error(errc::kInvalidArgument, "spectral measure: dim must be positive");
        for (std::size_t k = 0; k < atoms_.size(); ++k) {
            const std::string loc = "atoms[" + std::to_string(k) + "]";
            const auto& a = atoms_[k];
            if (!std::isfinite(a.nu)) throw Error(errc::kNonFinite, "spectral measure: non-finite atom frequency", loc);
            if (a.weight.rows() != dim_ || a.weight.cols() != dim_) {
                throw Error(errc::kDimMismatch, "spectral measure: atom weight has wrong shape", loc);
            }
            require_psd(a.weight, "spectral measure atom weight", loc);
            if (k > 0 && !(atoms_[k - 1].nu < a.nu)) {
                throw Error(errc::kInvalidArgument, "spectral measure: atom frequencies must be strictly increasing", loc);
            }
        }
        if (density_) {
            const auto& d = *density_;
            if (!std::isfinite(d.nu_min) || !std::isfinite(d.nu_max) || !(d.nu_min < d.nu_max)) {
                throw Error(errc::kInvalidArgument, "spectral measure: density grid needs finite nu_min < nu_max", "density");
            }
            if (d.values.empty()) throw Error(errc::kInvalidArgument, "spectral measure: density grid needs bins >= 1", "density");
            for (std::size_t i = 0; i < d.values.size(); ++i) {
                const std::string loc = "density.values[" + std::to_string(i) + "]";
                if (d.values[i].rows() != dim_ || d.values[i].cols() != dim_) {
                    throw Error(errc::kDimMismatch, "spectral measure: density value has wrong shape", loc);
                }
                require_psd(d.values[i], "spectral measure density value", loc);
            }
        }
    }

    Eigen::Index dim_ = 0;
    std::vector<SpectralAtom> atoms_;
    std::optional<DensityGrid> density_;
    std::optional<Matrix> full_line_level_;
};

/// Matrix covariance sampled at lags 0, dt, ..., max_lag*dt; negative lags
/// follow from C(-tau) = C(tau)^dagger.
struct CovarianceTable {
    Eigen::Index dim = 0;
    double dt = 0.0;
    std::vector<Matrix> values;

    long max_lag() const noexcept { return static_cast<long>(values.size()) - 1; }

    Matrix at(long m) const {
        const long am = m < 0 ? -m : m;
        if (am > max_lag()) {
            throw Error(errc::kOffGrid, "covariance table: lag index " + std::to_string(m) + " outside table");
        }
        const auto& v = values[static_cast<std::size_t>(am)];
        return m < 0 ? Matrix(v.adjoint()) : v;
    }

    /// Checks shapes, finiteness and positivity of C(0).
    void validate() const {
        if (dim <= 0) throw Error(errc::kInvalidArgument, "covariance table: dim must be positive");
        if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(errc::kInvalidArgument, "covariance table: dt must be positive");
        if (values.empty()) throw Error(errc::kInvalidArgument, "covariance table: no lags");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].rows() != dim || values[i].cols() != dim) {
                throw Error(errc::kDimMismatch, "covariance table: wrong matrix shape", "values[" + std::to_string(i) + "]");
            }
            if (!all_finite(values[i])) throw Error(errc::kNonFinite, "covariance table: non-finite entry", "values[" + std::to_string(i) + "]");
        }
        require_psd(values[0], "covariance table C(0)", "values[0]");
    }
};

enum class Taper { Rectangular, Bartlett, Hann };

/// Symmetric lag window w(m), |m| <= max_lag.
inline double lag_window(Taper taper, long m, long max_lag) {
    const double x = static_cast<double>(std::abs(m)) / static_cast<double>(max_lag + 1);
    switch (taper) {
        case Taper::Rectangular: return 1.0;
        case Taper::Bartlett: return 1.0 - x;
        case Taper::Hann: return 0.5 * (1.0 + std::cos(kPi * x));
    }
    return 1.0;
}

/// Data taper for a segment of `length` samples.
inline double data_window(Taper taper, std::size_t i, std::size_t length) {
    const double n = static_cast<double>(length);
    const double x = static_cast<double>(i);
    switch (taper) {
        case Taper::Rectangular: return 1.0;
        case Taper::Bartlett: return 1.0 - std::abs((x - 0.5 * (n - 1.0)) / (0.5 * n));
        case Taper::Hann: return 0.5 * (1.0 - std::cos(kTwoPi * x / n));
    }
    return 1.0;
}

// ---------------------------------------------------------------------------

/// S(nu) = sum of atoms at or below nu plus the density integrated from
/// nu_min up to min(nu, nu_max). Right-continuous at atoms.
inline Matrix cumulative(const SpectralMeasure& mu, double nu) {
    mu.require_numeric("cumulative");
    Matrix out = Matrix::Zero(mu.dim(), mu.dim());
    for (const auto& a : mu.atoms()) {
        if (a.nu <= nu) out += a.weight;
    }
    if (const auto& d = mu.density(); d && nu > d->nu_min) {
        const double w = d->width();
        for (std::size_t i = 0; i < d->bins(); ++i) {
            const double lo = d->edge(i);
            if (nu <= lo) break;
            const double covered = std::min(nu, lo + w) - lo;
            out += d->values[i] * covered;
        }
    }
    return out;
}

inline Matrix total_mass(const SpectralMeasure& mu) {
    mu.require_numeric("total_mass");
    Matrix out = Matrix::Zero(mu.dim(), mu.dim());
    for (const auto& a : mu.atoms()) out += a.weight;
    if (const auto& d = mu.density()) {
        const double w = d->width();
        for (const auto& v : d->values) out += v * w;
    }
    return out;
}

/// \int f(nu)^* g(nu) dS(nu): exact on atoms, midpoint rule on density bins.
template <class F, class G>
Matrix integrate_pair(const SpectralMeasure& mu, F&& f, G&& g) {
    mu.require_numeric("integrate_pair");
    Matrix out = Matrix::Zero(mu.dim(), mu.dim());
    const auto weight = [&](double nu) {
        const Complex fv = f(nu);
        const Complex gv = g(nu);
        if (!std::isfinite(fv.real()) || !std::isfinite(fv.imag()) || !std::isfinite(gv.real()) ||
            !std::isfinite(gv.imag())) {
            throw Error(errc::kDomain, "integrate_pair: integrand not finite at nu = " + std::to_string(nu));
        }
        return std::conj(fv) * gv;
    };
    for (const auto& a : mu.atoms()) out += weight(a.nu) * a.weight;
    if (const auto& d = mu.density()) {
        const double w = d->width();
        for (std::size_t i = 0; i < d->bins(); ++i) out += (weight(d->midpoint(i)) * w) * d->values[i];
    }
    return out;
}

namespace detail {

/// \int_{bin} e^{2 pi i tau nu} dnu for a bin of width w centred at c.
inline Complex bin_phase_integral(double tau, double c, double w) {
    const double x = kPi * tau * w;
    const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
    return std::polar(w * sinc, kTwoPi * tau * c);
}

}  // namespace detail

/// C(tau) = \int e^{2 pi i tau nu} dS(nu), integrating each density bin exactly.
inline Matrix covariance_at(const SpectralMeasure& mu, double tau) {
    mu.require_numeric("covariance_at");
    Matrix out = Matrix::Zero(mu.dim(), mu.dim());
    for (const auto& a : mu.atoms()) out += std::polar(1.0, kTwoPi * tau * a.nu) * a.weight;
    if (const auto& d = mu.density()) {
        const double w = d->width();
        for (std::size_t i = 0; i < d->bins(); ++i) {
            out += detail::bin_phase_integral(tau, d->midpoint(i), w) * d->values[i];
        }
    }
    return out;
}

/// Covariance table at lags 0..max_lag. C(0) is Hermitized so the table's lag
/// symmetry holds exactly.
inline CovarianceTable covariance_from_spectrum(const SpectralMeasure& mu, double dt, long max_lag) {
    mu.require_numeric("covariance_from_spectrum");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(errc::kInvalidArgument, "covariance_from_spectrum: dt must be positive");
    if (max_lag < 0) throw Error(errc::kInvalidArgument, "covariance_from_spectrum: max_lag must be >= 0");
    CovarianceTable table{mu.dim(), dt, {}};
    table.values.reserve(static_cast<std::size_t>(max_lag) + 1);
    table.values.push_back(hermitian_part(total_mass(mu)));
    for (long m = 1; m <= max_lag; ++m) table.values.push_back(covariance_at(mu, static_cast<double>(m) * dt));
    return table;
}

/// Lag-window spectral estimate on the DFT frequencies k/(bins*dt),
/// k = -bins/2 .. bins/2-1, each bin centred on its frequency, followed by a
/// per-bin projection onto the PSD cone.
inline SpectralMeasure spectrum_from_covariance(const CovarianceTable& c, std::size_t bins,
                                                Taper taper = Taper::Bartlett) {
    c.validate();
    const long max_lag = c.max_lag();
    if (max_lag < 1) throw Error(errc::kInvalidArgument, "spectrum_from_covariance: need at least 2 lags");
    if (bins < c.values.size()) {
        throw Error(errc::kInvalidArgument, "spectrum_from_covariance: bins must be >= number of lags");
    }
    const double dt = c.dt;
    const double width = 1.0 / (static_cast<double>(bins) * dt);
    const long half = static_cast<long>(bins / 2);

    std::vector<Matrix> weighted;
    weighted.reserve(c.values.size());
    for (long m = 0; m <= max_lag; ++m) weighted.push_back(lag_window(taper, m, max_lag) * c.values[static_cast<std::size_t>(m)]);

    DensityGrid grid;
    grid.nu_min = -static_cast<double>(half) * width - 0.5 * width;
    grid.nu_max = grid.nu_min + static_cast<double>(bins) * width;
    grid.values.reserve(bins);
    const double nbins = static_cast<double>(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        const long kk = static_cast<long>(k) - half;
        Matrix s = hermitian_part(weighted[0]);
        for (long m = 1; m <= max_lag; ++m) {
            // phase reduced modulo bins to keep the argument small
            const long r = (kk * m) % static_cast<long>(bins);
            const Complex ph = std::polar(1.0, -kTwoPi * static_cast<double>(r) / nbins);
            const Matrix& cm = weighted[static_cast<std::size_t>(m)];
            s += ph * cm + std::conj(ph) * cm.adjoint();
        }
        grid.values.push_back(nearest_psd(dt * s));
    }
    return SpectralMeasure(c.dim, {}, std::move(grid));
}

struct KernelVerdict {
    bool pass = false;
    double min_eigenvalue = 0.0;
};

/// Positivity of the block Gram G_{jk} = C(t_k - t_j) for a covariance given
/// as a callable tau -> Matrix.
template <class Cov>
    requires std::invocable<Cov, double>
KernelVerdict check_psd_kernel(Cov&& cov, const std::vector<double>& times, double tol = kTolPsd) {
    if (times.empty()) throw Error(errc::kInvalidArgument, "check_psd_kernel: need at least one time");
    const Matrix c0 = cov(0.0);
    const Eigen::Index d = c0.rows();
    const Eigen::Index n = static_cast<Eigen::Index>(times.size());
    Matrix g(n * d, n * d);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = j; k < n; ++k) {
            const Matrix block = cov(times[static_cast<std::size_t>(k)] - times[static_cast<std::size_t>(j)]);
            g.block(j * d, k * d, d, d) = block;
            if (k != j) g.block(k * d, j * d, d, d) = block.adjoint();
        }
    }
    const RealVector ev = hermitian_eigenvalues(g);
    const double lmin = ev(0);
    const double scale = std::max({1.0, std::abs(ev(0)), std::abs(ev(ev.size() - 1))});
    return {lmin >= -tol * scale, lmin};
}

/// Table variant: every pairwise lag must fall on the table grid; no
/// interpolation is performed.
inline KernelVerdict check_psd_kernel(const CovarianceTable& table, const std::vector<double>& times,
                                      double tol = kTolPsd) {
    const auto lookup = [&](double tau) -> Matrix {
        const double r = tau / table.dt;
        const double m = std::round(r);
        if (std::abs(r - m) > 1e-9 * std::max(1.0, std::abs(r))) {
            throw Error(errc::kOffGrid, "check_psd_kernel: lag " + std::to_string(tau) + " is not a multiple of dt");
        }
        if (std::abs(m) > static_cast<double>(table.max_lag())) {
            throw Error(errc::kOffGrid, "check_psd_kernel: lag " + std::to_string(tau) + " exceeds the table");
        }
        return table.at(static_cast<long>(m));
    };
    return check_psd_kernel(lookup, times, tol);
}

// ---------------------------------------------------------------------------

namespace detail {

inline bool nearly_integer(double x, long& out) {
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x))) return false;
    out = static_cast<long>(r);
    return true;
}

/// Resample `d` onto the grid (nu_min, width, bins) by exact bin splitting;
/// bins outside `d` are zero.
inline void accumulate_on_grid(std::vector<Matrix>& target, double nu_min, double width, const DensityGrid& d,
                               double scale) {
    long ratio = 0;
    long offset = 0;
    if (!nearly_integer(d.width() / width, ratio) || ratio < 1 || !nearly_integer((d.nu_min - nu_min) / width, offset)) {
        throw Error(errc::kIncompatibleGrids, "add_scaled: density grids are not integer refinements of one another");
    }
    for (std::size_t i = 0; i < d.bins(); ++i) {
        for (long s = 0; s < ratio; ++s) {
            const long idx = offset + static_cast<long>(i) * ratio + s;
            target[static_cast<std::size_t>(idx)] += scale * d.values[i];
        }
    }
}

}  // namespace detail

/// |alpha|^2 muX + |beta|^2 muY: the spectral measure of alpha X + beta Y for
/// orthogonal mean-zero processes X and Y (orthogonality is the caller's claim).
inline SpectralMeasure add_scaled(Complex alpha, const SpectralMeasure& mu_x, Complex beta, const SpectralMeasure& mu_y) {
    mu_x.require_numeric("add_scaled");
    mu_y.require_numeric("add_scaled");
    if (mu_x.dim() != mu_y.dim()) throw Error(errc::kDimMismatch, "add_scaled: measures have different dims");
    const double ax = std::norm(alpha);
    const double by = std::norm(beta);

    std::vector<SpectralAtom> atoms;
    const auto& xa = mu_x.atoms();
    const auto& ya = mu_y.atoms();
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < xa.size() || j < ya.size()) {
        if (j == ya.size() || (i < xa.size() && xa[i].nu < ya[j].nu)) {
            atoms.push_back({xa[i].nu, ax * xa[i].weight});
            ++i;
        } else if (i == xa.size() || ya[j].nu < xa[i].nu) {
            atoms.push_back({ya[j].nu, by * ya[j].weight});
            ++j;
        } else {
            atoms.push_back({xa[i].nu, ax * xa[i].weight + by * ya[j].weight});
            ++i;
            ++j;
        }
    }

    std::optional<DensityGrid> density;
    const auto& dx = mu_x.density();
    const auto& dy = mu_y.density();
    if (dx && dy) {
        const double width = std::min(dx->width(), dy->width());
        const double lo = std::min(dx->nu_min, dy->nu_min);
        const double hi = std::max(dx->nu_max, dy->nu_max);
        long bins = 0;
        if (!detail::nearly_integer((hi - lo) / width, bins) || bins < 1) {
            throw Error(errc::kIncompatibleGrids, "add_scaled: density grids are not integer refinements of one another");
        }
        DensityGrid g;
        g.nu_min = lo;
        g.nu_max = lo + static_cast<double>(bins) * width;
        g.values.assign(static_cast<std::size_t>(bins), Matrix::Zero(mu_x.dim(), mu_x.dim()));
        detail::accumulate_on_grid(g.values, lo, width, *dx, ax);
        detail::accumulate_on_grid(g.values, lo, width, *dy, by);
        density = std::move(g);
    } else if (dx || dy) {
        DensityGrid g = dx ? *dx : *dy;
        const double s = dx ? ax : by;
        for (auto& v : g.values) v *= s;
        density = std::move(g);
    }
    return SpectralMeasure(mu_x.dim(), std::move(atoms), std::move(density));
}

}  // namespace qwss
