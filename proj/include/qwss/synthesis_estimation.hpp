#pragma once

// Gaussian surrogate trajectories with a prescribed operator spectral measure,
// and the matching lag-covariance and Welch estimators.
//
// Conventions: a trajectory x_t satisfies E[x_{t+tau} x_t^dagger] = C(tau)
// = \int e^{2 pi i tau nu} dS(nu), and the estimators average x_{t+tau} x_t^dagger.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "qwss/operator_core.hpp"
#include "qwss/random.hpp"
#include "qwss/spectral_measure.hpp"
#include "qwss/types.hpp"

namespace qwss {

struct Trajectory {
    double dt = 0.0;
    /// dim x n, one column per sample.
    Matrix samples;
    std::uint64_t seed = 0;

    Eigen::Index dim() const noexcept { return samples.rows(); }
    Eigen::Index size() const noexcept { return samples.cols(); }
};

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace detail

/// Draws a trajectory of n samples at step dt.
///
/// Atom k contributes e^{2 pi i nu_k t} B_k^{1/2} xi_k. The density is
/// integrated exactly over the n DFT cells [ (j - 1/2) / (n dt), (j + 1/2) / (n dt) )
/// giving cell masses W_j, and contributes the unscaled inverse DFT of
/// W_j^{1/2} xi_j. Substream k draws atom k; substream (atoms + j) draws DFT
/// cell j (FFT order); draw index = vector component.
inline Trajectory synthesize(const SpectralMeasure& mu, double dt, std::size_t n, std::uint64_t seed) {
    mu.require_numeric("synthesize");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(errc::kInvalidArgument, "synthesize: dt must be positive");
    if (!detail::is_power_of_two(n)) throw Error(errc::kInvalidArgument, "synthesize: n must be a power of two");
    const double nyquist = 0.5 / dt;
    for (std::size_t k = 0; k < mu.atoms().size(); ++k) {
        if (!(std::abs(mu.atoms()[k].nu) < nyquist)) {
            throw Error(errc::kAliasing, "synthesize: atom frequency outside (-1/(2dt), 1/(2dt))", "atoms[" + std::to_string(k) + "]");
        }
    }
    if (const auto& d = mu.density()) {
        const double slack = 1e-12 * nyquist;
        if (d->nu_min < -nyquist - slack || d->nu_max > nyquist + slack) {
            throw Error(errc::kAliasing, "synthesize: density support exceeds the sampling band", "density");
        }
    }

    const Eigen::Index dim = mu.dim();
    const Philox4x32 rng(seed);
    Trajectory out{dt, Matrix::Zero(dim, static_cast<Eigen::Index>(n)), seed};

    const auto gaussian_vector = [&](std::uint64_t substream) {
        Vector xi(dim);
        for (Eigen::Index j = 0; j < dim; ++j) xi(j) = rng.complex_gaussian(substream, static_cast<std::uint64_t>(j));
        return xi;
    };

    const std::uint64_t natoms = mu.atoms().size();
    for (std::uint64_t k = 0; k < natoms; ++k) {
        const auto& a = mu.atoms()[k];
        if (a.weight.isZero(0.0)) continue;
        const Vector amp = psd_sqrt(a.weight) * gaussian_vector(k);
        for (std::size_t m = 0; m < n; ++m) {
            out.samples.col(static_cast<Eigen::Index>(m)) += std::polar(1.0, kTwoPi * a.nu * dt * static_cast<double>(m)) * amp;
        }
    }

    if (const auto& d = mu.density()) {
        const double cell = 1.0 / (static_cast<double>(n) * dt);
        const auto ln = static_cast<long>(n);
        std::vector<Matrix> mass(n);
        const double w = d->width();
        for (std::size_t i = 0; i < d->bins(); ++i) {
            if (d->values[i].isZero(0.0)) continue;
            const double lo = d->edge(i);
            const double hi = lo + w;
            const auto c_lo = static_cast<long>(std::floor(lo / cell + 0.5));
            const auto c_hi = static_cast<long>(std::floor(hi / cell + 0.5));
            for (long c = c_lo; c <= c_hi; ++c) {
                const double overlap = std::min(hi, (static_cast<double>(c) + 0.5) * cell) -
                                       std::max(lo, (static_cast<double>(c) - 0.5) * cell);
                if (overlap <= 0.0) continue;
                const auto idx = static_cast<std::size_t>(((c % ln) + ln) % ln);
                if (mass[idx].size() == 0) mass[idx] = Matrix::Zero(dim, dim);
                mass[idx] += overlap * d->values[i];
            }
        }
        std::vector<std::vector<Complex>> spectra(static_cast<std::size_t>(dim), std::vector<Complex>(n, Complex(0.0, 0.0)));
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (mass[j].size() == 0) continue;
            any = true;
            const Vector y = psd_sqrt(hermitian_part(mass[j])) * gaussian_vector(natoms + j);
            for (Eigen::Index c = 0; c < dim; ++c) spectra[static_cast<std::size_t>(c)][j] = y(c);
        }
        if (any) {
            Eigen::FFT<double> fft;
            fft.SetFlag(Eigen::FFT<double>::Unscaled);
            std::vector<Complex> series;
            for (Eigen::Index c = 0; c < dim; ++c) {
                fft.inv(series, spectra[static_cast<std::size_t>(c)]);
                for (std::size_t m = 0; m < n; ++m) out.samples(c, static_cast<Eigen::Index>(m)) += series[m];
            }
        }
    }
    return out;
}

/// Unbiased lag covariance C^(m dt) = (1/(n-m)) sum_t x_{t+m} x_t^dagger,
/// m = 0..max_lag. C^(0) is Hermitized.
inline CovarianceTable lag_covariance(const Trajectory& x, long max_lag) {
    const Eigen::Index n = x.size();
    if (max_lag < 0 || 2 * max_lag >= n) throw Error(errc::kInvalidArgument, "lag_covariance: need 0 <= max_lag < n/2");
    CovarianceTable table{x.dim(), x.dt, {}};
    table.values.reserve(static_cast<std::size_t>(max_lag) + 1);
    for (long m = 0; m <= max_lag; ++m) {
        const Eigen::Index len = n - m;
        Matrix c = x.samples.middleCols(m, len) * x.samples.leftCols(len).adjoint();
        c /= static_cast<double>(len);
        table.values.push_back(m == 0 ? hermitian_part(c) : c);
    }
    return table;
}

/// Averaged tapered-segment cross-periodogram. The returned density has
/// `segment` bins centred on the DFT frequencies k/(segment dt),
/// k = -segment/2 .. segment/2 - 1, each bin projected onto the PSD cone.
inline SpectralMeasure welch_estimate(const Trajectory& x, std::size_t segment, double overlap,
                                      Taper taper = Taper::Hann) {
    const auto n = static_cast<std::size_t>(x.size());
    if (segment == 0 || segment > n) throw Error(errc::kInvalidArgument, "welch_estimate: need 1 <= segment <= n");
    if (!(overlap >= 0.0 && overlap <= 0.9)) throw Error(errc::kInvalidArgument, "welch_estimate: overlap must lie in [0, 0.9]");
    const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(segment) * (1.0 - overlap))));
    const std::size_t count = (n - segment) / step + 1;
    if (count < 2) throw Error(errc::kInvalidArgument, "welch_estimate: fewer than 2 segments");

    const Eigen::Index dim = x.dim();
    std::vector<double> window(segment);
    double energy = 0.0;
    for (std::size_t i = 0; i < segment; ++i) {
        window[i] = data_window(taper, i, segment);
        energy += window[i] * window[i];
    }

    std::vector<Matrix> acc(segment, Matrix::Zero(dim, dim));
    Eigen::FFT<double> fft;
    std::vector<Complex> in(segment);
    std::vector<Complex> spec;
    Matrix y(dim, static_cast<Eigen::Index>(segment));
    for (std::size_t s = 0; s < count; ++s) {
        const std::size_t start = s * step;
        for (Eigen::Index c = 0; c < dim; ++c) {
            for (std::size_t i = 0; i < segment; ++i) in[i] = window[i] * x.samples(c, static_cast<Eigen::Index>(start + i));
            fft.fwd(spec, in);
            for (std::size_t k = 0; k < segment; ++k) y(c, static_cast<Eigen::Index>(k)) = spec[k];
        }
        for (std::size_t k = 0; k < segment; ++k) {
            const auto col = y.col(static_cast<Eigen::Index>(k));
            acc[k].noalias() += col * col.adjoint();
        }
    }

    const double scale = x.dt / (energy * static_cast<double>(count));
    const double width = 1.0 / (static_cast<double>(segment) * x.dt);
    const auto half = static_cast<long>(segment / 2);
    const auto ls = static_cast<long>(segment);
    DensityGrid grid;
    grid.nu_min = -static_cast<double>(half) * width - 0.5 * width;
    grid.nu_max = grid.nu_min + static_cast<double>(segment) * width;
    grid.values.reserve(segment);
    for (std::size_t b = 0; b < segment; ++b) {
        const long k = static_cast<long>(b) - half;
        const auto idx = static_cast<std::size_t>(((k % ls) + ls) % ls);
        grid.values.push_back(nearest_psd(scale * acc[idx]));
    }
    return SpectralMeasure(dim, {}, std::move(grid));
}

}  // namespace qwss
