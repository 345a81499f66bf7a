#include <gtest/gtest.h>

#include "qwss/filters.hpp"
#include "test_support.hpp"

using namespace qwss;
using qwss::testing::frob;
using qwss::testing::Rng;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, Complex(v, 0.0)); }

Matrix real2(double a, double b, double c, double d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
    std::vector<double> e(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    e.back() = hi;
    return e;
}

SpectralMeasure random_measure(Rng& rng, Eigen::Index d, double band, std::size_t bins) {
    std::vector<SpectralAtom> atoms;
    for (double nu : {-0.6 * band, 0.1 * band, 0.45 * band}) atoms.push_back({nu, rng.psd(d)});
    DensityGrid g{-band, band, {}};
    for (std::size_t i = 0; i < bins; ++i) g.values.push_back(rng.psd(d, 1));
    return SpectralMeasure(d, atoms, g);
}

double max_diff(const SpectralMeasure& a, const SpectralMeasure& b) {
    double out = 0.0;
    for (std::size_t k = 0; k < a.atoms().size(); ++k) out = std::max(out, frob(a.atoms()[k].weight - b.atoms()[k].weight));
    for (std::size_t i = 0; i < a.density()->bins(); ++i) {
        out = std::max(out, frob(a.density()->values[i] - b.density()->values[i]));
    }
    return out;
}

/// C(tau), tau >= 0, by quadrature of \int_0^inf h(v + tau)^dagger S h(v) dv. Substituting
/// psi = \int h(t) e^{2 pi i nu t} dt into \int psi^dagger S psi e^{2 pi i tau nu} dnu gives this order.
Matrix ou_by_time_quadrature(const Matrix& gamma, const Matrix& s, const Matrix& a, double tau) {
    return qwss::testing::integrate_half_line(
        [&](double v) {
            const Matrix hv = qwss::testing::hermitian_exp_neg(gamma, v) * a;
            const Matrix hvt = qwss::testing::hermitian_exp_neg(gamma, v + tau) * a;
            return Matrix(hvt.adjoint() * s * hv);
        },
        gamma.rows(), gamma.cols());
}

}  // namespace

TEST(EvalCharacteristic, ShiftIsUnimodular) {
    const auto f = FilterSpec::shift(3, 0.7);
    for (double nu : {-2.3, 0.0, 0.41, 9.0}) {
        const Matrix psi = eval_characteristic(f, nu);
        for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(std::abs(psi(i, i)), 1.0, 1e-15);
        EXPECT_LT(std::abs(psi(0, 0) - std::polar(1.0, kTwoPi * 0.7 * nu)), 1e-15);
        EXPECT_EQ(psi(0, 1), Complex(0.0, 0.0));
    }
}

TEST(EvalCharacteristic, DerivativeAtZeroVanishes) {
    EXPECT_EQ(frob(eval_characteristic(FilterSpec::derivative(2), 0.0)), 0.0);
    EXPECT_LT(std::abs(eval_characteristic(FilterSpec::derivative(1), 0.5)(0, 0) - Complex(0.0, kPi)), 1e-15);
}

TEST(EvalCharacteristic, ExpOperatorMatchesQuadratureTransform) {
    // \int_0^inf e^{-t} e^{2 pi i t nu} dt computed independently
    const auto f = FilterSpec::exp_operator(scalar(1.0), scalar(1.0));
    for (double nu : {-1.3, -0.2, 0.0, 0.35, 2.0}) {
        const Matrix oracle = qwss::testing::integrate_half_line(
            [&](double t) { return Matrix::Constant(1, 1, std::exp(-t) * std::polar(1.0, kTwoPi * t * nu)).eval(); }, 1, 1);
        EXPECT_LT(std::abs(eval_characteristic(f, nu)(0, 0) - oracle(0, 0)), 1e-10) << nu;
        EXPECT_LT(std::abs(eval_characteristic(f, nu)(0, 0) - 1.0 / Complex(1.0, -kTwoPi * nu)), 1e-15);
    }
}

TEST(EvalCharacteristic, ExpOperatorMatrixQuadrature) {
    Rng rng(40);
    const Matrix gamma = rng.positive_definite(2, 0.5, 2.0);
    const Matrix a = rng.gaussian(2, 2);
    const auto f = FilterSpec::exp_operator(gamma, a);
    const double nu = 0.27;
    const Matrix oracle = qwss::testing::integrate_half_line(
        [&](double t) { return Matrix(std::polar(1.0, kTwoPi * t * nu) * qwss::testing::hermitian_exp_neg(gamma, t) * a); }, 2, 2);
    EXPECT_LT(frob(eval_characteristic(f, nu) - oracle), 1e-9);
}

TEST(EvalCharacteristic, TabulatedOutsideGridThrows) {
    const auto f = FilterSpec::tabulated({0.0, 1.0, 2.0}, {scalar(1), scalar(2)});
    EXPECT_EQ(eval_characteristic(f, 1.5)(0, 0), Complex(2.0, 0.0));
    EXPECT_EQ(eval_characteristic(f, 2.0)(0, 0), Complex(2.0, 0.0));
    try {
        eval_characteristic(f, 2.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kDomain);
    }
}

TEST(FilterSpec, Invariants) {
    EXPECT_THROW(FilterSpec::exp_operator(real2(1, 0, 0, 0), Matrix::Identity(2, 2)), Error);
    EXPECT_THROW(FilterSpec::exp_operator(Matrix::Identity(2, 2), Matrix::Identity(3, 3)), Error);
    EXPECT_THROW(FilterSpec::tabulated({0.0, 0.0, 1.0}, {scalar(1), scalar(1)}), Error);
    EXPECT_THROW(FilterSpec::tabulated({0.0, 1.0}, {scalar(1), scalar(1)}), Error);
}

TEST(ApplyFilter, IdentityTabulatedLeavesMeasure) {
    Rng rng(41);
    const auto mu = random_measure(rng, 2, 1.0, 16);
    const auto f = FilterSpec::tabulated({-2.0, 2.0}, {Matrix::Identity(2, 2)});
    EXPECT_EQ(max_diff(apply_filter(mu, f), mu), 0.0);
}

TEST(ApplyFilter, ShiftLeavesMeasureBinByBin) {
    Rng rng(42);
    const auto mu = random_measure(rng, 3, 2.0, 20);
    EXPECT_LT(max_diff(apply_filter(mu, FilterSpec::shift(3, 1.234)), mu), 1e-14);
}

TEST(ApplyFilter, DerivativeScalesAtom) {
    Rng rng(43);
    const Matrix b = rng.psd(2);
    const double nu0 = 0.8;
    const auto out = apply_filter(SpectralMeasure(2, {{nu0, b}}), FilterSpec::derivative(2));
    EXPECT_LT(frob(out.atoms()[0].weight - 4 * kPi * kPi * nu0 * nu0 * b), 1e-12 * frob(b) * 30);
}

TEST(ApplyFilter, CommutingLorentzianDensity) {
    Rng rng(44);
    const double g = 1.3;
    const Matrix gamma = g * Matrix::Identity(2, 2);
    const Matrix s = rng.psd(2);
    const Matrix a = rng.gaussian(2, 2);
    const auto out = apply_filter(white_noise(s, 3.0, 60), FilterSpec::exp_operator(gamma, a));
    const auto& d = *out.density();
    for (std::size_t i = 0; i < d.bins(); ++i) {
        const double nu = d.midpoint(i);
        const Matrix want = a.adjoint() * s * a / (g * g + 4 * kPi * kPi * nu * nu);
        EXPECT_LT(frob(d.values[i] - want), 1e-12 * std::max(1.0, frob(want)));
    }
}

TEST(ApplyFilter, OutputsPsdOnRandomInputs) {
    Rng rng(45);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index d = rng.integer(1, 4);
        const auto mu = random_measure(rng, d, 2.0, 24);
        const auto out = apply_filter(mu, FilterSpec::exp_operator(rng.positive_definite(d), rng.gaussian(d, d)));
        for (const auto& at : out.atoms()) EXPECT_TRUE(is_psd(at.weight, 1e-12));
        for (const auto& v : out.density()->values) EXPECT_TRUE(is_psd(v, 1e-12));
    }
}

TEST(ApplyFilter, Errors) {
    const auto mu = white_noise(Matrix::Identity(2, 2), 1.0, 4);
    EXPECT_THROW(apply_filter(mu, FilterSpec::derivative(3)), Error);
    const auto narrow = FilterSpec::tabulated({-0.5, 0.5}, {Matrix::Identity(2, 2)});
    try {
        apply_filter(mu, narrow);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kDomain);
    }
    const auto symbolic = white_noise(Matrix::Identity(2, 2), std::numeric_limits<double>::infinity());
    EXPECT_THROW(apply_filter(symbolic, FilterSpec::exp_operator(Matrix::Identity(2, 2), Matrix::Identity(2, 2))), Error);
}

TEST(InDomain, CompactSupportAndFullLine) {
    const double inf = std::numeric_limits<double>::infinity();
    EXPECT_TRUE(in_domain(white_noise(scalar(1), 5.0, 10), FilterSpec::derivative(1)));
    EXPECT_FALSE(in_domain(white_noise(scalar(1), inf), FilterSpec::derivative(1)));
    EXPECT_TRUE(in_domain(white_noise(scalar(1), inf), FilterSpec::exp_operator(scalar(2), scalar(1))));
    EXPECT_FALSE(in_domain(white_noise(scalar(1), inf), FilterSpec::shift(1, 0.3)));
    EXPECT_FALSE(in_domain(white_noise(scalar(1), inf), FilterSpec::scalar_convolution(1, [](double) { return Complex(1.0); })));
    EXPECT_TRUE(in_domain(white_noise(scalar(1), inf),
                          FilterSpec::scalar_convolution(1, [](double nu) { return Complex(1.0 / (1.0 + nu * nu)); }, true)));
    EXPECT_TRUE(in_domain(white_noise(scalar(0), inf), FilterSpec::derivative(1)));
    EXPECT_TRUE(in_domain(SpectralMeasure(1, {{3.0, scalar(1)}}), FilterSpec::derivative(1)));
}

TEST(InDomain, SingularTransferRejected) {
    const auto f = FilterSpec::scalar_convolution(1, [](double nu) { return Complex(1.0 / nu); });
    EXPECT_FALSE(in_domain(SpectralMeasure(1, {{0.0, scalar(1)}}), f));
    EXPECT_TRUE(in_domain(SpectralMeasure(1, {{0.5, scalar(1)}}), f));
}

TEST(Compose, ShiftsAddInClosedForm) {
    const auto c = compose(FilterSpec::shift(2, 0.3), FilterSpec::shift(2, -1.1));
    ASSERT_NE(c.as<ShiftFilter>(), nullptr);
    EXPECT_NEAR(c.as<ShiftFilter>()->s, -0.8, 1e-15);
}

TEST(Compose, ScalarFiltersCommute) {
    const auto edges = uniform_edges(-3.0, 3.0, 40);
    const auto d = FilterSpec::derivative(2);
    const auto s = FilterSpec::shift(2, 0.45);
    const auto ds = compose(d, s, edges);
    const auto sd = compose(s, d, edges);
    for (double nu = -2.95; nu < 3.0; nu += 0.15) {
        EXPECT_LT(frob(eval_characteristic(ds, nu) - eval_characteristic(sd, nu)), 1e-14);
    }
}

TEST(Compose, ProductOrderIsFirstTimesSecond) {
    Rng rng(46);
    const auto edges = uniform_edges(-1.0, 1.0, 8);
    const auto f1 = FilterSpec::exp_operator(rng.positive_definite(2), rng.gaussian(2, 2));
    const auto f2 = FilterSpec::exp_operator(rng.positive_definite(2), rng.gaussian(2, 2));
    const auto c = compose(f1, f2, edges);
    const double mid = 0.5 * (edges[3] + edges[4]);
    EXPECT_LT(frob(eval_characteristic(c, mid) - eval_characteristic(f1, mid) * eval_characteristic(f2, mid)), 1e-14);
}

TEST(Compose, TwoStepEqualsComposedApplication) {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index d = rng.integer(1, 4);
        const double band = 2.0;
        const std::size_t bins = 32;
        const auto mu = random_measure(rng, d, band, bins);
        const auto f1 = FilterSpec::exp_operator(rng.positive_definite(d), rng.gaussian(d, d));
        const auto f2 = FilterSpec::exp_operator(rng.positive_definite(d), rng.gaussian(d, d));
        auto edges = uniform_edges(-band, band, bins);
        // keep the atoms inside bins so the tabulated product samples them at bin midpoints only
        const auto composed = compose(f1, f2, edges);
        const auto two_step = apply_filter(apply_filter(mu, f1), f2);
        const auto one_step = apply_filter(SpectralMeasure(d, {}, mu.density()), composed);
        for (std::size_t i = 0; i < bins; ++i) {
            const Matrix& a = two_step.density()->values[i];
            EXPECT_LT(frob(a - one_step.density()->values[i]), 1e-12 * std::max(1.0, frob(a)));
        }
    }
}

TEST(Compose, AssociativeOnTabulated) {
    Rng rng(48);
    const auto edges = uniform_edges(-1.0, 1.0, 16);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<FilterSpec> fs;
        for (int k = 0; k < 3; ++k) {
            std::vector<Matrix> v;
            for (int i = 0; i < 16; ++i) v.push_back(rng.gaussian(3, 3));
            fs.push_back(FilterSpec::tabulated(edges, v));
        }
        const auto left = compose(compose(fs[0], fs[1]), fs[2]);
        const auto right = compose(fs[0], compose(fs[1], fs[2]));
        const auto& l = *left.as<TabulatedFilter>();
        const auto& r = *right.as<TabulatedFilter>();
        for (std::size_t i = 0; i < 16; ++i) EXPECT_LT(frob(l.values[i] - r.values[i]), 1e-12 * std::max(1.0, frob(l.values[i])));
    }
}

TEST(Compose, Errors) {
    EXPECT_THROW(compose(FilterSpec::shift(1, 0.1), FilterSpec::shift(2, 0.1)), Error);
    EXPECT_THROW(compose(FilterSpec::derivative(1), FilterSpec::shift(1, 0.1)), Error);
    const auto a = FilterSpec::tabulated({0.0, 1.0}, {scalar(1)});
    const auto b = FilterSpec::tabulated({0.0, 2.0}, {scalar(1)});
    EXPECT_THROW(compose(a, b), Error);
}

TEST(WhiteNoise, Examples) {
    EXPECT_LT(frob(total_mass(white_noise(Matrix::Identity(2, 2), 1.0)) - 2 * Matrix::Identity(2, 2)), 1e-15);
    EXPECT_EQ(frob(total_mass(white_noise(Matrix::Zero(2, 2), 4.0, 3))), 0.0);
    EXPECT_THROW(white_noise(real2(1, 2, 2, 1), 1.0), Error);
    EXPECT_THROW(white_noise(scalar(1), 0.0), Error);
    EXPECT_TRUE(white_noise(scalar(1), std::numeric_limits<double>::infinity()).is_symbolic());
}

TEST(OuCovariance, ScalarMatchesQuadrature) {
    for (double g : {0.5, 1.0, 3.0}) {
        for (double s : {1.0, 2.5}) {
            for (double tau : {0.0, 0.3, 1.7, -0.9}) {
                const double want = s / (2 * g) * std::exp(-g * std::abs(tau));
                const Complex got = ou_covariance(scalar(g), scalar(s), scalar(1), tau)(0, 0);
                EXPECT_NEAR(got.real(), want, 1e-14 * std::max(1.0, want));
                EXPECT_EQ(got.imag(), 0.0);
                const Matrix oracle = ou_by_time_quadrature(scalar(g), scalar(s), scalar(1), std::abs(tau));
                EXPECT_NEAR(oracle(0, 0).real(), want, 1e-8);
            }
        }
    }
}

TEST(OuCovariance, CommutingDampingAtZero) {
    Rng rng(49);
    const Matrix s = rng.psd(3);
    const Matrix a = rng.gaussian(3, 3);
    const double g = 0.8;
    EXPECT_LT(frob(ou_covariance(g * Matrix::Identity(3, 3), s, a, 0.0) - a.adjoint() * s * a / (2 * g)), 1e-12);
}

TEST(OuCovariance, NonCommutingFrozenValue) {
    const Matrix gamma = real2(1, 0, 0, 2);
    const Matrix s = real2(1, 1, 1, 1);
    const Matrix want = real2(0.5, 1.0 / 3.0, 1.0 / 3.0, 0.25);
    const Matrix id = Matrix::Identity(2, 2);
    EXPECT_LT(frob(ou_covariance(gamma, s, id, 0.0) - want), 1e-8);
    EXPECT_LT(frob(ou_by_time_quadrature(gamma, s, id, 0.0) - want), 1e-8);
}

TEST(OuCovariance, NonCommutingLagsMatchTimeQuadrature) {
    Rng rng(50);
    for (int trial = 0; trial < 3; ++trial) {
        const Matrix gamma = rng.positive_definite(2, 0.5, 2.0);
        const Matrix s = rng.psd(2);
        const Matrix a = rng.gaussian(2, 2);
        for (double tau : {0.2, 1.0, 2.5}) {
            const Matrix oracle = ou_by_time_quadrature(gamma, s, a, tau);
            EXPECT_LT(frob(ou_covariance(gamma, s, a, tau) - oracle), 1e-8) << tau;
        }
    }
}

TEST(OuCovariance, NonCommutingLagMatchesFrequencyQuadrature) {
    // \int psi^dagger S psi e^{2 pi i tau nu} dnu over the full line, psi = (Gamma - 2 pi i nu)^{-1} A
    Rng rng(51);
    const Matrix gamma = rng.positive_definite(2, 0.5, 2.0);
    const Matrix s = rng.psd(2);
    const Matrix a = rng.gaussian(2, 2);
    const double tau = 0.6;
    const auto integrand = [&](double nu) {
        const Matrix psi = (gamma - Complex(0.0, kTwoPi * nu) * Matrix::Identity(2, 2)).inverse() * a;
        return Matrix(psi.adjoint() * s * psi * std::polar(1.0, kTwoPi * tau * nu));
    };
    // split the oscillatory tail: periods of 1/tau over a long finite range, then an |nu|^-2 tail bound
    Matrix oracle = Matrix::Zero(2, 2);
    const double period = 1.0 / tau;
    for (int k = -600; k < 600; ++k) {
        oracle += qwss::testing::integrate_interval(integrand, k * period, (k + 1) * period, 2, 2, 10);
    }
    // tail beyond 1000 is O(|A|^2 |S| / (4 pi^2 * 1000)) and oscillates; well under the tolerance
    EXPECT_LT(frob(ou_covariance(gamma, s, a, tau) - oracle), 1e-4 * std::max(1.0, frob(oracle)));
}

TEST(OuCovariance, SymmetryAndPsd) {
    Rng rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index d = rng.integer(1, 4);
        const Matrix gamma = rng.positive_definite(d);
        const Matrix s = rng.psd(d);
        const Matrix a = rng.gaussian(d, d);
        const double tau = rng.uniform(0.01, 3.0);
        EXPECT_EQ(frob(ou_covariance(gamma, s, a, -tau) - ou_covariance(gamma, s, a, tau).adjoint()), 0.0);
        EXPECT_TRUE(is_psd(ou_covariance(gamma, s, a, 0.0), 1e-12));
    }
}

TEST(OuCovariance, RejectsSingularDamping) {
    EXPECT_THROW(ou_covariance(real2(1, 0, 0, 0), Matrix::Identity(2, 2), Matrix::Identity(2, 2), 0.1), Error);
}

TEST(SpectralVsTime, TruncationErrorShrinksWithBand) {
    // scalar: the missing tail \int_{|nu|>W} s/(g^2 + 4 pi^2 nu^2) dnu, roughly g / (pi^2 W) relative to C(0)
    const double g = 1.0;
    const double dt = 0.01;
    double prev = std::numeric_limits<double>::infinity();
    for (double band : {25.0, 50.0, 100.0, 200.0}) {
        const auto bins = static_cast<std::size_t>(2 * band / 0.005);
        const auto out = apply_filter(white_noise(scalar(1.0), band, bins), FilterSpec::exp_operator(scalar(g), scalar(1.0)));
        const auto table = covariance_from_spectrum(out, dt, 500);
        const double c0 = 0.5 / g;
        double err = 0.0;
        for (long m = 0; m <= 500; ++m) {
            err = std::max(err, std::abs(table.values[m](0, 0) - ou_covariance(scalar(g), scalar(1.0), scalar(1.0), m * dt)(0, 0)) / c0);
        }
        const double predicted = 2.0 / kPi * std::atan(g / (kTwoPi * band));  // exact relative tail at tau = 0
        EXPECT_LT(err, prev);
        EXPECT_NEAR(err / predicted, 1.0, 0.05) << "band " << band;
        prev = err;
    }
}

TEST(SpectralVsTime, NonCommutingConvergesAtWideBand) {
    Rng rng(53);
    const Matrix gamma = real2(1, 0, 0, 2);
    const Matrix s = real2(1, 1, 1, 1);
    const Matrix a = rng.gaussian(2, 2);
    const double band = 400.0;
    const auto out = apply_filter(white_noise(s, band, 160000), FilterSpec::exp_operator(gamma, a));
    const auto table = covariance_from_spectrum(out, 0.05, 100);  // lags up to 5 / lambda_min
    const double c0 = ou_covariance(gamma, s, a, 0.0).norm();
    for (long m = 0; m <= 100; m += 5) {
        EXPECT_LT((table.values[m] - ou_covariance(gamma, s, a, m * 0.05)).norm() / c0, 1e-3) << "lag " << m;
    }
}
