#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace qwss {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Hermiticity tolerance applied to stored PSD matrices (max-abs of M - M^dagger).
inline constexpr double kTolHerm = 1e-12;
/// Minimum-eigenvalue tolerance for PSD predicates.
inline constexpr double kTolPsd = 1e-9;

/// Library error. `code` is a short machine-readable tag, `location` names the
/// offending element (atom index, bin index, JSON key) when there is one.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message, std::string location = {},
          std::optional<double> witness = std::nullopt)
        : std::runtime_error(message),
          code_(std::move(code)),
          location_(std::move(location)),
          witness_(witness) {}

    const std::string& code() const noexcept { return code_; }
    const std::string& location() const noexcept { return location_; }
    /// Witness eigenvalue for PSD failures.
    std::optional<double> witness() const noexcept { return witness_; }

private:
    std::string code_;
    std::string location_;
    std::optional<double> witness_;
};

namespace errc {
inline constexpr const char* kNotSquare = "not_square";
inline constexpr const char* kDimMismatch = "dim_mismatch";
inline constexpr const char* kNotPsd = "not_psd";
inline constexpr const char* kNotPositiveDefinite = "not_positive_definite";
inline constexpr const char* kNonFinite = "non_finite";
inline constexpr const char* kInvalidArgument = "invalid_argument";
inline constexpr const char* kDomain = "domain";
inline constexpr const char* kOffGrid = "off_grid";
inline constexpr const char* kIncompatibleGrids = "incompatible_grids";
inline constexpr const char* kAliasing = "aliasing";
inline constexpr const char* kSchema = "schema";
inline constexpr const char* kUnknownField = "unknown_field";
inline constexpr const char* kIo = "io";
inline constexpr const char* kNumerical = "numerical";
}  // namespace errc

inline bool all_finite(const Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const Complex z = m.data()[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

inline Matrix hermitian_part(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

}  // namespace qwss
