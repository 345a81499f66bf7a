#pragma once

// File formats.
//
//  * JSON (measures, filters, models, kernels, factorizations): complex numbers
//    are [re, im]; matrices are row-major nested arrays; frequencies are in
//    cycles per unit time; keys are emitted in sorted order and floats in
//    shortest round-trip form. Unknown keys are rejected on input.
//  * CSV tables: header `tau` then re_ij,im_ij for each entry in row-major
//    order; one row per lag 0..max_lag.
//  * CSV trajectories: header `t` then re_i,im_i per component.
//  * Binary trajectories, little-endian: "QWSS", u32 version (1), u32 dim,
//    u64 n, f64 dt, then n*dim interleaved (re, im) f64, sample-major.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "qwss/filters.hpp"
#include "qwss/quantum_model.hpp"
#include "qwss/spectral_measure.hpp"
#include "qwss/synthesis_estimation.hpp"
#include "qwss/types.hpp"

namespace qwss::io {

using json = nlohmann::json;

// --- primitives -------------------------------------------------------------

inline void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw Error(errc::kSchema, "expected a JSON object", where);
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
            throw Error(errc::kUnknownField, "unknown field '" + item.key() + "'",
                        where.empty() ? item.key() : where + "." + item.key());
        }
    }
}

inline const json& require_key(const json& j, const char* key, const std::string& where) {
    const auto it = j.find(key);
    if (it == j.end()) throw Error(errc::kSchema, std::string("missing field '") + key + "'", where.empty() ? key : where + "." + key);
    return *it;
}

inline double number_from_json(const json& j, const std::string& where) {
    if (!j.is_number()) throw Error(errc::kSchema, "expected a number", where);
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw Error(errc::kNonFinite, "non-finite number", where);
    return v;
}

inline json complex_to_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline Complex complex_from_json(const json& j, const std::string& where) {
    if (j.is_number()) return {number_from_json(j, where), 0.0};
    if (!j.is_array() || j.size() != 2) throw Error(errc::kSchema, "expected a complex number [re, im]", where);
    return {number_from_json(j[0], where), number_from_json(j[1], where)};
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(complex_to_json(m(i, k)));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Rectangular matrix; `cols_hint` fixes the width of a matrix with no rows.
inline Matrix matrix_from_json(const json& j, const std::string& where, Eigen::Index cols_hint = 0) {
    if (!j.is_array()) throw Error(errc::kSchema, "expected a matrix (array of rows)", where);
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, cols_hint);
    if (!j[0].is_array()) throw Error(errc::kSchema, "expected a matrix (array of rows)", where);
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw Error(errc::kSchema, "ragged matrix", where);
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = complex_from_json(row[static_cast<std::size_t>(c)], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
        }
    }
    return m;
}

inline Matrix square_from_json(const json& j, const std::string& where, Eigen::Index dim) {
    Matrix m = matrix_from_json(j, where);
    if (m.rows() != dim || m.cols() != dim) {
        throw Error(errc::kDimMismatch, "expected a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix", where);
    }
    return m;
}

inline Eigen::Index dim_from_json(const json& j, const std::string& where) {
    if (!j.is_number_integer() || j.get<long long>() <= 0) throw Error(errc::kSchema, "expected a positive integer", where);
    return static_cast<Eigen::Index>(j.get<long long>());
}

inline std::string dump(const json& j) { return j.dump(1) + "\n"; }

inline json parse_json(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(errc::kSchema, std::string("malformed JSON: ") + e.what());
    }
}

// --- measures ---------------------------------------------------------------

inline json measure_to_json(const SpectralMeasure& mu) {
    json j;
    j["dim"] = mu.dim();
    j["frequency_unit"] = "cycles";
    json atoms = json::array();
    for (const auto& a : mu.atoms()) atoms.push_back({{"nu", a.nu}, {"weight", matrix_to_json(a.weight)}});
    j["atoms"] = std::move(atoms);
    if (const auto& d = mu.density()) {
        json values = json::array();
        for (const auto& v : d->values) values.push_back(matrix_to_json(v));
        j["density"] = {{"nu_min", d->nu_min}, {"nu_max", d->nu_max}, {"bins", d->bins()}, {"values", std::move(values)}};
    }
    if (const auto& w = mu.full_line_level()) j["full_line_level"] = matrix_to_json(*w);
    return j;
}

inline SpectralMeasure measure_from_json(const json& j) {
    reject_unknown_keys(j, {"dim", "frequency_unit", "atoms", "density", "full_line_level"}, "");
    const Eigen::Index dim = dim_from_json(require_key(j, "dim", ""), "dim");
    if (const auto it = j.find("frequency_unit"); it != j.end() && *it != "cycles") {
        throw Error(errc::kSchema, "frequency_unit must be \"cycles\"", "frequency_unit");
    }
    if (const auto it = j.find("full_line_level"); it != j.end()) {
        if (j.contains("density") || (j.contains("atoms") && !j["atoms"].empty())) {
            throw Error(errc::kSchema, "full_line_level excludes atoms and density", "full_line_level");
        }
        return SpectralMeasure::full_line_white(square_from_json(*it, "full_line_level", dim));
    }
    std::vector<SpectralAtom> atoms;
    const json& ja = require_key(j, "atoms", "");
    if (!ja.is_array()) throw Error(errc::kSchema, "atoms must be an array", "atoms");
    for (std::size_t k = 0; k < ja.size(); ++k) {
        const std::string where = "atoms[" + std::to_string(k) + "]";
        reject_unknown_keys(ja[k], {"nu", "weight"}, where);
        atoms.push_back({number_from_json(require_key(ja[k], "nu", where), where + ".nu"),
                         square_from_json(require_key(ja[k], "weight", where), where + ".weight", dim)});
    }
    std::optional<DensityGrid> density;
    if (const auto it = j.find("density"); it != j.end()) {
        const json& jd = *it;
        reject_unknown_keys(jd, {"nu_min", "nu_max", "bins", "values"}, "density");
        DensityGrid g;
        g.nu_min = number_from_json(require_key(jd, "nu_min", "density"), "density.nu_min");
        g.nu_max = number_from_json(require_key(jd, "nu_max", "density"), "density.nu_max");
        const auto bins = dim_from_json(require_key(jd, "bins", "density"), "density.bins");
        const json& jv = require_key(jd, "values", "density");
        if (!jv.is_array() || static_cast<Eigen::Index>(jv.size()) != bins) {
            throw Error(errc::kSchema, "density.values must hold exactly `bins` matrices", "density.values");
        }
        for (std::size_t i = 0; i < jv.size(); ++i) {
            g.values.push_back(square_from_json(jv[i], "density.values[" + std::to_string(i) + "]", dim));
        }
        density = std::move(g);
    }
    return SpectralMeasure(dim, std::move(atoms), std::move(density));
}

inline std::string serialize_measure(const SpectralMeasure& mu) { return dump(measure_to_json(mu)); }

inline SpectralMeasure deserialize_measure(std::string_view text) { return measure_from_json(parse_json(text)); }

// --- filters ----------------------------------------------------------------

inline json filter_to_json(const FilterSpec& f) {
    json j;
    if (const auto* s = f.as<ShiftFilter>()) {
        j = {{"type", "shift"}, {"dim", f.dim()}, {"s", s->s}};
    } else if (f.as<DerivativeFilter>()) {
        j = {{"type", "derivative"}, {"dim", f.dim()}};
    } else if (const auto* c = f.as<ScalarConvolutionFilter>()) {
        if (!c->table) throw Error(errc::kSchema, "closed-form scalar convolution filters cannot be serialized");
        json values = json::array();
        for (const auto& v : c->table->second) values.push_back(complex_to_json(v));
        j = {{"type", "scalar_convolution"}, {"dim", f.dim()}, {"edges", c->table->first}, {"hhat", std::move(values)}};
    } else if (const auto* e = f.as<ExpOperatorFilter>()) {
        j = {{"type", "exp_operator"}, {"gamma", matrix_to_json(e->gamma)}, {"a", matrix_to_json(e->a)}};
    } else if (const auto* t = f.as<TabulatedFilter>()) {
        json values = json::array();
        for (const auto& v : t->values) values.push_back(matrix_to_json(v));
        j = {{"type", "tabulated"}, {"edges", t->edges}, {"values", std::move(values)}};
    }
    return j;
}

inline std::vector<double> reals_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw Error(errc::kSchema, "expected an array of numbers", where);
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number_from_json(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

inline FilterSpec filter_from_json(const json& j) {
    if (!j.is_object()) throw Error(errc::kSchema, "filter must be a JSON object");
    const json& type = require_key(j, "type", "");
    if (!type.is_string()) throw Error(errc::kSchema, "filter type must be a string", "type");
    const auto t = type.get<std::string>();
    if (t == "shift") {
        reject_unknown_keys(j, {"type", "dim", "s"}, "");
        return FilterSpec::shift(dim_from_json(require_key(j, "dim", ""), "dim"), number_from_json(require_key(j, "s", ""), "s"));
    }
    if (t == "derivative") {
        reject_unknown_keys(j, {"type", "dim"}, "");
        return FilterSpec::derivative(dim_from_json(require_key(j, "dim", ""), "dim"));
    }
    if (t == "scalar_convolution") {
        reject_unknown_keys(j, {"type", "dim", "edges", "hhat"}, "");
        const json& jh = require_key(j, "hhat", "");
        if (!jh.is_array()) throw Error(errc::kSchema, "hhat must be an array", "hhat");
        std::vector<Complex> values;
        for (std::size_t i = 0; i < jh.size(); ++i) values.push_back(complex_from_json(jh[i], "hhat[" + std::to_string(i) + "]"));
        return FilterSpec::scalar_convolution(dim_from_json(require_key(j, "dim", ""), "dim"),
                                              reals_from_json(require_key(j, "edges", ""), "edges"), std::move(values));
    }
    if (t == "exp_operator") {
        reject_unknown_keys(j, {"type", "gamma", "a"}, "");
        return FilterSpec::exp_operator(matrix_from_json(require_key(j, "gamma", ""), "gamma"), matrix_from_json(require_key(j, "a", ""), "a"));
    }
    if (t == "tabulated") {
        reject_unknown_keys(j, {"type", "edges", "values"}, "");
        const json& jv = require_key(j, "values", "");
        if (!jv.is_array()) throw Error(errc::kSchema, "values must be an array", "values");
        std::vector<Matrix> values;
        for (std::size_t i = 0; i < jv.size(); ++i) values.push_back(matrix_from_json(jv[i], "values[" + std::to_string(i) + "]"));
        return FilterSpec::tabulated(reals_from_json(require_key(j, "edges", ""), "edges"), std::move(values));
    }
    throw Error(errc::kSchema, "unknown filter type '" + t + "'", "type");
}

// --- models, kernels --------------------------------------------------------

inline json model_to_json(const QuantumModel& m) {
    json modes = json::array();
    for (const auto& md : m.modes()) modes.push_back({{"nu", md.nu}, {"m", matrix_to_json(md.m)}, {"d", matrix_to_json(md.d)}});
    return {{"dim_h", m.dim_h()}, {"dim_k", m.dim_k()}, {"rho_k", matrix_to_json(m.rho_k())}, {"modes", std::move(modes)}};
}

/// With "orthogonalize": true the D operators are first made mean-zero and
/// mutually orthogonal under rho_K.
inline QuantumModel model_from_json(const json& j) {
    reject_unknown_keys(j, {"dim_h", "dim_k", "rho_k", "modes", "orthogonalize"}, "");
    const Eigen::Index dh = dim_from_json(require_key(j, "dim_h", ""), "dim_h");
    const Eigen::Index dk = dim_from_json(require_key(j, "dim_k", ""), "dim_k");
    Matrix rho = square_from_json(require_key(j, "rho_k", ""), "rho_k", dk);
    const json& jm = require_key(j, "modes", "");
    if (!jm.is_array()) throw Error(errc::kSchema, "modes must be an array", "modes");
    std::vector<QuantumMode> modes;
    for (std::size_t k = 0; k < jm.size(); ++k) {
        const std::string where = "modes[" + std::to_string(k) + "]";
        reject_unknown_keys(jm[k], {"nu", "m", "d"}, where);
        modes.push_back({number_from_json(require_key(jm[k], "nu", where), where + ".nu"),
                         square_from_json(require_key(jm[k], "m", where), where + ".m", dh),
                         square_from_json(require_key(jm[k], "d", where), where + ".d", dk)});
    }
    bool orth = false;
    if (const auto it = j.find("orthogonalize"); it != j.end()) {
        if (!it->is_boolean()) throw Error(errc::kSchema, "orthogonalize must be a boolean", "orthogonalize");
        orth = it->get<bool>();
    }
    if (orth) {
        std::vector<Matrix> ds;
        for (const auto& md : modes) ds.push_back(md.d);
        const auto fixed = orthogonalize_modes(rho, ds);
        for (std::size_t k = 0; k < modes.size(); ++k) modes[k].d = fixed[k];
    }
    return QuantumModel(dh, dk, std::move(rho), std::move(modes));
}

inline KernelBlocks kernel_from_json(const json& j) {
    reject_unknown_keys(j, {"blocks"}, "");
    const json& jb = require_key(j, "blocks", "");
    if (!jb.is_array() || jb.empty()) throw Error(errc::kSchema, "blocks must be a non-empty n x n array of matrices", "blocks");
    KernelBlocks out(jb.size());
    for (std::size_t i = 0; i < jb.size(); ++i) {
        if (!jb[i].is_array() || jb[i].size() != jb.size()) throw Error(errc::kSchema, "blocks must be n x n", "blocks[" + std::to_string(i) + "]");
        for (std::size_t k = 0; k < jb.size(); ++k) {
            out[i].push_back(matrix_from_json(jb[i][k], "blocks[" + std::to_string(i) + "][" + std::to_string(k) + "]"));
        }
    }
    return out;
}

inline json kernel_to_json(const KernelBlocks& kernel) {
    json blocks = json::array();
    for (const auto& row : kernel) {
        json jr = json::array();
        for (const auto& b : row) jr.push_back(matrix_to_json(b));
        blocks.push_back(std::move(jr));
    }
    return {{"blocks", std::move(blocks)}};
}

inline json factorization_to_json(const KolmogorovFactorization& f) {
    json blocks = json::array();
    for (const auto& v : f.blocks) blocks.push_back(matrix_to_json(v));
    const Eigen::Index d = f.blocks.empty() ? 0 : f.blocks.front().cols();
    return {{"rank", f.rank}, {"dim", d}, {"blocks", std::move(blocks)}};
}

inline KolmogorovFactorization factorization_from_json(const json& j) {
    reject_unknown_keys(j, {"rank", "dim", "blocks"}, "");
    KolmogorovFactorization f;
    const json& jr = require_key(j, "rank", "");
    if (!jr.is_number_integer() || jr.get<long long>() < 0) throw Error(errc::kSchema, "rank must be a non-negative integer", "rank");
    f.rank = static_cast<Eigen::Index>(jr.get<long long>());
    const Eigen::Index d = dim_from_json(require_key(j, "dim", ""), "dim");
    const json& jb = require_key(j, "blocks", "");
    if (!jb.is_array()) throw Error(errc::kSchema, "blocks must be an array", "blocks");
    for (std::size_t i = 0; i < jb.size(); ++i) {
        f.blocks.push_back(matrix_from_json(jb[i], "blocks[" + std::to_string(i) + "]", d));
        if (f.blocks.back().rows() != f.rank || f.blocks.back().cols() != d) {
            throw Error(errc::kDimMismatch, "factor block has the wrong shape", "blocks[" + std::to_string(i) + "]");
        }
    }
    return f;
}

// --- CSV --------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw Error(errc::kSchema, "malformed number '" + std::string(s) + "'", where);
    return v;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::vector<std::string> matrix_entry_headers(Eigen::Index dim) {
    std::vector<std::string> h;
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index k = 0; k < dim; ++k) {
            // re_ij; indices are separated once they need two digits
            const std::string idx = dim > 10 ? std::to_string(i) + "_" + std::to_string(k) : std::to_string(i) + std::to_string(k);
            h.push_back("re_" + idx);
            h.push_back("im_" + idx);
        }
    }
    return h;
}

inline void append_matrix_row(std::string& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            out += ',';
            out += format_double(m(i, k).real());
            out += ',';
            out += format_double(m(i, k).imag());
        }
    }
}

inline std::string serialize_covariance_csv(const CovarianceTable& c) {
    std::string out = "tau";
    for (const auto& h : matrix_entry_headers(c.dim)) out += "," + h;
    out += '\n';
    for (std::size_t m = 0; m < c.values.size(); ++m) {
        out += format_double(static_cast<double>(m) * c.dt);
        append_matrix_row(out, c.values[m]);
        out += '\n';
    }
    return out;
}

namespace detail {

inline std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        std::string_view line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(line);
        start = pos + 1;
    }
    return lines;
}

}  // namespace detail

/// Reads a lag table; dt is taken from the second row's tau and every row
/// must sit on the uniform grid m * dt.
inline CovarianceTable deserialize_covariance_csv(std::string_view text) {
    const auto lines = detail::lines_of(text);
    if (lines.size() < 2) throw Error(errc::kSchema, "covariance CSV needs a header and at least one row");
    const auto header = split_csv(lines[0]);
    if (header.empty() || header[0] != "tau") throw Error(errc::kSchema, "covariance CSV header must start with 'tau'", "header");
    const std::size_t entries = (header.size() - 1) / 2;
    const auto dim = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(entries))));
    if ((header.size() - 1) % 2 != 0 || static_cast<std::size_t>(dim * dim) != entries || dim == 0) {
        throw Error(errc::kSchema, "covariance CSV header has the wrong number of columns", "header");
    }
    const auto expected = matrix_entry_headers(dim);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (header[i + 1] != expected[i]) throw Error(errc::kSchema, "unexpected column '" + std::string(header[i + 1]) + "'", "header");
    }
    CovarianceTable c{dim, 0.0, {}};
    std::vector<double> taus;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string where = "row " + std::to_string(r);
        const auto cells = split_csv(lines[r]);
        if (cells.size() != header.size()) throw Error(errc::kSchema, "wrong number of cells", where);
        taus.push_back(parse_double(cells[0], where));
        Matrix m(dim, dim);
        std::size_t col = 1;
        for (Eigen::Index i = 0; i < dim; ++i) {
            for (Eigen::Index k = 0; k < dim; ++k, col += 2) m(i, k) = {parse_double(cells[col], where), parse_double(cells[col + 1], where)};
        }
        c.values.push_back(std::move(m));
    }
    if (taus[0] != 0.0) throw Error(errc::kSchema, "first row must be tau = 0", "row 1");
    c.dt = taus.size() > 1 ? taus[1] : 1.0;
    for (std::size_t m = 1; m < taus.size(); ++m) {
        const double want = static_cast<double>(m) * c.dt;
        if (std::abs(taus[m] - want) > 1e-9 * std::max(1.0, std::abs(want))) {
            throw Error(errc::kSchema, "tau column is not a uniform grid starting at 0", "row " + std::to_string(m + 1));
        }
    }
    c.validate();
    return c;
}

inline std::string serialize_trajectory_csv(const Trajectory& x) {
    std::string out = "t";
    for (Eigen::Index i = 0; i < x.dim(); ++i) out += ",re_" + std::to_string(i) + ",im_" + std::to_string(i);
    out += '\n';
    for (Eigen::Index m = 0; m < x.size(); ++m) {
        out += format_double(static_cast<double>(m) * x.dt);
        for (Eigen::Index i = 0; i < x.dim(); ++i) {
            out += ',' + format_double(x.samples(i, m).real()) + ',' + format_double(x.samples(i, m).imag());
        }
        out += '\n';
    }
    return out;
}

inline Trajectory deserialize_trajectory_csv(std::string_view text) {
    const auto lines = detail::lines_of(text);
    if (lines.size() < 3) throw Error(errc::kSchema, "trajectory CSV needs a header and at least two rows");
    const auto header = split_csv(lines[0]);
    if (header.empty() || header[0] != "t" || (header.size() - 1) % 2 != 0 || header.size() < 3) {
        throw Error(errc::kSchema, "trajectory CSV header must be t,re_0,im_0,...", "header");
    }
    const auto dim = static_cast<Eigen::Index>((header.size() - 1) / 2);
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (header[static_cast<std::size_t>(1 + 2 * i)] != "re_" + std::to_string(i) ||
            header[static_cast<std::size_t>(2 + 2 * i)] != "im_" + std::to_string(i)) {
            throw Error(errc::kSchema, "unexpected trajectory column names", "header");
        }
    }
    Trajectory x;
    x.samples.resize(dim, static_cast<Eigen::Index>(lines.size() - 1));
    std::vector<double> ts;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string where = "row " + std::to_string(r);
        const auto cells = split_csv(lines[r]);
        if (cells.size() != header.size()) throw Error(errc::kSchema, "wrong number of cells", where);
        ts.push_back(parse_double(cells[0], where));
        for (Eigen::Index i = 0; i < dim; ++i) {
            x.samples(i, static_cast<Eigen::Index>(r - 1)) = {parse_double(cells[static_cast<std::size_t>(1 + 2 * i)], where),
                                                              parse_double(cells[static_cast<std::size_t>(2 + 2 * i)], where)};
        }
    }
    x.dt = ts[1] - ts[0];
    if (!(x.dt > 0.0)) throw Error(errc::kSchema, "trajectory time column must increase", "row 2");
    for (std::size_t m = 0; m < ts.size(); ++m) {
        const double want = static_cast<double>(m) * x.dt;
        if (std::abs(ts[m] - want) > 1e-9 * std::max(1.0, std::abs(want))) {
            throw Error(errc::kSchema, "trajectory is not uniformly sampled from t = 0", "row " + std::to_string(m + 1));
        }
    }
    if (!all_finite(x.samples)) throw Error(errc::kNonFinite, "trajectory has non-finite samples");
    return x;
}

// --- binary trajectories ----------------------------------------------------

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
    static_assert(std::endian::native == std::endian::little, "binary trajectory I/O assumes a little-endian host");
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

template <class T>
T get_le(std::string_view data, std::size_t& pos) {
    if (pos + sizeof(T) > data.size()) throw Error(errc::kSchema, "binary trajectory truncated");
    T value;
    std::memcpy(&value, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace detail

inline constexpr std::uint32_t kTrajectoryFormatVersion = 1;

inline std::string serialize_trajectory_binary(const Trajectory& x) {
    std::string out = "QWSS";
    detail::put_le<std::uint32_t>(out, kTrajectoryFormatVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(x.dim()));
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(x.size()));
    detail::put_le<double>(out, x.dt);
    out.reserve(out.size() + static_cast<std::size_t>(x.samples.size()) * 16);
    for (Eigen::Index m = 0; m < x.size(); ++m) {
        for (Eigen::Index i = 0; i < x.dim(); ++i) {
            detail::put_le<double>(out, x.samples(i, m).real());
            detail::put_le<double>(out, x.samples(i, m).imag());
        }
    }
    return out;
}

inline Trajectory deserialize_trajectory_binary(std::string_view data) {
    if (data.size() < 4 || data.substr(0, 4) != "QWSS") throw Error(errc::kSchema, "not a QWSS trajectory file (bad magic)");
    std::size_t pos = 4;
    const auto version = detail::get_le<std::uint32_t>(data, pos);
    if (version != kTrajectoryFormatVersion) throw Error(errc::kSchema, "unsupported trajectory format version " + std::to_string(version));
    const auto dim = detail::get_le<std::uint32_t>(data, pos);
    const auto n = detail::get_le<std::uint64_t>(data, pos);
    Trajectory x;
    x.dt = detail::get_le<double>(data, pos);
    if (dim == 0 || !(x.dt > 0.0)) throw Error(errc::kSchema, "binary trajectory header has invalid dim or dt");
    if (data.size() - pos != n * dim * 16) throw Error(errc::kSchema, "binary trajectory payload size does not match header");
    x.samples.resize(dim, static_cast<Eigen::Index>(n));
    for (std::uint64_t m = 0; m < n; ++m) {
        for (std::uint32_t i = 0; i < dim; ++i) {
            const double re = detail::get_le<double>(data, pos);
            const double im = detail::get_le<double>(data, pos);
            x.samples(i, static_cast<Eigen::Index>(m)) = {re, im};
        }
    }
    if (!all_finite(x.samples)) throw Error(errc::kNonFinite, "trajectory has non-finite samples");
    return x;
}

// --- files ------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(errc::kIo, "cannot open '" + path.string() + "' for reading", path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(errc::kIo, "cannot open '" + tmp.string() + "' for writing", path.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(errc::kIo, "write to '" + tmp.string() + "' failed", path.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(errc::kIo, "cannot move output into '" + path.string() + "'", path.string());
    }
}

inline Trajectory read_trajectory(const std::filesystem::path& path) {
    const std::string data = read_file(path);
    if (data.size() >= 4 && data.compare(0, 4, "QWSS") == 0) return deserialize_trajectory_binary(data);
    return deserialize_trajectory_csv(data);
}

inline json error_to_json(const Error& e) {
    json j = {{"code", e.code()}, {"message", e.what()}, {"location", e.location()}};
    if (e.witness()) j["witness"] = *e.witness();
    return {{"error", std::move(j)}};
}

}  // namespace qwss::io
