#pragma once

// Internal JSON <-> Eigen helpers shared by the problem-file readers and the
// CLI report writers.  Not installed; include from src/ only.

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mflq/model.hpp"

namespace mflq::jsonutil {

using nlohmann::json;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ParseError(msg);
}

inline std::pair<int, int> line_col(const std::string& text, size_t byte) {
    int line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

// Parses text, translating nlohmann's byte offsets into line/column.
inline json parse_with_location(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("JSON parse error at line " + std::to_string(line) + ", column " +
                         std::to_string(col) + ": " + e.what());
    } catch (const json::exception& e) {
        // e.g. number overflow: no byte offset available, but still a parse error.
        throw ParseError(std::string("JSON error: ") + e.what());
    }
}

inline double as_finite_double(const json& v, const std::string& where) {
    require(v.is_number(), where + ": expected a number");
    const double d = v.get<double>();
    require(std::isfinite(d), where + ": non-finite value");
    return d;
}

inline Eigen::MatrixXd read_matrix(const json& v, int rows, int cols, const std::string& where) {
    require(v.is_array() && static_cast<int>(v.size()) == rows,
            where + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd M(rows, cols);
    for (int i = 0; i < rows; ++i) {
        const json& row = v[static_cast<size_t>(i)];
        require(row.is_array() && static_cast<int>(row.size()) == cols,
                where + ": expected " + std::to_string(cols) + " columns in row " +
                    std::to_string(i));
        for (int j = 0; j < cols; ++j)
            M(i, j) = as_finite_double(row[static_cast<size_t>(j)],
                                       where + "[" + std::to_string(i) + "][" +
                                           std::to_string(j) + "]");
    }
    return M;
}

inline Eigen::VectorXd read_vector(const json& v, int size, const std::string& where) {
    require(v.is_array() && static_cast<int>(v.size()) == size,
            where + ": expected " + std::to_string(size) + " entries");
    Eigen::VectorXd x(size);
    for (int i = 0; i < size; ++i)
        x(i) = as_finite_double(v[static_cast<size_t>(i)], where + "[" + std::to_string(i) + "]");
    return x;
}

inline std::vector<Eigen::MatrixXd> read_matrix_seq(const json& v, int count, int rows, int cols,
                                                    const std::string& where) {
    require(v.is_array() && static_cast<int>(v.size()) == count,
            where + ": expected " + std::to_string(count) + " matrices");
    std::vector<Eigen::MatrixXd> seq;
    seq.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k)
        seq.push_back(read_matrix(v[static_cast<size_t>(k)], rows, cols,
                                  where + "[" + std::to_string(k) + "]"));
    return seq;
}

inline std::vector<std::vector<Eigen::MatrixXd>> read_channel_seq(const json& v, int count,
                                                                  int channels, int rows,
                                                                  int cols,
                                                                  const std::string& where) {
    require(v.is_array() && static_cast<int>(v.size()) == count,
            where + ": expected " + std::to_string(count) + " steps");
    std::vector<std::vector<Eigen::MatrixXd>> seq;
    seq.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k)
        seq.push_back(read_matrix_seq(v[static_cast<size_t>(k)], channels, rows, cols,
                                      where + "[" + std::to_string(k) + "]"));
    return seq;
}

inline json matrix_to_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (int i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const Eigen::VectorXd& x) {
    json out = json::array();
    for (int i = 0; i < x.size(); ++i) out.push_back(x(i));
    return out;
}

inline json row_to_json(const Eigen::RowVectorXd& x) {
    json out = json::array();
    for (int i = 0; i < x.size(); ++i) out.push_back(x(i));
    return out;
}

inline json matrix_seq_to_json(const std::vector<Eigen::MatrixXd>& seq) {
    json out = json::array();
    for (const auto& M : seq) out.push_back(matrix_to_json(M));
    return out;
}

inline json channel_seq_to_json(const std::vector<std::vector<Eigen::MatrixXd>>& seq) {
    json out = json::array();
    for (const auto& step : seq) out.push_back(matrix_seq_to_json(step));
    return out;
}

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        require(allowed.count(it.key()) > 0, where + ": unknown key \"" + it.key() + "\"");
}

// Symmetrize a declared-symmetric matrix in place, recording a warning when
// the asymmetry is large enough to look like a data error rather than noise.
inline void symmetrize(Eigen::MatrixXd& M, const std::string& name,
                       std::vector<std::string>* warnings) {
    const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-9 && warnings)
        warnings->push_back("symmetrized " + name + " (asymmetry " + std::to_string(asym) + ")");
    M = ((M + M.transpose()) / 2.0).eval();
}

inline void symmetrize_seq(std::vector<Eigen::MatrixXd>& seq, const std::string& name,
                           std::vector<std::string>* warnings) {
    for (size_t k = 0; k < seq.size(); ++k)
        symmetrize(seq[k], name + "[" + std::to_string(k) + "]", warnings);
}

inline int read_positive_int(const json& obj, const char* key) {
    require(obj.contains(key), std::string("missing key \"") + key + "\"");
    const json& v = obj[key];
    require(v.is_number_integer() && v.get<long long>() > 0,
            std::string("\"") + key + "\" must be a positive integer");
    return static_cast<int>(v.get<long long>());
}

}  // namespace mflq::jsonutil
