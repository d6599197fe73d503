#ifndef LIOUVILLE_FLOW_IO_HPP
#define LIOUVILLE_FLOW_IO_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "core.hpp"

namespace liouville_flow
{

struct dataset_not_found : error {
    explicit dataset_not_found(const std::string &what) : error("dataset_not_found", what) {}
};

struct parse_error : error {
    explicit parse_error(const std::string &what) : error("parse_error", what) {}
};

// Shortest representation that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string schema_header(const std::string &schema, std::uint64_t seed)
{
    return "# schema=" + schema + " seed=" + std::to_string(seed);
}

// Header line, column names x_1..x_d, one row per point.
inline void write_points_csv(std::ostream &os, const std::vector<Vector> &points, int d, const std::string &schema,
                             std::uint64_t seed)
{
    os << schema_header(schema, seed) << '\n';
    for (int i = 0; i < d; ++i) {
        os << (i ? "," : "") << "x_" << (i + 1);
    }
    os << '\n';
    for (const auto &p : points) {
        if (p.size() != d) {
            throw dimension_mismatch("point of dimension " + std::to_string(p.size()) + " in a d=" +
                                     std::to_string(d) + " file");
        }
        for (int i = 0; i < d; ++i) {
            os << (i ? "," : "") << format_double(p(i));
        }
        os << '\n';
    }
}

// Reads d numeric columns. Lines starting with '#' and a non-numeric first
// row (column names) are skipped. d = 0 infers the width from the first row.
inline std::vector<Vector> read_points_csv(std::istream &is, int d = 0)
{
    std::vector<Vector> out;
    std::string line;
    std::size_t line_no = 0;
    bool first_row = true;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        bool numeric = true;
        for (std::string cell; std::getline(ss, cell, ',');) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            if (b == std::string::npos) {
                numeric = false;
                break;
            }
            double v = 0.0;
            const char *begin = cell.data() + b;
            const char *end = cell.data() + e + 1;
            if (*begin == '+') {
                ++begin;
            }
            const auto res = std::from_chars(begin, end, v);
            if (res.ec != std::errc() || res.ptr != end) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (first_row) {
                first_row = false;
                continue;
            }
            throw parse_error("non-numeric value on line " + std::to_string(line_no));
        }
        first_row = false;
        if (d == 0) {
            d = static_cast<int>(row.size());
        }
        if (static_cast<int>(row.size()) != d) {
            throw dimension_mismatch("line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                                     " columns, expected " + std::to_string(d));
        }
        out.push_back(Eigen::Map<const Vector>(row.data(), d));
    }
    return out;
}

inline std::vector<Vector> read_points_csv(const std::filesystem::path &path, int d = 0)
{
    std::ifstream is(path);
    if (!is) {
        throw dataset_not_found("cannot open dataset " + path.string());
    }
    return read_points_csv(is, d);
}

// Returns the seed recorded in a "# schema=... seed=..." first line, if any.
inline std::optional<std::uint64_t> read_header_seed(std::istream &is)
{
    std::string line;
    if (!std::getline(is, line) || line.rfind("# schema=", 0) != 0) {
        return std::nullopt;
    }
    const auto pos = line.find(" seed=");
    if (pos == std::string::npos) {
        return std::nullopt;
    }
    std::uint64_t seed = 0;
    const char *begin = line.data() + pos + 6;
    const auto res = std::from_chars(begin, line.data() + line.size(), seed);
    if (res.ec != std::errc()) {
        return std::nullopt;
    }
    return seed;
}

} // namespace liouville_flow

#endif
