#pragma once

// Plain-text matrix blocks used for QP repro dumps and polytope files:
//
//   <name> <rows> <cols>
//   <row-major values, whitespace separated>
//
// Values are written with %.17g so a dump/load round trip is exact for doubles.
// Lines starting with '#' are comments.

#include <Eigen/Dense>

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "solarmpc/errors.hpp"

namespace solarmpc {

using MatrixBlocks = std::map<std::string, Eigen::MatrixXd>;

inline void write_matrix_block(std::ostream& os, const std::string& name, const Eigen::MatrixXd& M)
{
    os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    char buf[40];
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", M(r, c));
            os << (c ? " " : "") << buf;
        }
        os << '\n';
    }
}

inline MatrixBlocks read_matrix_blocks(std::istream& is)
{
    MatrixBlocks out;
    std::string line;
    int lineno = 0;
    auto next_content_line = [&](std::string& dst) {
        while (std::getline(is, dst)) {
            ++lineno;
            const auto p = dst.find_first_not_of(" \t\r");
            if (p == std::string::npos || dst[p] == '#')
                continue;
            return true;
        }
        return false;
    };
    while (next_content_line(line)) {
        std::istringstream hdr(line);
        std::string name;
        long rows = -1, cols = -1;
        if (!(hdr >> name >> rows >> cols) || rows < 0 || cols < 0)
            throw ParseError("matrix block: expected '<name> <rows> <cols>'", lineno);
        if (out.count(name))
            throw ParseError("matrix block: duplicate name '" + name + "'", lineno);
        Eigen::MatrixXd M(rows, cols);
        for (long r = 0; r < rows; ++r) {
            if (!next_content_line(line))
                throw ParseError("matrix block '" + name + "': missing rows", lineno);
            std::istringstream row(line);
            for (long c = 0; c < cols; ++c) {
                std::string tok;
                if (!(row >> tok))
                    throw ParseError("matrix block '" + name + "': short row", lineno);
                try {
                    std::size_t used = 0;
                    M(r, c) = std::stod(tok, &used);
                    if (used != tok.size())
                        throw std::invalid_argument(tok);
                } catch (const std::exception&) {
                    throw ParseError("matrix block '" + name + "': bad number '" + tok + "'", lineno);
                }
            }
            std::string extra;
            if (row >> extra)
                throw ParseError("matrix block '" + name + "': too many values in row", lineno);
        }
        out.emplace(name, std::move(M));
    }
    return out;
}

inline const Eigen::MatrixXd& require_block(const MatrixBlocks& blocks, const std::string& name)
{
    auto it = blocks.find(name);
    if (it == blocks.end())
        throw ParseError("matrix file: missing block '" + name + "'");
    return it->second;
}

} // namespace solarmpc
