#pragma once

#include <fstream>
#include <string>

#include "solarmpc/matrix_io.hpp"
#include "solarmpc/qp.hpp"

namespace solarmpc {

inline void dump_qp(std::ostream& os, const QpProblem<double>& p)
{
    os << "# solarmpc qp dump\n";
    write_matrix_block(os, "Q", p.Q);
    write_matrix_block(os, "c", p.c);
    write_matrix_block(os, "A_ineq", p.A_ineq);
    write_matrix_block(os, "b_ineq", p.b_ineq);
    write_matrix_block(os, "A_eq", p.A_eq);
    write_matrix_block(os, "b_eq", p.b_eq);
}

inline QpProblem<double> load_qp(std::istream& is)
{
    const MatrixBlocks b = read_matrix_blocks(is);
    auto vec = [&](const char* name) -> Eigen::VectorXd {
        const Eigen::MatrixXd& M = require_block(b, name);
        if (M.cols() != 1 && M.rows() > 0)
            throw ParseError(std::string("qp dump: '") + name + "' must be a column vector");
        return M.reshaped();
    };
    return QpProblem<double>(require_block(b, "Q"), vec("c"), require_block(b, "A_ineq"), vec("b_ineq"),
                             require_block(b, "A_eq"), vec("b_eq"));
}

inline void dump_qp_file(const std::string& path, const QpProblem<double>& p)
{
    std::ofstream f(path);
    if (!f)
        throw Error("cannot open '" + path + "' for writing");
    dump_qp(f, p);
}

inline QpProblem<double> load_qp_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw ParseError("cannot open '" + path + "'");
    return load_qp(f);
}

} // namespace solarmpc
