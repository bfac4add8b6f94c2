#pragma once

// H-representation polytopes {x : Hx <= h} and the set recursions built on
// them (Minkowski difference, maximal invariant sets, mRPI outer bounds).
// Support functions are LPs solved as QPs with a 1e-10 * I Hessian.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <vector>

#include "solarmpc/errors.hpp"
#include "solarmpc/linalg.hpp"
#include "solarmpc/matrix_io.hpp"
#include "solarmpc/qp.hpp"

namespace solarmpc {

template <typename Scalar = double>
struct HPolytope {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix H;
    Vector h;

    HPolytope() = default;
    HPolytope(Matrix H_, Vector h_) : H(std::move(H_)), h(std::move(h_))
    {
        if (H.rows() != h.size())
            throw ShapeError("HPolytope: H rows must match size(h)");
    }

    Eigen::Index dim() const { return H.cols(); }
    Eigen::Index rows() const { return H.rows(); }

    static HPolytope box(const Vector& lo, const Vector& hi)
    {
        const Eigen::Index n = lo.size();
        if (hi.size() != n)
            throw ShapeError("HPolytope::box: bound sizes differ");
        HPolytope P;
        P.H = Matrix::Zero(2 * n, n);
        P.h = Vector(2 * n);
        for (Eigen::Index i = 0; i < n; ++i) {
            P.H(2 * i, i) = Scalar(1);
            P.h(2 * i) = hi(i);
            P.H(2 * i + 1, i) = Scalar(-1);
            P.h(2 * i + 1) = -lo(i);
        }
        return P;
    }

    /// The canonical empty set in dimension n: 0'x <= -1.
    static HPolytope empty_set(Eigen::Index n) { return HPolytope(Matrix::Zero(1, n), Vector::Constant(1, Scalar(-1))); }

    bool contains(const Vector& x, Scalar tol = Scalar(1e-9)) const
    {
        if (x.size() != dim())
            throw ShapeError("HPolytope::contains: dimension mismatch");
        return rows() == 0 || ((H * x - h).array() <= tol).all();
    }

    /// {x + c : x in P}
    HPolytope translate(const Vector& c) const { return HPolytope(H, h + H * c); }

    /// {s x : x in P} for s > 0.
    HPolytope scale(Scalar s) const { return HPolytope(H, s * h); }

    /// {x : A x in P}
    HPolytope preimage(const Matrix& A) const
    {
        if (A.rows() != dim())
            throw ShapeError("HPolytope::preimage: dimension mismatch");
        return HPolytope(H * A, h);
    }

    /// True for the exact canonical empty marker produced by normalize().
    bool is_empty_marker() const { return rows() == 1 && H.row(0).isZero() && h(0) < Scalar(0); }
};

template <typename Scalar>
HPolytope<Scalar> intersect(const HPolytope<Scalar>& a, const HPolytope<Scalar>& b)
{
    if (a.dim() != b.dim())
        throw ShapeError("intersect: dimension mismatch");
    typename HPolytope<Scalar>::Matrix H(a.rows() + b.rows(), a.dim());
    typename HPolytope<Scalar>::Vector h(a.rows() + b.rows());
    H << a.H, b.H;
    h << a.h, b.h;
    return HPolytope<Scalar>(std::move(H), std::move(h));
}

inline constexpr double kSupportRegularization = 1e-10;
inline constexpr double kUnboundedThreshold = 1e7;

namespace detail {

template <typename Scalar>
QpProblem<Scalar> support_lp(const HPolytope<Scalar>& P, const typename HPolytope<Scalar>::Vector& d)
{
    using Matrix = typename HPolytope<Scalar>::Matrix;
    using Vector = typename HPolytope<Scalar>::Vector;
    const Eigen::Index n = P.dim();
    return QpProblem<Scalar>(Scalar(kSupportRegularization) * Matrix::Identity(n, n), -d, P.H, P.h, Matrix(0, n),
                             Vector(0));
}

/// Snap a near-optimal LP point onto the vertex spanned by its active rows.
template <typename Scalar>
typename HPolytope<Scalar>::Vector polish_vertex(const HPolytope<Scalar>& P, const QpSolution<Scalar>& s)
{
    using Matrix = typename HPolytope<Scalar>::Matrix;
    using Vector = typename HPolytope<Scalar>::Vector;
    const Eigen::Index n = P.dim();
    if (static_cast<Eigen::Index>(s.active_set.size()) < n)
        return s.x;
    Matrix Aa(s.active_set.size(), n);
    Vector ba(s.active_set.size());
    for (std::size_t k = 0; k < s.active_set.size(); ++k) {
        Aa.row(k) = P.H.row(s.active_set[k]);
        ba(k) = P.h(s.active_set[k]);
    }
    Eigen::FullPivLU<Matrix> lu(Aa);
    if (lu.rank() < n)
        return s.x;
    const Vector x = Aa.colPivHouseholderQr().solve(ba);
    if (!P.contains(x, Scalar(1e-9)))
        return s.x;
    return x;
}

} // namespace detail

/// Maximizer of d'x over P. Throws EmptySetError or UnboundedError.
template <typename Scalar>
typename HPolytope<Scalar>::Vector support_point(const HPolytope<Scalar>& P, const typename HPolytope<Scalar>::Vector& d)
{
    if (d.size() != P.dim())
        throw ShapeError("support: direction dimension mismatch");
    QpSettings<Scalar> st;
    st.check_psd = false;
    st.max_iter = 500;
    ActiveSetSolver<Scalar> solver(st);
    const QpSolution<Scalar> s = solver.solve(detail::support_lp(P, d));
    if (s.status == QpStatus::infeasible)
        throw EmptySetError("support: polytope is empty");
    if (!s.x.allFinite() || s.x.cwiseAbs().maxCoeff() > Scalar(kUnboundedThreshold))
        throw UnboundedError("support: polytope is unbounded in the requested direction");
    if (s.status != QpStatus::optimal)
        throw UnboundedError("support: LP did not converge (unbounded or badly scaled)");
    return detail::polish_vertex(P, s);
}

template <typename Scalar>
Scalar support(const HPolytope<Scalar>& P, const typename HPolytope<Scalar>::Vector& d)
{
    if (P.rows() == 0) {
        if (d.isZero())
            return Scalar(0);
        throw UnboundedError("support: polytope has no constraints");
    }
    return d.dot(support_point(P, d));
}

template <typename Scalar>
bool is_empty(const HPolytope<Scalar>& P)
{
    if (P.rows() == 0)
        return false;
    QpSettings<Scalar> st;
    st.check_psd = false;
    ActiveSetSolver<Scalar> solver(st);
    const auto d = HPolytope<Scalar>::Vector::Zero(P.dim()).eval();
    return solver.solve(detail::support_lp(P, d)).status == QpStatus::infeasible;
}

/// Unit-norm rows, redundant rows removed in index order. Empty input yields the canonical empty marker.
template <typename Scalar>
HPolytope<Scalar> normalize(const HPolytope<Scalar>& P, Scalar tol = Scalar(1e-10))
{
    using Matrix = typename HPolytope<Scalar>::Matrix;
    using Vector = typename HPolytope<Scalar>::Vector;
    const Eigen::Index n = P.dim();
    if (P.rows() == 0)
        throw PreconditionError("normalize: polytope has no rows");

    std::vector<Eigen::Index> keep;
    Matrix H(P.rows(), n);
    Vector h(P.rows());
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        const Scalar nrm = P.H.row(i).norm();
        if (nrm <= Scalar(1e-14)) {
            if (P.h(i) < -tol)
                return HPolytope<Scalar>::empty_set(n);
            continue;
        }
        H.row(keep.size()) = P.H.row(i) / nrm;
        h(keep.size()) = P.h(i) / nrm;
        keep.push_back(i);
    }
    const Eigen::Index m = static_cast<Eigen::Index>(keep.size());
    HPolytope<Scalar> Q(H.topRows(m), h.head(m));
    if (m == 0)
        return Q;
    if (is_empty(Q))
        return HPolytope<Scalar>::empty_set(n);

    std::vector<bool> alive(m, true);
    for (Eigen::Index i = 0; i < m; ++i) {
        std::vector<Eigen::Index> others;
        for (Eigen::Index j = 0; j < m; ++j)
            if (j != i && alive[j])
                others.push_back(j);
        if (others.empty())
            continue;
        HPolytope<Scalar> R(Matrix(others.size(), n), Vector(others.size()));
        for (std::size_t k = 0; k < others.size(); ++k) {
            R.H.row(k) = Q.H.row(others[k]);
            R.h(k) = Q.h(others[k]);
        }
        try {
            if (support(R, Vector(Q.H.row(i).transpose())) <= Q.h(i) + tol)
                alive[i] = false;
        } catch (const UnboundedError&) {
            // Row i is what bounds the set in this direction.
        }
    }
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i)
        if (alive[i])
            rows.push_back(i);
    HPolytope<Scalar> out(Matrix(rows.size(), n), Vector(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.H.row(k) = Q.H.row(rows[k]);
        out.h(k) = Q.h(rows[k]);
    }
    return out;
}

/// P (-) M S = {x : x + M s in P for all s in S}; M defaults to identity.
template <typename Scalar>
HPolytope<Scalar> minkowski_diff(const HPolytope<Scalar>& P, const HPolytope<Scalar>& S,
                                 const typename HPolytope<Scalar>::Matrix& M)
{
    using Vector = typename HPolytope<Scalar>::Vector;
    if (M.rows() != P.dim() || M.cols() != S.dim())
        throw ShapeError("minkowski_diff: dimension mismatch");
    HPolytope<Scalar> out = P;
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        out.h(i) -= support(S, Vector(M.transpose() * P.H.row(i).transpose()));
    return normalize(out);
}

template <typename Scalar>
HPolytope<Scalar> minkowski_diff(const HPolytope<Scalar>& P, const HPolytope<Scalar>& S)
{
    if (P.dim() != S.dim())
        throw ShapeError("minkowski_diff: dimension mismatch");
    return minkowski_diff(P, S, HPolytope<Scalar>::Matrix::Identity(P.dim(), P.dim()));
}

/// inner subset of outer, tested row-wise on outer's facets.
template <typename Scalar>
bool includes(const HPolytope<Scalar>& outer, const HPolytope<Scalar>& inner, Scalar tol = Scalar(1e-9))
{
    using Vector = typename HPolytope<Scalar>::Vector;
    if (inner.is_empty_marker())
        return true;
    for (Eigen::Index i = 0; i < outer.rows(); ++i)
        if (support(inner, Vector(outer.H.row(i).transpose())) > outer.h(i) + tol)
            return false;
    return true;
}

/// Fixed direction grid: +-e1 in 1-D, 2 pi k / count in 2-D, a Fibonacci sphere in 3-D.
template <typename Scalar>
std::vector<typename HPolytope<Scalar>::Vector> direction_grid(Eigen::Index n, int count = 64)
{
    using Vector = typename HPolytope<Scalar>::Vector;
    std::vector<Vector> dirs;
    if (n == 1) {
        dirs.push_back(Vector::Constant(1, Scalar(1)));
        dirs.push_back(Vector::Constant(1, Scalar(-1)));
    } else if (n == 2) {
        for (int k = 0; k < count; ++k) {
            const double a = 2.0 * std::numbers::pi * k / count;
            Vector d(2);
            d << Scalar(std::cos(a)), Scalar(std::sin(a));
            dirs.push_back(d);
        }
        for (int k = 0; count % 4 == 0 && k < count; k += count / 4) {
            // Exact axis directions (the trig values above carry rounding dust).
            Vector d = Vector::Zero(2);
            const int q = (4 * k) / count;
            d(q % 2) = (q < 2) ? Scalar(1) : Scalar(-1);
            dirs[k] = d;
        }
    } else if (n == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int k = 0; k < count; ++k) {
            const double z = 1.0 - 2.0 * (k + 0.5) / count;
            const double r = std::sqrt(1.0 - z * z);
            Vector d(3);
            d << Scalar(r * std::cos(golden * k)), Scalar(r * std::sin(golden * k)), Scalar(z);
            dirs.push_back(d);
        }
        for (int i = 0; i < 3; ++i)
            for (Scalar s : {Scalar(1), Scalar(-1)}) {
                Vector d = Vector::Zero(3);
                d(i) = s;
                dirs.push_back(d);
            }
    } else {
        throw PreconditionError("direction_grid: only dimensions 1 to 3 are supported");
    }
    return dirs;
}

template <typename Scalar>
struct InvariantSetResult {
    HPolytope<Scalar> set;
    bool converged = false;
    int iterations = 0;
};

/// Largest subset of X that every listed closed loop maps into itself.
template <typename Scalar>
InvariantSetResult<Scalar> max_invariant_set(const std::vector<typename HPolytope<Scalar>::Matrix>& A_cl,
                                             const HPolytope<Scalar>& X, int iter_cap = 100)
{
    for (const auto& A : A_cl) {
        if (A.rows() != X.dim() || A.cols() != X.dim())
            throw ShapeError("max_invariant_set: closed-loop matrix dimension mismatch");
        if (!(spectral_radius(A) < Scalar(1)))
            throw SynthesisError("max_invariant_set: closed-loop matrix is not Schur");
    }
    InvariantSetResult<Scalar> res;
    res.set = normalize(X);
    for (res.iterations = 1; res.iterations <= iter_cap; ++res.iterations) {
        if (res.set.is_empty_marker()) {
            res.converged = true;
            return res;
        }
        HPolytope<Scalar> next = res.set;
        for (const auto& A : A_cl)
            next = intersect(next, res.set.preimage(A));
        next = normalize(next);
        // next is a subset of the current set by construction, so one inclusion suffices.
        const bool fixed = includes(next, res.set, Scalar(1e-9));
        res.set = std::move(next);
        if (fixed) {
            res.converged = true;
            return res;
        }
    }
    res.iterations = iter_cap;
    return res;
}

template <typename Scalar>
struct MrpiResult {
    HPolytope<Scalar> set;
    int s = 0;
    Scalar alpha = 0;
};

/// Outer epsilon-approximation of the minimal RPI set of e+ = A e + xi, xi in E (E contains the origin).
template <typename Scalar>
MrpiResult<Scalar> mrpi_outer_approx(const typename HPolytope<Scalar>::Matrix& A, const HPolytope<Scalar>& E,
                                     Scalar eps, int directions = 64, int s_max = 400)
{
    using Matrix = typename HPolytope<Scalar>::Matrix;
    using Vector = typename HPolytope<Scalar>::Vector;
    const Eigen::Index n = E.dim();
    if (A.rows() != n || A.cols() != n)
        throw ShapeError("mrpi_outer_approx: dimension mismatch");
    if (!(spectral_radius(A) < Scalar(1)))
        throw SynthesisError("mrpi_outer_approx: closed-loop matrix is not Schur");
    if (!E.contains(Vector::Zero(n), Scalar(1e-12)))
        throw PreconditionError("mrpi_outer_approx: E must contain the origin");

    // Support of E along each axis; E = {0} collapses the tube.
    Scalar width = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector d = Vector::Zero(n);
        d(i) = 1;
        width = std::max({width, support(E, d), support(E, Vector(-d))});
    }
    MrpiResult<Scalar> res;
    if (width <= Scalar(1e-14)) {
        res.set = HPolytope<Scalar>::box(Vector::Zero(n), Vector::Zero(n));
        return res;
    }

    // M(s) = max_j sum_{i<s} max(h_E(A^i' e_j), h_E(-A^i' e_j)) bounds F_s inside a box.
    Matrix Ai = Matrix::Identity(n, n);
    Vector msum = Vector::Zero(n);
    for (int s = 1; s <= s_max; ++s) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const Vector col = Ai.transpose().col(j);
            msum(j) += std::max(support(E, col), support(E, Vector(-col)));
        }
        Ai = A * Ai;  // now A^s
        Scalar alpha = 0;
        for (Eigen::Index i = 0; i < E.rows(); ++i) {
            const Scalar val = support(E, Vector(Ai.transpose() * E.H.row(i).transpose()));
            if (E.h(i) > Scalar(1e-14))
                alpha = std::max(alpha, val / E.h(i));
            else if (val > Scalar(1e-14))
                alpha = std::numeric_limits<Scalar>::infinity();
        }
        if (alpha < Scalar(1) && alpha / (Scalar(1) - alpha) * msum.maxCoeff() <= eps) {
            res.s = s;
            res.alpha = alpha;
            break;
        }
    }
    if (res.s == 0)
        throw ApproximationError("mrpi_outer_approx: alpha did not fall below the epsilon bound within s_max");

    const auto dirs = direction_grid<Scalar>(n, directions);
    Matrix H(dirs.size(), n);
    Vector h(dirs.size());
    std::vector<Matrix> powers{Matrix::Identity(n, n)};
    for (int i = 1; i < res.s; ++i)
        powers.push_back(A * powers.back());
    for (std::size_t k = 0; k < dirs.size(); ++k) {
        Scalar sum = 0;
        for (const Matrix& P : powers)
            sum += support(E, Vector(P.transpose() * dirs[k]));
        H.row(k) = dirs[k].transpose();
        h(k) = sum / (Scalar(1) - res.alpha);
    }
    res.set = normalize(HPolytope<Scalar>(H, h));
    return res;
}

inline void write_polytope(std::ostream& os, const HPolytope<double>& P)
{
    write_matrix_block(os, "H", P.H);
    write_matrix_block(os, "h", P.h);
}

inline HPolytope<double> read_polytope(std::istream& is)
{
    const MatrixBlocks b = read_matrix_blocks(is);
    const Eigen::MatrixXd& h = require_block(b, "h");
    if (h.cols() != 1 && h.rows() > 0)
        throw ParseError("polytope: 'h' must be a column vector");
    return HPolytope<double>(require_block(b, "H"), h.reshaped());
}

} // namespace solarmpc
