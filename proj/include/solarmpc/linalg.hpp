#pragma once

// Small dense control-design helpers: spectral radius, discrete Lyapunov,
// discrete Riccati and the associated LQR gain (convention u = K x).

#include <Eigen/Dense>

#include <cmath>

#include "solarmpc/errors.hpp"

namespace solarmpc {

template <typename Derived>
typename Derived::RealScalar spectral_radius(const Eigen::MatrixBase<Derived>& A)
{
    using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::EigenSolver<Matrix> es(Matrix(A), false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves A' P A - P + W = 0 for P via the Kronecker form; A must be Schur.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>
dlyap(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& W)
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = A.rows();
    if (A.cols() != n || W.rows() != n || W.cols() != n)
        throw ShapeError("dlyap: A and W must be square and of equal size");
    // vec(A' P A) = (A' kron A') vec(P)
    const Matrix At = A.transpose();
    Matrix K(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            K.block(i * n, j * n, n, n) = At(i, j) * At;
    K = Matrix::Identity(n * n, n * n) - K;
    Eigen::FullPivLU<Matrix> lu(K);
    if (!lu.isInvertible())
        throw SynthesisError("dlyap: A has reciprocal eigenvalue pairs; no unique solution");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> vp = lu.solve(W.reshaped());
    Matrix P = vp.reshaped(n, n);
    return (P + P.transpose()) / Scalar(2);
}

template <typename Scalar>
struct LqrResult {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> P;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K;  // u = K x
};

/// Infinite-horizon discrete LQR by Riccati iteration.
template <typename Scalar>
LqrResult<Scalar> dlqr(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& Q,
                       const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& R, int max_iter = 200000,
                       Scalar tol = Scalar(1e-12))
{
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Matrix P = Q;
    for (int it = 0; it < max_iter; ++it) {
        const Matrix S = R + B.transpose() * P * B;
        const Matrix G = S.ldlt().solve(B.transpose() * P * A);
        Matrix Pn = A.transpose() * P * A - A.transpose() * P * B * G + Q;
        Pn = (Pn + Pn.transpose()) / Scalar(2);
        const Scalar diff = (Pn - P).cwiseAbs().maxCoeff();
        P = std::move(Pn);
        if (diff <= tol * std::max(Scalar(1), P.cwiseAbs().maxCoeff())) {
            const Matrix K = -(R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
            return {P, K};
        }
    }
    throw SynthesisError("dlqr: Riccati iteration did not converge; the pair may not be stabilizable");
}

} // namespace solarmpc
