#pragma once

// The K x K singular value criterion: with resolvents of the noise Gram
// operators,
//   Z(l) = (1/l) G^T (I_N - C^T C / l^2)^{-1} C^T F,
//   S(l) =       F^T (I_M - C C^T / l^2)^{-1} F,
//   R(l) =       G^T (I_N - C^T C / l^2)^{-1} G,
// every singular value l of D = C + F G^T with ||C||^2 < l^2/4 satisfies
//   det( (l I - Z) S^{-1} (l I - Z^T) - R ) = 0.
// A verification oracle for small problems, not a production path.

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "spikesv/errors.hpp"
#include "spikesv/model.hpp"
#include "spikesv/svd.hpp"

namespace spikesv {

struct CriterionMatrices {
    Matrix Z;
    Matrix S;
    Matrix R;
    double lambda = 0.0;
    bool gap_ok = false;     // ||C||^2 < lambda^2 / 4 (S invertibility guaranteed)
    double noise_norm = 0.0; // ||C||
};

// Resolvents are applied through one Cholesky factorization of the smaller
// Gram operator; the other side is reached with the push-through identity
//   (I_N - C^T C/l^2)^{-1} X = X + C^T (l^2 I_M - C C^T)^{-1} C X.
inline CriterionMatrices criterion_matrices(const Matrix& c, const Matrix& f, const Matrix& g,
                                            double lambda) {
    const Index m = c.rows(), n = c.cols();
    if (f.rows() != m || g.rows() != n || f.cols() != g.cols())
        throw validation_error("criterion_matrices: dimension mismatch between C, F, G");
    if (std::min(m, n) > 512)
        throw validation_error("criterion is exposed only for min(M,N) <= 512");
    if (!(lambda > 0.0)) throw validation_error("criterion requires lambda > 0");

    const double cnorm = spectral_norm(c);
    if (cnorm * cnorm >= 0.5 * lambda * lambda) {
        std::ostringstream os;
        os << "criterion precondition ||C||^2 < lambda^2/2 violated: ||C|| = " << cnorm
           << ", lambda = " << lambda;
        throw validation_error(os.str());
    }

    CriterionMatrices out;
    out.lambda = lambda;
    out.noise_norm = cnorm;
    out.gap_ok = cnorm * cnorm < 0.25 * lambda * lambda;

    const double inv_l2 = 1.0 / (lambda * lambda);
    if (m <= n) {
        Matrix a = Matrix::Identity(m, m);
        a.selfadjointView<Eigen::Lower>().rankUpdate(c, -inv_l2);
        Eigen::LLT<Matrix> llt(a.selfadjointView<Eigen::Lower>());
        if (llt.info() != Eigen::Success)
            throw numerical_error("resolvent factorization failed (I - CC^T/l^2 not PD)");
        out.S = f.transpose() * llt.solve(f);
        const Matrix ctf = c.transpose() * f;  // N x K
        const Matrix cg = c * g;               // M x K
        // (I_N - C^T C/l^2)^{-1} [C^T F | G]
        const Matrix rhs_zf = c * ctf;  // = C C^T F
        const Matrix bz = ctf + inv_l2 * (c.transpose() * llt.solve(rhs_zf));
        const Matrix bg = g + inv_l2 * (c.transpose() * llt.solve(cg));
        out.Z = g.transpose() * bz / lambda;
        out.R = g.transpose() * bg;
    } else {
        Matrix b = Matrix::Identity(n, n);
        b.selfadjointView<Eigen::Lower>().rankUpdate(c.transpose(), -inv_l2);
        Eigen::LLT<Matrix> llt(b.selfadjointView<Eigen::Lower>());
        if (llt.info() != Eigen::Success)
            throw numerical_error("resolvent factorization failed (I - C^TC/l^2 not PD)");
        out.Z = g.transpose() * llt.solve(c.transpose() * f) / lambda;
        out.R = g.transpose() * llt.solve(g);
        const Matrix cf = c.transpose() * f;  // N x K
        out.S = f.transpose() * f + inv_l2 * (cf.transpose() * llt.solve(cf));
    }
    out.S = ((out.S + out.S.transpose()) * 0.5).eval();
    out.R = ((out.R + out.R.transpose()) * 0.5).eval();
    return out;
}

// det((l I - Z) S^{-1} (l I - Z^T) - R) by LU with partial pivoting.
inline double criterion_determinant(const CriterionMatrices& cm) {
    if (!cm.gap_ok)
        throw validation_error(
            "criterion_determinant requires gap_ok (||C||^2 < lambda^2/4 guarantees S "
            "invertible)");
    const Index k = cm.S.rows();
    Eigen::JacobiSVD<Matrix> ssvd(cm.S);
    const double cond =
        ssvd.singularValues()(0) / std::max(ssvd.singularValues()(k - 1), 1e-300);
    if (cond > 1e12) {
        std::ostringstream os;
        os << "S is numerically singular (condition " << cond << ")";
        throw numerical_error(os.str());
    }
    const Matrix lhs = cm.lambda * Matrix::Identity(k, k) - cm.Z;
    const Matrix combined = lhs * cm.S.ldlt().solve(lhs.transpose()) - cm.R;
    return Eigen::PartialPivLU<Matrix>(combined).determinant();
}

}  // namespace spikesv
