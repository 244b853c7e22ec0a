#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace spateq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Invalid parameterization: a model invariant is violated. The message
/// names the invariant.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Overflow, nonfinite intermediate, or singular linear system.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Trade freeness matrix [phi_ij], phi_ii = 1, 0 < phi_ij <= 1.
struct ProximityMatrix {
    Matrix phi;

    int size() const { return static_cast<int>(phi.rows()); }
    static ProximityMatrix checked(Matrix phi);
};

/// Production spillover matrix [psi_ij], psi_ii = 1, 0 < psi_ij <= 1,
/// conditionally positive definite on the zero-sum subspace.
struct ExternalityMatrix {
    Matrix psi;

    int size() const { return static_cast<int>(psi.rows()); }
    static ExternalityMatrix checked(Matrix psi);
};

/// One economy: region count, elasticity of substitution, and the two
/// proximity structures.
struct ModelConfig {
    int n = 0;
    double sigma = 0.0;
    ProximityMatrix proximity;
    ExternalityMatrix externality;

    static ModelConfig checked(double sigma, ProximityMatrix proximity,
                               ExternalityMatrix externality);
};

/// Point on the unit simplex; the state variable.
struct SpatialDistribution {
    Vector x;

    int size() const { return static_cast<int>(x.size()); }
    static SpatialDistribution checked(Vector x);
    /// Uniform distribution (1/n, ..., 1/n).
    static SpatialDistribution uniform(int n);
};

/// Everything the market determines at a given (x, w): productivity,
/// price indices, payoffs, and the trade-share matrix (columns sum to 1).
struct MarketState {
    Vector a;  // productivity, a = Psi x
    Vector w;  // wages as passed in
    Vector P;  // CES price indices
    Vector v;  // payoffs, v = w / P
    Matrix m;  // trade shares m_ij
};

/// Orthonormal basis of the zero-sum subspace {z : sum z_i = 0}, as the
/// columns of an n x (n-1) matrix (Helmert construction, deterministic).
Matrix tangent_basis(int n);

/// Minimum eigenvalue of the symmetric part of `m` restricted to the
/// zero-sum subspace.
double min_tangent_eigenvalue_symmetric_part(const Matrix& m);

}  // namespace spateq
