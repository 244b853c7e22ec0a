#pragma once

#include "spateq/model.hpp"

namespace spateq {

/// Market-clearing wage vector with diagnostics. Normalized so that
/// sum_i w_i x_i = 1.
struct WageSolution {
    Vector w;
    double residual = 0.0;  // max-norm of excess demand at w
    int iterations = 0;
    bool converged = false;
};

struct WageSolveOptions {
    double tol = 1e-12;
    int max_iter = 10000;
    double damping = 0.5;             // initial damping of the fixed-point map
    double newton_threshold = 1e-4;   // switch to Newton below this residual
};

/// Excess demand per unit wage: E_i(w) = (sum_k m_ik w_k x_k - w_i x_i) / w_i.
/// Zero exactly at market clearing; satisfies w'E(w) = 0 (Walras) and is
/// homogeneous of degree zero in w.
Vector excess_demand(const ModelConfig& config, const SpatialDistribution& x,
                     const Vector& w);

/// Analytic Jacobian dE_i/dw_j. Off-diagonal entries are positive (gross
/// substitutes); the diagonal follows from degree-zero homogeneity.
Matrix excess_demand_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                              const Vector& w);

/// Solves the wage system at interior x: damped fixed-point iteration with
/// a Newton tail on the normalized system. The solution is unique, so the
/// result is independent of the starting point.
WageSolution solve_wages(const ModelConfig& config, const SpatialDistribution& x,
                         const WageSolveOptions& opts = {});
WageSolution solve_wages(const ModelConfig& config, const SpatialDistribution& x,
                         Vector w0, const WageSolveOptions& opts = {});

/// Derivative W_x = dw/dx of the normalized market wage, by the implicit
/// function theorem on market clearing plus the income normalization.
/// `w` must solve the market system at x.
Matrix wage_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                     const Vector& w);

}  // namespace spateq
