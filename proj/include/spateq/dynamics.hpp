#pragma once

#include <vector>

#include "spateq/stability.hpp"

namespace spateq {

/// Replicator adjustment: xdot_i = x_i (v_i(x) - vbar(x)) with the
/// population-weighted mean payoff vbar = sum_j x_j v_j. Conserves total
/// population, vanishes exactly at interior equilibria, and is positively
/// correlated with payoffs away from them.
Vector dynamics_field(const ModelConfig& config, const SpatialDistribution& x);

enum class StabilityClass { Stable, Unstable, Marginal };

struct StabilityAssessment {
    StabilityClass classification = StabilityClass::Marginal;
    std::vector<double> tangent_real_parts;  // replicator Jacobian spectrum
};

/// Linearizes the replicator field at an equilibrium and classifies by the
/// sign pattern of the tangent-space spectrum (marginal band 1e-8).
StabilityAssessment assess_stability(const ModelConfig& config,
                                     const SpatialDistribution& x_star);

struct EquilibriumResult {
    SpatialDistribution x_star;
    double v_star = 0.0;
    double payoff_spread = 0.0;    // max_i v_i - min_i v_i
    bool stable = false;
    StabilityClass classification = StabilityClass::Marginal;
    std::vector<double> tangent_eigenvalues;
    bool converged = false;
    bool hit_boundary_floor = false;  // trajectory was clamped at the floor
    int steps = 0;
};

struct EquilibriumOptions {
    double tol = 1e-10;            // payoff_spread <= tol * v_star
    double velocity_stop = 1e-6;   // hand over to Newton below this field norm
    double rel_tol = 1e-8;         // integrator relative tolerance
    double boundary_floor = 1e-9;
    double t_max = 1e4;
    int max_steps = 200000;
    int max_newton = 60;
};

/// Integrates the replicator flow from interior x0 until the field is
/// small, then Newton-polishes the payoff-equalization system.
EquilibriumResult find_equilibrium(const ModelConfig& config, const SpatialDistribution& x0,
                                   const EquilibriumOptions& opts = {});

/// The 2n+1 deterministic starting points used for equilibrium
/// enumeration: uniform, n vertex-biased, n adjacent-pair midpoints.
std::vector<SpatialDistribution> multistart_points(int n);

/// Runs find_equilibrium from every start (OpenMP across starts, merged in
/// start order) and deduplicates at max-norm distance 1e-6.
std::vector<EquilibriumResult> multistart_equilibria(const ModelConfig& config,
                                                     const EquilibriumOptions& opts = {},
                                                     bool parallel = true);

}  // namespace spateq
