#pragma once

#include <string>
#include <vector>

#include "spateq/dynamics.hpp"

namespace spateq {

enum class PointType { Regular, Fold, BranchPoint, Endpoint };

struct BranchPoint {
    double param;
    Vector x;
    double omega_max;  // max tangent growth rate of the adjustment dynamic, per unit payoff
    bool stable;
};

struct SpecialPoint {
    PointType type = PointType::Endpoint;
    double param = 0.0;
    Vector x;
    std::string reason;
};

/// One continued family of equilibria over a single freeness parameter.
struct Branch {
    FreeParam parameter = FreeParam::Phi;
    std::vector<BranchPoint> points;
    std::vector<SpecialPoint> special_points;
    std::string label;

    double emergence_param() const;
};

struct ContinuationOptions {
    double step0 = 1e-3;
    double step_min = 1e-4;   // normal operating range of the step
    double step_max = 1e-2;
    double step_abort = 1e-7; // give up after halving down to this
    double param_lo = 0.02;
    double param_hi = 0.98;
    double spread_tol = 1e-10;  // corrector target: payoff_spread <= tol * v
    int max_newton = 14;
    int max_points = 20000;
    double min_x = 1e-5;        // stop when a region nearly empties
};

/// Predictor-corrector continuation of an equilibrium from (x0, p0).
/// Secant predictor with a pseudo-arclength corrector, so folds are
/// traversed and recorded (bisection-refined via a local re-walk).
Branch continue_branch(const Family& family, FreeParam free, const Vector& x0, double p0,
                       double param_direction, const ContinuationOptions& opts = {});

/// Continues in both parameter directions and splices the halves.
Branch continue_branch_both(const Family& family, FreeParam free, const Vector& x0,
                            double p0, const ContinuationOptions& opts = {});

enum class SwitchSide { Unstable, Stable };

struct BranchSeeds {
    Vector x_plus;
    Vector x_minus;
    double param = 0.0;
    bool ok_plus = false;
    bool ok_minus = false;
};

/// Branch switching at a break point of the uniform state: seeds
/// xbar +- eps z*, solved onto the bifurcating branch at parameter offset
/// delta from the break point via a one-dimensional amplitude equation
/// (Newton on the orthogonal complement, scalar solve along z*).
BranchSeeds branch_switch(const Family& family, FreeParam free, double param_at_break,
                          const Vector& direction, double eps = 1e-3, double delta = 1e-4,
                          SwitchSide side = SwitchSide::Unstable);

struct DiagramSpec {
    Family family;
    FreeParam free = FreeParam::Phi;
    double lo = 0.02;
    double hi = 0.98;
    ContinuationOptions cont;
    double eps = 1e-3;
    double delta = 1e-4;
    int uniform_samples = 241;
    bool multistart = true;
    bool parallel = true;
};

struct Diagram {
    std::vector<Branch> branches;
    std::vector<ModeCrossing> break_points;
};

/// Assembles the uniform branch, the branches emerging at every detected
/// mode zero, and extra branches found by multi-start equilibration;
/// deduplicates up to the model's region-permutation symmetries.
Diagram bifurcation_diagram(const DiagramSpec& spec);

struct ExponentFit {
    double exponent = 0.0;
    int points_used = 0;
};

/// Least-squares slope of log ||x - xbar|| against log |param - break|
/// over the window |param - break| in [1e-4, 1e-2]. Needs at least five
/// branch points in the window.
ExponentFit fit_pitchfork_exponent(const Branch& branch, double break_point);

/// Region permutations leaving both proximity and externality invariant.
std::vector<std::vector<int>> symmetry_group(const ModelConfig& config);

}  // namespace spateq
