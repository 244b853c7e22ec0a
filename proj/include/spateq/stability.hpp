#pragma once

#include <optional>
#include <vector>

#include "spateq/families.hpp"
#include "spateq/wages.hpp"

namespace spateq {

/// The eigenvalue map omega = Omega(s, t) of the payoff elasticity matrix
/// at the uniform state, split into numerator and denominator:
///   Omega#(s, t) = -(1 - s) + ((sigma - 1) + sigma s) t
///   Omegab(s)    = sigma + (sigma - 1) s
/// s is the trade-cost index of a migration mode, t its spillover
/// sensitivity.
struct GainValue {
    double omega;
    double sharp;
    double flat;
};
GainValue gain_function(double s, double t, double sigma);

/// Two-region chain-rule decomposition of the net agglomeration force:
/// omega = omega_a alpha_x + omega_w beta_x with omega_a = chi,
/// omega_w = 1 - chi, alpha_x = lambda.
struct ForceDecomposition {
    double chi;
    double lambda;
    double omega_a;
    double omega_w;
    double alpha_x;
    double beta_x;
    double omega;
};
ForceDecomposition decompose_net_force(double phi, double psi, double sigma);

struct EigenPair {
    double value;
    Vector pattern;  // unit norm, zero-sum
};

enum class SpectrumHint { Circulant, Bccb, GeneralSymmetric };

/// Tangent-space eigenpairs of the row-normalized matrix. Circulant and
/// BCCB inputs use the discrete Fourier basis in its real combinations;
/// everything else goes through a dense symmetric eigensolver on the
/// zero-sum projection. A hint the matrix does not satisfy (within 1e-12)
/// falls back to the general path; `hint_ok` reports which route ran.
std::vector<EigenPair> proximity_spectrum(const Matrix& m, SpectrumHint hint,
                                          bool* hint_ok = nullptr);

enum class JacobianMethod { Analytic, FiniteDifference };

/// Payoff Jacobian V_x = dv/dx at interior x, wages re-solved as x moves.
/// The analytic route composes the market-share and wage channels; the
/// finite-difference route takes central differences along the simplex
/// tangent basis (its result has the all-ones direction in its kernel).
Matrix payoff_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                       JacobianMethod method, double fd_step = 1e-6);
Matrix payoff_jacobian_at(const ModelConfig& config, const SpatialDistribution& x,
                          const WageSolution& wages);

/// Tangent spectrum of V = (xbar/vbar) dv/dx at the uniform distribution.
struct EigenReport {
    std::vector<double> omega;       // tangent eigenvalues
    std::vector<Vector> pattern;     // matching unit zero-sum eigenvectors
    std::vector<double> chi;         // eigenvalues of row-normalized D
    std::vector<double> lambda;      // eigenvalues of row-normalized Psi
    double omega_star = 0.0;
    Vector critical_pattern;         // argmax mode; ties combine patterns
    std::vector<int> critical_modes; // all argmax indices (>1 when degenerate)
    bool closed_form = false;        // DFT route (circulant/BCCB) was used
    double v_bar = 0.0;              // uniform payoff level
};
EigenReport uniform_stability(const ModelConfig& config);

/// Zero of omega_k(param) for one migration mode, refined by bisection.
struct ModeCrossing {
    double param;
    int mode;
    Vector pattern;
};

enum class ThresholdOutcome { Found, BlackHole, StableEverywhere };

/// Critical freeness levels of a one-parameter family. `param_star` is
/// the largest stability switch of omega*; `mode_crossings` lists the
/// zeros of every individual mode found on a scan of the range.
struct ThresholdResult {
    std::optional<double> param_star;
    std::vector<double> omega_star_crossings;
    std::vector<ModeCrossing> mode_crossings;
    ThresholdOutcome outcome = ThresholdOutcome::Found;
};

struct ThresholdOptions {
    double lo = 1e-3;
    double hi = 1.0 - 1e-3;
    int scan_points = 512;
    double tol = 1e-10;
    bool use_closed_form = true;  // two-region phi threshold shortcut
};

ThresholdResult critical_threshold(const Family& family, FreeParam free,
                                   const ThresholdOptions& opts = {});

/// Stability of the uniform state over a (phi, psi) grid.
struct StabilityGrid {
    std::vector<double> phi_values;
    std::vector<double> psi_values;
    Matrix omega_star;                       // [phi index, psi index]
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> stable;
    Eigen::MatrixXi pattern;                 // critical mode index, -1 if invalid
};

enum class GridEval { Auto, Dense };

struct GridSpec {
    double phi_lo = 0.01, phi_hi = 0.99;
    int n_phi = 99;
    double psi_lo = 0.01, psi_hi = 0.99;
    int n_psi = 99;
    GridEval eval = GridEval::Auto;
};

/// OpenMP-parallel grid kernel; cells are written by index so the result
/// is identical to the serial reference below.
StabilityGrid stability_grid(const Family& family, const GridSpec& spec);
/// Serial reference implementation, kept for testing and benchmarking.
StabilityGrid stability_grid_serial(const Family& family, const GridSpec& spec);

}  // namespace spateq
