#include "spateq/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

namespace spateq {

namespace {

constexpr double kMarginalBand = 1e-8;

struct FieldEval {
    Vector f;
    Vector v;
    Vector w;  // market wages, reused as the next warm start
    double spread = 0.0;
    double v_mean = 0.0;
};

FieldEval eval_field(const ModelConfig& config, const Vector& x, const Vector& w_guess,
                     double wage_tol = 1e-12) {
    WageSolveOptions wopts;
    wopts.tol = wage_tol;
    wopts.max_iter = 100000;
    const SpatialDistribution xs{x};
    const WageSolution ws = solve_wages(config, xs, w_guess, wopts);
    const Vector v = market_state(config, xs, ws.w).v;
    const double vbar = x.dot(v);
    FieldEval out;
    out.f = (x.array() * (v.array() - vbar)).matrix();
    out.v = v;
    out.w = ws.w;
    out.spread = v.maxCoeff() - v.minCoeff();
    out.v_mean = vbar;
    return out;
}

Matrix replicator_jacobian(const ModelConfig& config, const Vector& x, const Vector& v,
                           const Matrix& vx) {
    const int n = config.n;
    const double vbar = x.dot(v);
    const Eigen::RowVectorXd xv = x.transpose() * vx;
    Matrix j(n, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            j(i, k) = x(i) * (vx(i, k) - v(k) - xv(k));
            if (i == k) j(i, k) += v(i) - vbar;
        }
    return j;
}

std::vector<double> tangent_real_parts(const Matrix& j) {
    const int n = static_cast<int>(j.rows());
    const Matrix b = tangent_basis(n);
    Eigen::EigenSolver<Matrix> es(b.transpose() * j * b);
    std::vector<double> parts(n - 1);
    for (int k = 0; k < n - 1; ++k) parts[k] = es.eigenvalues()(k).real();
    std::sort(parts.begin(), parts.end());
    return parts;
}

StabilityClass classify(const std::vector<double>& parts) {
    const double hi = parts.back();
    if (hi < -kMarginalBand) return StabilityClass::Stable;
    if (hi > kMarginalBand) return StabilityClass::Unstable;
    return StabilityClass::Marginal;
}

// Dormand-Prince 5(4) tableau (autonomous field, so no c nodes needed).
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

Vector dynamics_field(const ModelConfig& config, const SpatialDistribution& x) {
    if ((x.x.array() <= 0.0).any())
        throw ConfigError("dynamics field requires interior x");
    return eval_field(config, x.x, Vector::Ones(config.n)).f;
}

StabilityAssessment assess_stability(const ModelConfig& config,
                                     const SpatialDistribution& x_star) {
    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;
    const WageSolution ws = solve_wages(config, x_star, wopts);
    const Vector v = market_state(config, x_star, ws.w).v;
    const Matrix vx = payoff_jacobian_at(config, x_star, ws);
    StabilityAssessment out;
    out.tangent_real_parts = tangent_real_parts(replicator_jacobian(config, x_star.x, v, vx));
    out.classification = classify(out.tangent_real_parts);
    return out;
}

EquilibriumResult find_equilibrium(const ModelConfig& config, const SpatialDistribution& x0,
                                   const EquilibriumOptions& opts) {
    if ((x0.x.array() <= 0.0).any())
        throw ConfigError("equilibrium search requires an interior starting point");
    const int n = config.n;

    EquilibriumResult res;
    Vector x = x0.x;
    Vector w = Vector::Ones(n);

    // --- integrate the replicator flow until the field is small ---
    // A small field alone is not enough near the boundary (the field scales
    // with x_i there), so payoffs must be roughly equalized too; otherwise
    // the state is still sliding toward a corner.
    double t = 0.0, h = 1e-2;
    FieldEval k1 = eval_field(config, x, w);
    w = k1.w;
    int steps = 0;
    auto settled = [&](const FieldEval& f) {
        return f.f.norm() < opts.velocity_stop && f.spread < 1e-2 * f.v_mean;
    };
    while (!settled(k1) && t < opts.t_max && steps < opts.max_steps) {
        const Vector y = x;
        const FieldEval k2 = eval_field(config, (y + h * a21 * k1.f).cwiseMax(1e-16), w);
        const FieldEval k3 =
            eval_field(config, (y + h * (a31 * k1.f + a32 * k2.f)).cwiseMax(1e-16), w);
        const FieldEval k4 = eval_field(
            config, (y + h * (a41 * k1.f + a42 * k2.f + a43 * k3.f)).cwiseMax(1e-16), w);
        const FieldEval k5 = eval_field(
            config,
            (y + h * (a51 * k1.f + a52 * k2.f + a53 * k3.f + a54 * k4.f)).cwiseMax(1e-16), w);
        const FieldEval k6 = eval_field(
            config,
            (y + h * (a61 * k1.f + a62 * k2.f + a63 * k3.f + a64 * k4.f + a65 * k5.f))
                .cwiseMax(1e-16),
            w);
        Vector y5 =
            y + h * (b1 * k1.f + b3 * k3.f + b4 * k4.f + b5 * k5.f + b6 * k6.f);
        y5 = y5.cwiseMax(1e-16);
        const FieldEval k7 = eval_field(config, y5, w);
        const Vector err_vec =
            h * (e1 * k1.f + e3 * k3.f + e4 * k4.f + e5 * k5.f + e6 * k6.f + e7 * k7.f);
        double err = 0.0;
        for (int i = 0; i < n; ++i)
            err = std::max(err, std::fabs(err_vec(i)) /
                                    (1e-12 + opts.rel_tol * std::max(std::fabs(y(i)), 1.0)));
        ++steps;
        if (err <= 1.0) {
            x = y5;
            // keep the state on the simplex and away from the boundary
            bool clamped = false;
            for (int i = 0; i < n; ++i)
                if (x(i) < opts.boundary_floor) {
                    x(i) = opts.boundary_floor;
                    res.hit_boundary_floor = true;
                    clamped = true;
                }
            x /= x.sum();
            t += h;
            w = k7.w;
            k1 = eval_field(config, x, w);
            w = k1.w;
            if (clamped) {
                // persistent clamp: the flow still points out of the simplex
                // at the floored coordinates, so the equilibrium lies below
                // the floor
                bool persistent = false;
                for (int i = 0; i < n; ++i)
                    if (x(i) <= opts.boundary_floor * 1.000001 && k1.f(i) < 0.0)
                        persistent = true;
                if (persistent) break;
            }
            h = std::min(h * std::min(5.0, 0.9 * std::pow(std::max(err, 1e-10), -0.2)), 1.0);
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
            if (h < 1e-13) break;
        }
    }
    res.steps = steps;
    const Vector endpoint = x;

    // Persistent clamping at the boundary floor means the equilibrium lies
    // below the floor (near-agglomeration at extreme parameters): report the
    // clamped endpoint rather than letting Newton escape to another root.
    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;
    if (x.minCoeff() <= opts.boundary_floor * 1.000001) {
        const SpatialDistribution xs{x};
        const WageSolution ws = solve_wages(config, xs, w, wopts);
        const Vector v = market_state(config, xs, ws.w).v;
        res.x_star = xs;
        res.v_star = x.dot(v);
        res.payoff_spread = v.maxCoeff() - v.minCoeff();
        res.converged = false;
        res.hit_boundary_floor = true;
        const Matrix vx = payoff_jacobian_at(config, xs, ws);
        res.tangent_eigenvalues = tangent_real_parts(replicator_jacobian(config, x, v, vx));
        res.classification = classify(res.tangent_eigenvalues);
        res.stable = false;
        return res;
    }

    // --- Newton polish of payoff equalization on the simplex ---
    bool polished = false;
    for (int it = 0; it < opts.max_newton; ++it) {
        const SpatialDistribution xs{x};
        const WageSolution ws = solve_wages(config, xs, w, wopts);
        // the wage residual may sit at its rounding floor near the simplex
        // boundary; the payoff-spread test below is the real gate
        if (ws.residual > 1e-8) break;
        w = ws.w;
        const Vector v = market_state(config, xs, ws.w).v;
        const double spread = v.maxCoeff() - v.minCoeff();
        const double vstar = x.dot(v);
        if (spread <= opts.tol * vstar) {
            polished = true;
            break;
        }
        const Matrix vx = payoff_jacobian_at(config, xs, ws);
        Matrix jac(n, n);
        Vector rhs(n);
        for (int i = 0; i < n - 1; ++i) {
            jac.row(i) = vx.row(i) - vx.row(n - 1);
            rhs(i) = -(v(i) - v(n - 1));
        }
        jac.row(n - 1).setOnes();
        rhs(n - 1) = 1.0 - x.sum();
        const Vector dx = Eigen::PartialPivLU<Matrix>(jac).solve(rhs);
        if (!dx.allFinite()) break;
        double scale = 1.0;
        while (scale > 1e-8 && ((x + scale * dx).array() <= 0.0).any()) scale *= 0.5;
        if (((x + scale * dx).array() <= 0.0).any()) break;
        // backtrack while the payoff spread worsens, so the polish cannot
        // hop to a distant root
        Vector x_try = x + scale * dx;
        for (int bt = 0; bt < 6; ++bt) {
            const SpatialDistribution xt{x_try};
            const WageSolution wt = solve_wages(config, xt, w, wopts);
            const Vector vt = market_state(config, xt, wt.w).v;
            if (vt.maxCoeff() - vt.minCoeff() <= spread || scale <= 1.0 / 64) break;
            scale *= 0.5;
            x_try = x + scale * dx;
        }
        x = x_try;
    }

    const Vector final_x = polished ? x : endpoint;
    const SpatialDistribution xs{final_x};
    const WageSolution ws = solve_wages(config, xs, w, wopts);
    const Vector v = market_state(config, xs, ws.w).v;
    res.x_star = xs;
    res.v_star = final_x.dot(v);
    res.payoff_spread = v.maxCoeff() - v.minCoeff();
    res.converged = polished && res.payoff_spread <= opts.tol * res.v_star;
    const Matrix vx = payoff_jacobian_at(config, xs, ws);
    res.tangent_eigenvalues = tangent_real_parts(replicator_jacobian(config, final_x, v, vx));
    res.classification = classify(res.tangent_eigenvalues);
    res.stable = res.classification == StabilityClass::Stable;
    return res;
}

std::vector<SpatialDistribution> multistart_points(int n) {
    std::vector<SpatialDistribution> starts;
    starts.push_back(SpatialDistribution::uniform(n));
    for (int i = 0; i < n; ++i) {
        Vector x = Vector::Constant(n, 0.03 / (n - 1));
        x(i) = 0.97;
        starts.push_back(SpatialDistribution{x / x.sum()});
    }
    for (int i = 0; i < n; ++i) {
        Vector x = n > 2 ? Vector::Constant(n, 0.03 / (n - 2)) : Vector::Zero(n);
        x(i) = n > 2 ? 0.485 : 0.5;
        x((i + 1) % n) = n > 2 ? 0.485 : 0.5;
        starts.push_back(SpatialDistribution{x / x.sum()});
    }
    return starts;
}

std::vector<EquilibriumResult> multistart_equilibria(const ModelConfig& config,
                                                     const EquilibriumOptions& opts,
                                                     bool parallel) {
    const auto starts = multistart_points(config.n);
    const int m = static_cast<int>(starts.size());
    std::vector<EquilibriumResult> raw(m);

    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < m; ++i) {
            try {
                raw[i] = find_equilibrium(config, starts[i], opts);
            } catch (const std::exception&) {
                raw[i].converged = false;
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            try {
                raw[i] = find_equilibrium(config, starts[i], opts);
            } catch (const std::exception&) {
                raw[i].converged = false;
            }
        }
    }

    std::vector<EquilibriumResult> out;
    for (int i = 0; i < m; ++i) {
        if (!raw[i].converged) continue;
        bool dup = false;
        for (const auto& kept : out)
            if ((kept.x_star.x - raw[i].x_star.x).cwiseAbs().maxCoeff() < 1e-6) {
                dup = true;
                break;
            }
        if (!dup) out.push_back(raw[i]);
    }
    return out;
}

}  // namespace spateq
