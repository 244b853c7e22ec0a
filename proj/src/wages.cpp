#include "spateq/wages.hpp"

#include <Eigen/LU>
#include <cmath>
#include <limits>

namespace spateq {

namespace {

Vector excess_from_state(const MarketState& s, const SpatialDistribution& x) {
    const Vector income = s.m * (s.w.array() * x.x.array()).matrix();
    return ((income - (s.w.array() * x.x.array()).matrix()).array() / s.w.array()).matrix();
}

void require_interior(const SpatialDistribution& x) {
    if ((x.x.array() <= 0.0).any())
        throw ConfigError(
            "wage system needs strictly positive x: wages diverge in a depopulated region");
}

}  // namespace

Vector excess_demand(const ModelConfig& config, const SpatialDistribution& x,
                     const Vector& w) {
    require_interior(x);
    const MarketState s = market_state(config, x, w);
    Vector e = excess_from_state(s, x);
    for (int i = 0; i < config.n; ++i)
        if (!std::isfinite(e(i)))
            throw NumericError("excess demand overflow in region " + std::to_string(i + 1));
    return e;
}

Matrix excess_demand_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                              const Vector& w) {
    const int n = config.n;
    const MarketState s = market_state(config, x, w);
    const Vector y = (w.array() * x.x.array()).matrix();  // incomes
    const Matrix mym = s.m * y.asDiagonal() * s.m.transpose();
    Matrix jac(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j)
                jac(i, j) = (s.m(i, j) * x.x(j) + (config.sigma - 1.0) * mym(i, j) / w(j)) / w(i);
    // E is homogeneous of degree zero in w, so J w = 0 pins the diagonal.
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) acc += jac(i, j) * w(j);
        jac(i, i) = -acc / w(i);
    }
    return jac;
}

WageSolution solve_wages(const ModelConfig& config, const SpatialDistribution& x,
                         const WageSolveOptions& opts) {
    return solve_wages(config, x, Vector::Ones(config.n), opts);
}

WageSolution solve_wages(const ModelConfig& config, const SpatialDistribution& x,
                         Vector w0, const WageSolveOptions& opts) {
    require_interior(x);
    if (!(opts.tol > 0.0)) throw ConfigError("wage solver tolerance must be positive");
    if ((w0.array() <= 0.0).any()) throw ConfigError("wage starting point must be positive");

    const int n = config.n;
    Vector w = w0 / w0.dot(x.x);  // enforce sum w_i x_i = 1 throughout

    double damping = opts.damping;
    double prev_res = std::numeric_limits<double>::infinity();
    double best_res = std::numeric_limits<double>::infinity();
    Vector best_w = w;
    int stall = 0;
    WageSolution out;

    for (int it = 0; it < opts.max_iter; ++it) {
        const MarketState s = market_state(config, x, w);
        const Vector y = (w.array() * x.x.array()).matrix();
        const Vector income = s.m * y;
        const Vector e = ((income - y).array() / w.array()).matrix();
        // convergence is measured income-relative so regions with tiny
        // populations get wages as accurate as large ones; this implies the
        // excess-demand max-norm bound since |e_i| = rel_i x_i <= rel_i
        const double res = ((income - y).array().abs() / y.array()).maxCoeff();
        if (!std::isfinite(res)) throw NumericError("wage iteration produced nonfinite residual");
        if (res <= opts.tol) {
            out.w = w;
            out.residual = e.cwiseAbs().maxCoeff();
            out.iterations = it;
            out.converged = true;
            return out;
        }
        if (res < best_res) {
            best_res = res;
            best_w = w;
            stall = 0;
        } else if (res < opts.newton_threshold && ++stall >= 12) {
            break;  // rounding floor reached above tol; report the best iterate
        }

        bool stepped = false;
        if (res < opts.newton_threshold) {
            // Newton on E(w) = 0 with rows scaled by 1/x_i (so small regions
            // carry equal weight) and the last row swapped for the income
            // normalization (the system is degree-zero in w, so one scale
            // condition is needed).
            Matrix jac = excess_demand_jacobian(config, x, w);
            Vector rhs = -e;
            for (int i = 0; i < n; ++i) {
                jac.row(i) /= x.x(i);
                rhs(i) /= x.x(i);
            }
            jac.row(n - 1) = x.x.transpose();
            rhs(n - 1) = 1.0 - w.dot(x.x);
            Eigen::PartialPivLU<Matrix> lu(jac);
            const Vector dw = lu.solve(rhs);
            if (dw.allFinite()) {
                double scale = 1.0;
                for (int k = 0; k < 50; ++k) {
                    if (((w + scale * dw).array() > 0.0).all()) break;
                    scale *= 0.5;
                }
                Vector wn = w + scale * dw;
                if ((wn.array() > 0.0).all()) {
                    wn /= wn.dot(x.x);
                    w = wn;
                    stepped = true;
                }
            }
        }
        if (!stepped) {
            // Damped fixed-point step in log wages:
            //   w_i <- w_i (income_i / (w_i x_i))^{damping / sigma}.
            if (res > prev_res) damping = std::max(0.05, 0.5 * damping);
            for (int i = 0; i < n; ++i)
                w(i) *= std::exp((damping / config.sigma) *
                                 (std::log(income(i)) - std::log(w(i) * x.x(i))));
            w /= w.dot(x.x);
        }
        prev_res = res;
    }

    out.w = best_res < std::numeric_limits<double>::infinity() ? best_w : w;
    {
        const MarketState s = market_state(config, x, out.w);
        const Vector y = (out.w.array() * x.x.array()).matrix();
        const Vector income = s.m * y;
        out.residual = ((income - y).array().abs() / out.w.array()).maxCoeff();
        out.converged = ((income - y).array().abs() / y.array()).maxCoeff() <= opts.tol;
    }
    out.iterations = opts.max_iter;
    return out;
}

Matrix wage_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                     const Vector& w) {
    const int n = config.n;
    const double sg = config.sigma;
    const MarketState s = market_state(config, x, w);
    const Vector y = (w.array() * x.x.array()).matrix();
    const Vector income = s.m * y;
    const Matrix mym = s.m * y.asDiagonal() * s.m.transpose();

    // z_i(x, w) = w_i x_i - sum_k m_ik w_k x_k; differentiate both arguments.
    Matrix zw(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double d = -s.m(i, j) * x.x(j) - (sg - 1.0) * mym(i, j) / w(j);
            if (i == j) d += x.x(i) + (sg - 1.0) * income(i) / w(i);
            zw(i, j) = d;
        }

    // dz_i/dx_j picks up the direct income terms and the productivity
    // channel a = Psi x inside the trade shares.
    const Matrix& g = config.externality.psi;
    Matrix ga(n, n);  // G_lj / a_l
    for (int l = 0; l < n; ++l)
        for (int j = 0; j < n; ++j) ga(l, j) = g(l, j) / s.a(l);
    const Matrix mt_ga = s.m.transpose() * ga;  // sum_l m_lk G_lj / a_l
    Matrix zx(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double t = 0.0;
            for (int k = 0; k < n; ++k) t += s.m(i, k) * y(k) * mt_ga(k, j);
            double d = -s.m(i, j) * w(j) - (sg - 1.0) * (income(i) * ga(i, j) - t);
            if (i == j) d += w(i);
            zx(i, j) = d;
        }

    // Rows of [Z_x | Z_w] sum to zero (Walras), so one row is free; swap it
    // for the derivative of the normalization sum w_i x_i = 1.
    Matrix lhs = zw;
    Matrix rhs = -zx;
    lhs.row(n - 1) = x.x.transpose();
    rhs.row(n - 1) = -w.transpose();
    Eigen::PartialPivLU<Matrix> lu(lhs);
    if (std::fabs(lu.determinant()) < 1e-300)
        throw NumericError("wage jacobian: singular market system (invalid input?)");
    Matrix wx = lu.solve(rhs);
    if (!wx.allFinite()) throw NumericError("wage jacobian: nonfinite result");
    return wx;
}

}  // namespace spateq
