#include "spateq/bifurcation.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>

namespace spateq {

namespace {

struct EquilibriumEval {
    Vector v;
    Vector w;
    double spread;
    double v_star;
};

class BranchProblem {
  public:
    BranchProblem(const Family& family, FreeParam free) : family_(family), free_(free) {}

    int n() const { return family_.regions(); }

    ModelConfig config(double p) const { return family_.config_with(free_, p); }

    EquilibriumEval eval(const Vector& x, double p, const Vector& w_guess) const {
        WageSolveOptions wopts;
        wopts.tol = 1e-13;
        wopts.max_iter = 100000;
        const ModelConfig cfg = config(p);
        const SpatialDistribution xs{x};
        const WageSolution ws = solve_wages(cfg, xs, w_guess, wopts);
        const Vector v = market_state(cfg, xs, ws.w).v;
        return {v, ws.w, v.maxCoeff() - v.minCoeff(), x.dot(v)};
    }

    /// Payoff Jacobian dv/dx at (x, p); wages from a prior eval.
    Matrix vx(const Vector& x, double p, const Vector& w) const {
        const ModelConfig cfg = config(p);
        const SpatialDistribution xs{x};
        WageSolution ws;
        ws.w = w;
        ws.converged = true;
        return payoff_jacobian_at(cfg, xs, ws);
    }

    /// dv/dp at fixed x by central differences (wages re-solved).
    Vector vp(const Vector& x, double p, const Vector& w_guess) const {
        const double h = 1e-7;
        const EquilibriumEval up = eval(x, p + h, w_guess);
        const EquilibriumEval dn = eval(x, p - h, w_guess);
        return (up.v - dn.v) / (2.0 * h);
    }

  private:
    Family family_;
    FreeParam free_;
};

struct CorrectorResult {
    bool ok = false;
    Vector x;
    double p = 0.0;
    Vector w;
    double spread = 0.0;
    double v_star = 0.0;
};

/// Pseudo-arclength Newton corrector: payoff equalization + simplex +
/// tangent normalization t'(u - u_pred) = 0 in u = (x, p).
CorrectorResult correct(const BranchProblem& prob, const Vector& x_pred, double p_pred,
                        const Vector& tangent, const Vector& w_guess,
                        const ContinuationOptions& opts, bool fix_param = false) {
    const int n = prob.n();
    const Matrix b = tangent_basis(n);
    CorrectorResult res;
    Vector x = x_pred;
    double p = p_pred;
    Vector w = w_guess;

    for (int it = 0; it < opts.max_newton; ++it) {
        if (p <= 1e-6 || p >= 1.0 - 1e-6) return res;
        EquilibriumEval ev;
        try {
            ev = prob.eval(x, p, w);
        } catch (const std::exception&) {
            return res;
        }
        w = ev.w;
        const Vector r_payoff = b.transpose() * ev.v;
        const double rnorm = r_payoff.cwiseAbs().maxCoeff() / std::max(ev.v_star, 1e-300);
        if (rnorm <= opts.spread_tol && std::fabs(x.sum() - 1.0) < 1e-13) {
            res.ok = true;
            res.x = x;
            res.p = p;
            res.w = w;
            res.spread = ev.spread;
            res.v_star = ev.v_star;
            return res;
        }

        Matrix jac(n + 1, n + 1);
        Vector rhs(n + 1);
        const Matrix vx = prob.vx(x, p, w);
        const Vector vp = prob.vp(x, p, w);
        jac.block(0, 0, n - 1, n) = b.transpose() * vx;
        jac.block(0, n, n - 1, 1) = b.transpose() * vp;
        rhs.head(n - 1) = -r_payoff;
        jac.row(n - 1).head(n).setOnes();
        jac(n - 1, n) = 0.0;
        rhs(n - 1) = 1.0 - x.sum();
        if (fix_param) {
            jac.row(n).setZero();
            jac(n, n) = 1.0;
            rhs(n) = 0.0;
        } else {
            jac.row(n).head(n) = tangent.head(n).transpose();
            jac(n, n) = tangent(n);
            Vector u(n + 1), upred(n + 1);
            u.head(n) = x;
            u(n) = p;
            upred.head(n) = x_pred;
            upred(n) = p_pred;
            rhs(n) = -tangent.dot(u - upred);
        }
        const Vector du = Eigen::PartialPivLU<Matrix>(jac).solve(rhs);
        if (!du.allFinite()) return res;
        double scale = 1.0;
        while (scale > 1e-10 && ((x + scale * du.head(n)).array() <= 0.0).any()) scale *= 0.5;
        if (((x + scale * du.head(n)).array() <= 0.0).any()) return res;
        x += scale * du.head(n);
        p += scale * du(n);
    }
    return res;
}

double omega_max_at(const BranchProblem& prob, const Vector& x, double p, const Vector& w,
                    bool* stable) {
    const ModelConfig cfg = prob.config(p);
    const SpatialDistribution xs{x};
    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;
    const WageSolution ws = solve_wages(cfg, xs, w, wopts);
    const Vector v = market_state(cfg, xs, ws.w).v;
    const Matrix vx = payoff_jacobian_at(cfg, xs, ws);
    const double vbar = x.dot(v);
    const double vstar = vbar;

    const int n = prob.n();
    const Matrix b = tangent_basis(n);
    Matrix j(n, n);
    const Eigen::RowVectorXd xv = x.transpose() * vx;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            j(i, k) = x(i) * (vx(i, k) - v(k) - xv(k));
            if (i == k) j(i, k) += v(i) - vbar;
        }
    Eigen::EigenSolver<Matrix> es(b.transpose() * j * b);
    double hi = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < n - 1; ++k) hi = std::max(hi, es.eigenvalues()(k).real());
    const double om = hi / vstar;
    if (stable) *stable = om < -1e-8 / vstar;
    return om;
}

struct FoldRefineResult {
    double param;
    Vector x;
};

/// Branch tangent at (x, p): kernel of the equilibrium Jacobian stacked
/// with the simplex row, oriented along `param_direction` (or by growing
/// distance from the uniform state when the tangent is param-vertical,
/// which is the geometry right next to a break point).
Vector initial_tangent(const BranchProblem& prob, const Vector& x, double p,
                       const Vector& w, double param_direction) {
    const int n = prob.n();
    const Matrix b = tangent_basis(n);
    Matrix jac(n, n + 1);
    jac.block(0, 0, n - 1, n) = b.transpose() * prob.vx(x, p, w);
    jac.block(0, n, n - 1, 1) = b.transpose() * prob.vp(x, p, w);
    jac.row(n - 1).head(n).setOnes();
    jac(n - 1, n) = 0.0;
    Eigen::FullPivLU<Matrix> lu(jac);
    lu.setThreshold(1e-10);
    const Matrix kernel = lu.kernel();
    Vector t;
    if (kernel.cols() >= 1 && kernel.col(0).norm() > 1e-12) {
        t = kernel.col(0).normalized();
    } else {
        t = Vector::Zero(n + 1);
        t(n) = 1.0;
    }
    if (std::fabs(t(n)) > 1e-6) {
        if (t(n) * param_direction < 0) t = -t;
    } else {
        const Vector xbar = Vector::Constant(n, 1.0 / n);
        if (t.head(n).dot(x - xbar) < 0) t = -t;
    }
    return t;
}

/// Re-walks the bracket [u_a -> past the reversal] with fixed small steps
/// and fits a parabola to p(s) around the reversal; three rounds of step
/// reduction. Empty when no reversal is actually bracketed.
std::optional<FoldRefineResult> refine_fold(const BranchProblem& prob, Vector xa, double pa,
                                            Vector wa, Vector tangent, double h,
                                            const ContinuationOptions& opts) {
    const int n = prob.n();
    Vector x = xa;
    double p = pa;
    Vector w = wa;
    Vector t = tangent;

    FoldRefineResult out{pa, xa};
    bool bracketed = false;
    for (int round = 0; round < 3; ++round) {
        h = std::max(h / 4.0, 1e-6);
        // walk until the parameter direction of the secant flips
        double s = 0.0;
        std::vector<double> ss = {0.0}, ps = {p};
        std::vector<Vector> xs = {x};
        double last_dp = t(n) >= 0 ? 1.0 : -1.0;
        bool flipped = false;
        for (int step = 0; step < 600 && !flipped; ++step) {
            const Vector x_pred = x + h * t.head(n);
            const double p_pred = p + h * t(n);
            const CorrectorResult c = correct(prob, x_pred, p_pred, t, w, opts);
            if (!c.ok) break;
            Vector u_new(n + 1), u_old(n + 1);
            u_new.head(n) = c.x;
            u_new(n) = c.p;
            u_old.head(n) = x;
            u_old(n) = p;
            Vector sec = u_new - u_old;
            const double ds = sec.norm();
            if (ds < 1e-15) break;
            sec /= ds;
            s += ds;
            ss.push_back(s);
            ps.push_back(c.p);
            xs.push_back(c.x);
            if ((sec(n) >= 0 ? 1.0 : -1.0) != last_dp && std::fabs(sec(n)) > 1e-13)
                flipped = true;
            x = c.x;
            p = c.p;
            w = c.w;
            t = sec;
        }
        const size_t m = ss.size();
        if (flipped && m >= 3) {
            bracketed = true;
            // Newton-form parabola through the last three points
            const double s0 = ss[m - 3], s1 = ss[m - 2], s2 = ss[m - 1];
            const double p0 = ps[m - 3], p1 = ps[m - 2], p2 = ps[m - 1];
            const double d01 = (p1 - p0) / (s1 - s0);
            const double d12 = (p2 - p1) / (s2 - s1);
            const double a2 = (d12 - d01) / (s2 - s0);
            double s_star = s1;
            if (std::fabs(a2) > 1e-300) s_star = 0.5 * (s0 + s1) - d01 / (2.0 * a2);
            s_star = std::min(std::max(s_star, s0 - (s2 - s0)), s2 + (s2 - s0));
            out.param = p0 + d01 * (s_star - s0) + a2 * (s_star - s0) * (s_star - s1);
            const double lam =
                std::min(1.0, std::max(0.0, (s_star - s1) / std::max(s2 - s1, 1e-300)));
            out.x = (1.0 - lam) * xs[m - 2] + lam * xs[m - 1];
            // restart the next round just before the fold
            x = xs[m - 3];
            p = ps[m - 3];
            Vector u0(n + 1), u1(n + 1);
            u0.head(n) = xs[m - 3];
            u0(n) = ps[m - 3];
            u1.head(n) = xs[m - 2];
            u1(n) = ps[m - 2];
            t = (u1 - u0).normalized();
            last_dp = t(n) >= 0 ? 1.0 : -1.0;
        } else {
            break;
        }
    }
    if (!bracketed) return std::nullopt;
    return out;
}

}  // namespace

double Branch::emergence_param() const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& pt : points) lo = std::min(lo, pt.param);
    return lo;
}

Branch continue_branch(const Family& family, FreeParam free, const Vector& x0, double p0,
                       double param_direction, const ContinuationOptions& opts) {
    const BranchProblem prob(family, free);
    const int n = prob.n();
    const auto symmetries = symmetry_group(family.config_with(free, p0));

    Branch branch;
    branch.parameter = free;

    // settle the starting point at fixed parameter
    Vector w0 = Vector::Ones(n);
    CorrectorResult start = correct(prob, x0, p0, Vector::Zero(n + 1), w0, opts, true);
    if (!start.ok) {
        SpecialPoint sp;
        sp.type = PointType::Endpoint;
        sp.param = p0;
        sp.x = x0;
        sp.reason = "starting point is not an equilibrium";
        branch.special_points.push_back(sp);
        return branch;
    }

    auto push_point = [&](const Vector& x, double p, const Vector& w) {
        bool stable = false;
        const double om = omega_max_at(prob, x, p, w, &stable);
        branch.points.push_back({p, x, om, stable});
    };
    push_point(start.x, start.p, start.w);

    Vector x = start.x;
    double p = start.p;
    Vector w = start.w;
    Vector t = initial_tangent(prob, x, p, w, param_direction);

    double h = opts.step0;
    double last_dp_sign = t(n) >= 0 ? 1.0 : -1.0;
    int fold_cooldown = 0;
    Vector prev_x = x, prev_w = w, prev_t = t;
    double prev_p = p;

    while (static_cast<int>(branch.points.size()) < opts.max_points) {
        if (p + h * t(n) > opts.param_hi + 1e-12 || p + h * t(n) < opts.param_lo - 1e-12) {
            // land exactly on the range edge with a natural-parameter solve
            const double p_edge = t(n) > 0 ? opts.param_hi : opts.param_lo;
            if (std::fabs(p_edge - p) > 1e-12) {
                const CorrectorResult c =
                    correct(prob, x + (p_edge - p) / std::max(std::fabs(t(n)), 1e-6) * t.head(n),
                            p_edge, t, w, opts, true);
                if (c.ok) push_point(c.x, c.p, c.w);
            }
            SpecialPoint sp;
            sp.type = PointType::Endpoint;
            sp.param = branch.points.back().param;
            sp.x = branch.points.back().x;
            sp.reason = "parameter range edge";
            branch.special_points.push_back(sp);
            break;
        }

        const Vector x_pred = x + h * t.head(n);
        const double p_pred = p + h * t(n);
        CorrectorResult c = correct(prob, x_pred, p_pred, t, w, opts);
        const bool jump =
            c.ok && (c.x - x).cwiseAbs().maxCoeff() > std::max(0.05, 12.0 * h);
        if (!c.ok || jump) {
            h *= 0.5;
            if (h < opts.step_abort) {
                SpecialPoint sp;
                sp.type = PointType::Endpoint;
                sp.param = p;
                sp.x = x;
                sp.reason = jump ? "branch jump at minimal step" : "corrector failure";
                branch.special_points.push_back(sp);
                break;
            }
            continue;
        }

        Vector u_new(n + 1), u_old(n + 1);
        u_new.head(n) = c.x;
        u_new(n) = c.p;
        u_old.head(n) = x;
        u_old(n) = p;
        Vector sec = (u_new - u_old).normalized();

        // fold: the parameter progression reverses along the arclength
        const double dp_sign = sec(n) >= 0 ? 1.0 : -1.0;
        if (fold_cooldown > 0) --fold_cooldown;
        bool ended_at_junction = false;
        if (dp_sign != last_dp_sign && std::fabs(sec(n)) > 1e-12 && fold_cooldown == 0 &&
            branch.points.size() >= 2) {
            fold_cooldown = 3;
            const std::optional<FoldRefineResult> refined =
                refine_fold(prob, prev_x, prev_p, prev_w, prev_t, h, opts);
            if (refined) {
                const FoldRefineResult& fr = *refined;
                // A reversal at a state fixed by a model symmetry that the
                // branch itself breaks is a pitchfork junction (the trace
                // would continue onto the mirror copy), not a limit point;
                // the branch ends there.
                bool junction = false;
                for (const auto& perm : symmetries) {
                    bool identity = true;
                    for (int k = 0; k < n; ++k)
                        if (perm[k] != k) identity = false;
                    if (identity) continue;
                    Vector gx(n);
                    for (int k = 0; k < n; ++k) gx(k) = fr.x(perm[k]);
                    if ((gx - fr.x).cwiseAbs().maxCoeff() >= 5e-3) continue;
                    double max_viol = 0.0;
                    for (const auto& pt : branch.points) {
                        Vector gp(n);
                        for (int k = 0; k < n; ++k) gp(k) = pt.x(perm[k]);
                        max_viol = std::max(max_viol, (gp - pt.x).cwiseAbs().maxCoeff());
                    }
                    if (max_viol > 2e-2) {
                        junction = true;
                        break;
                    }
                }
                SpecialPoint sp;
                sp.type = junction ? PointType::BranchPoint : PointType::Fold;
                if (junction) sp.reason = "pitchfork junction with a symmetric branch";
                sp.param = fr.param;
                sp.x = fr.x;
                branch.special_points.push_back(sp);
                if (junction) {
                    SpecialPoint end;
                    end.type = PointType::Endpoint;
                    end.param = fr.param;
                    end.x = fr.x;
                    end.reason = "joined a symmetric branch";
                    branch.special_points.push_back(end);
                    ended_at_junction = true;
                }
            }
        }
        if (ended_at_junction) break;
        last_dp_sign = dp_sign;

        // branch point: growth rate changes sign without a fold nearby
        const double om_prev = branch.points.back().omega_max;
        push_point(c.x, c.p, c.w);
        const double om_new = branch.points.back().omega_max;
        if (om_prev != 0.0 && (om_prev > 0) != (om_new > 0) && fold_cooldown == 0) {
            SpecialPoint sp;
            sp.type = PointType::BranchPoint;
            sp.param = c.p + (p - c.p) * om_new / (om_new - om_prev);
            sp.x = c.x;
            branch.special_points.push_back(sp);
        }

        prev_x = x;
        prev_p = p;
        prev_w = w;
        prev_t = t;
        x = c.x;
        p = c.p;
        w = c.w;
        t = sec;

        if (x.minCoeff() < opts.min_x) {
            SpecialPoint sp;
            sp.type = PointType::Endpoint;
            sp.param = p;
            sp.x = x;
            sp.reason = "region nearly depopulated";
            branch.special_points.push_back(sp);
            break;
        }

        h = std::min(h * 1.3, opts.step_max);
        h = std::max(h, opts.step_min);
    }

    // the stability exchange at a limit point is part of the fold, not a
    // separate bifurcation: drop growth-rate crossings recorded next to one
    auto near_fold = [&](const SpecialPoint& sp) {
        if (sp.type != PointType::BranchPoint) return false;
        for (const auto& other : branch.special_points)
            if (other.type == PointType::Fold && std::fabs(other.param - sp.param) < 5e-3)
                return true;
        return false;
    };
    branch.special_points.erase(
        std::remove_if(branch.special_points.begin(), branch.special_points.end(), near_fold),
        branch.special_points.end());
    return branch;
}

Branch continue_branch_both(const Family& family, FreeParam free, const Vector& x0,
                            double p0, const ContinuationOptions& opts) {
    Branch fwd = continue_branch(family, free, x0, p0, +1.0, opts);
    Branch bwd = continue_branch(family, free, x0, p0, -1.0, opts);
    Branch out;
    out.parameter = free;
    out.label = fwd.label;
    // splice: reversed backward half, then the forward half (skip its
    // duplicated starting point)
    for (auto it = bwd.points.rbegin(); it != bwd.points.rend(); ++it) out.points.push_back(*it);
    for (size_t i = 1; i < fwd.points.size(); ++i) out.points.push_back(fwd.points[i]);
    out.special_points = bwd.special_points;
    out.special_points.insert(out.special_points.end(), fwd.special_points.begin(),
                              fwd.special_points.end());
    return out;
}

BranchSeeds branch_switch(const Family& family, FreeParam free, double param_at_break,
                          const Vector& direction, double eps, double delta,
                          SwitchSide side) {
    const BranchProblem prob(family, free);
    const int n = prob.n();
    const SpatialDistribution xbar = SpatialDistribution::uniform(n);

    Vector z = direction;
    z.array() -= z.mean();
    if (z.norm() < 1e-12) throw ConfigError("branch switch direction must be a migration pattern");
    z.normalize();

    // Rayleigh quotient of V along z tells which side destabilizes z.
    auto omega_along = [&](double p) {
        const EigenReport rep = uniform_stability(prob.config(p));
        const Matrix vx = payoff_jacobian(prob.config(p), xbar, JacobianMethod::Analytic);
        return z.dot((1.0 / n) / rep.v_bar * (vx * z));
    };
    const double h_side = std::max(10.0 * delta, 1e-5);
    const double om_up = omega_along(std::min(param_at_break + h_side, 1.0 - 1e-6));
    const double om_dn = omega_along(std::max(param_at_break - h_side, 1e-6));
    double unstable_dir;
    if (om_up > 0 && om_dn <= 0) unstable_dir = +1.0;
    else if (om_dn > 0 && om_up <= 0) unstable_dir = -1.0;
    else if (std::fabs(om_dn) > std::fabs(om_up)) unstable_dir = om_dn > 0 ? -1.0 : +1.0;
    else unstable_dir = om_up > 0 ? +1.0 : -1.0;
    const double dir = side == SwitchSide::Unstable ? unstable_dir : -unstable_dir;
    const double p_corr = param_at_break + dir * delta;

    // complement of z inside the tangent space
    const Matrix b = tangent_basis(n);
    Matrix cmat(n, std::max(n - 2, 0));
    {
        Matrix t = b - z * (z.transpose() * b);  // project z out of the basis
        Eigen::ColPivHouseholderQR<Matrix> qr(t);
        Matrix q = qr.householderQ();
        int col = 0;
        for (int k = 0; k < n && col < n - 2; ++k) {
            Vector cand = q.col(k);
            cand -= cand.mean() * Vector::Ones(n);
            cand -= z * z.dot(cand);
            if (cand.norm() > 1e-8) {
                cand.normalize();
                // orthogonalize against already accepted columns
                for (int j = 0; j < col; ++j) cand -= cmat.col(j) * cmat.col(j).dot(cand);
                if (cand.norm() > 1e-8) {
                    cand.normalize();
                    cmat.col(col++) = cand;
                }
            }
        }
        if (col < n - 2) throw NumericError("branch switch: could not build slice basis");
    }

    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;
    const ModelConfig cfg = prob.config(p_corr);

    // slice solve: payoff equalization orthogonal to z at pinned amplitude
    auto slice = [&](double alpha, Vector y0, bool* ok) {
        Vector y = y0;
        *ok = false;
        for (int it = 0; it < 30; ++it) {
            Vector x = xbar.x + alpha * z + y;
            if ((x.array() <= 0.0).any()) return y;
            const SpatialDistribution xs{x};
            const WageSolution ws = solve_wages(cfg, xs, wopts);
            const Vector v = market_state(cfg, xs, ws.w).v;
            if (n == 2) {
                *ok = true;
                return y;
            }
            const Vector r = cmat.transpose() * v;
            if (r.cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, v.mean())) {
                *ok = true;
                return y;
            }
            const Matrix vx = payoff_jacobian_at(cfg, xs, ws);
            const Matrix jac = cmat.transpose() * vx * cmat;
            const Vector dc = Eigen::PartialPivLU<Matrix>(jac).solve(-r);
            if (!dc.allFinite()) return y;
            y += cmat * dc;
        }
        return y;
    };

    auto bifurcation_fn = [&](double alpha, Vector& y_io, bool* ok) {
        y_io = slice(alpha, y_io, ok);
        if (!*ok) return 0.0;
        const Vector x = xbar.x + alpha * z + y_io;
        const SpatialDistribution xs{x};
        const WageSolution ws = solve_wages(cfg, xs, wopts);
        const Vector v = market_state(cfg, xs, ws.w).v;
        return z.dot(v);
    };

    auto solve_one_side = [&](double sgn, Vector& x_out) {
        const double a_hi_cap = 0.9 * n * xbar.x.minCoeff();  // keep far from the boundary
        for (double eps_try : {eps, 5.0 * eps}) {
            Vector y = Vector::Zero(n);
            bool ok = false;
            double a0 = sgn * eps_try;
            double h0 = bifurcation_fn(a0, y, &ok);
            if (!ok) continue;
            double a1 = a0, h1 = h0;
            bool bracketed = false;
            for (int k = 0; k < 60; ++k) {
                const double a2 = a1 * 1.5;
                if (std::fabs(a2) > a_hi_cap) break;
                Vector y2 = y;
                bool ok2 = false;
                const double h2 = bifurcation_fn(a2, y2, &ok2);
                if (!ok2) break;
                if ((h2 > 0) != (h1 > 0)) {
                    a0 = a1;
                    h0 = h1;
                    a1 = a2;
                    h1 = h2;
                    y = y2;
                    bracketed = true;
                    break;
                }
                a1 = a2;
                h1 = h2;
                y = y2;
            }
            if (!bracketed) continue;
            // bisect the amplitude equation
            for (int k = 0; k < 90 && std::fabs(a1 - a0) > 1e-14; ++k) {
                const double am = 0.5 * (a0 + a1);
                Vector ym = y;
                bool okm = false;
                const double hm = bifurcation_fn(am, ym, &okm);
                if (!okm) break;
                if ((hm > 0) == (h0 > 0)) {
                    a0 = am;
                    h0 = hm;
                } else {
                    a1 = am;
                    h1 = hm;
                }
                y = ym;
            }
            const double a_star = 0.5 * (a0 + a1);
            Vector y_fin = y;
            bool okf = false;
            y_fin = slice(a_star, y_fin, &okf);
            Vector x = xbar.x + a_star * z + y_fin;
            // full polish at fixed parameter
            const BranchProblem pb(family, free);
            ContinuationOptions copts;
            const CorrectorResult fin =
                correct(pb, x, p_corr, Vector::Zero(n + 1), Vector::Ones(n), copts, true);
            if (!fin.ok) continue;
            if ((fin.x - xbar.x).cwiseAbs().maxCoeff() < eps_try / 10.0) continue;  // trivial
            x_out = fin.x;
            return true;
        }
        return false;
    };

    BranchSeeds seeds;
    seeds.param = p_corr;
    seeds.ok_plus = solve_one_side(+1.0, seeds.x_plus);
    seeds.ok_minus = solve_one_side(-1.0, seeds.x_minus);
    return seeds;
}

std::vector<std::vector<int>> symmetry_group(const ModelConfig& config) {
    const int n = config.n;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> group;
    const Matrix& d = config.proximity.phi;
    const Matrix& g = config.externality.psi;
    do {
        bool ok = true;
        for (int i = 0; i < n && ok; ++i)
            for (int j = 0; j < n && ok; ++j)
                if (std::fabs(d(perm[i], perm[j]) - d(i, j)) > 1e-12 ||
                    std::fabs(g(perm[i], perm[j]) - g(i, j)) > 1e-12)
                    ok = false;
        if (ok) group.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return group;
}

namespace {

Vector apply_perm(const std::vector<int>& perm, const Vector& x) {
    Vector out(x.size());
    for (int i = 0; i < x.size(); ++i) out(i) = x(perm[i]);
    return out;
}

/// True when the two branches trace the same family of equilibria modulo
/// region permutation: exact-twin match on aligned points, or a coarse
/// point-set containment for independently traced copies.
bool branches_equivalent(const Branch& a, const Branch& b,
                         const std::vector<std::vector<int>>& group) {
    if (a.points.empty() || b.points.empty()) return false;
    for (const auto& perm : group) {
        if (a.points.size() == b.points.size()) {
            double worst = 0.0;
            for (size_t i = 0; i < a.points.size(); ++i) {
                const double d =
                    (a.points[i].x - apply_perm(perm, b.points[i].x)).cwiseAbs().maxCoeff() +
                    std::fabs(a.points[i].param - b.points[i].param);
                worst = std::max(worst, d);
                if (worst > 1e-6) break;
            }
            if (worst <= 1e-6) return true;
        }
        // coarse containment: probe a's points against b's polyline (the same
        // curve traced from a different seed lands on a different grid, so
        // compare against segments, not points)
        double worst = 0.0;
        const size_t stride = std::max<size_t>(1, a.points.size() / 16);
        for (size_t i = 0; i < a.points.size(); i += stride) {
            const int n = static_cast<int>(a.points[i].x.size());
            Vector pa(n + 1);
            pa.head(n) = a.points[i].x;
            pa(n) = a.points[i].param;
            double best = std::numeric_limits<double>::infinity();
            for (size_t j = 0; j + 1 < b.points.size(); ++j) {
                Vector q1(n + 1), q2(n + 1);
                q1.head(n) = apply_perm(perm, b.points[j].x);
                q1(n) = b.points[j].param;
                q2.head(n) = apply_perm(perm, b.points[j + 1].x);
                q2(n) = b.points[j + 1].param;
                const Vector seg = q2 - q1;
                const double len2 = seg.squaredNorm();
                double t = len2 > 0 ? seg.dot(pa - q1) / len2 : 0.0;
                t = std::min(1.0, std::max(0.0, t));
                best = std::min(best, (pa - (q1 + t * seg)).cwiseAbs().maxCoeff());
            }
            worst = std::max(worst, best);
            if (worst > 6e-3) break;
        }
        if (worst <= 6e-3) return true;
    }
    return false;
}

}  // namespace

Diagram bifurcation_diagram(const DiagramSpec& spec) {
    Diagram diagram;
    const int n = spec.family.regions();
    const SpatialDistribution xbar = SpatialDistribution::uniform(n);

    ContinuationOptions copts = spec.cont;
    copts.param_lo = spec.lo;
    copts.param_hi = spec.hi;

    // uniform branch, when the uniform state is an equilibrium of the family
    const double p_mid = 0.5 * (spec.lo + spec.hi);
    bool uniform_is_equilibrium = false;
    try {
        const ModelConfig cfg = spec.family.config_with(spec.free, p_mid);
        const WageSolution ws = solve_wages(cfg, xbar);
        const Vector v = market_state(cfg, xbar, ws.w).v;
        uniform_is_equilibrium = (v.maxCoeff() - v.minCoeff()) <= 1e-10 * v.mean();
    } catch (const std::exception&) {
    }

    ThresholdResult thresholds;
    if (uniform_is_equilibrium) {
        ThresholdOptions topts;
        topts.lo = spec.lo;
        topts.hi = spec.hi;
        topts.use_closed_form = false;
        thresholds = critical_threshold(spec.family, spec.free, topts);
        diagram.break_points = thresholds.mode_crossings;
    }

    if (uniform_is_equilibrium) {
        Branch uni;
        uni.parameter = spec.free;
        uni.label = "uniform";
        for (int i = 0; i < spec.uniform_samples; ++i) {
            const double p = spec.lo + (spec.hi - spec.lo) * i / (spec.uniform_samples - 1.0);
            const EigenReport rep = uniform_stability(spec.family.config_with(spec.free, p));
            uni.points.push_back({p, xbar.x, rep.omega_star, rep.omega_star < 0.0});
        }
        for (const auto& bp : thresholds.mode_crossings) {
            SpecialPoint sp;
            sp.type = PointType::BranchPoint;
            sp.param = bp.param;
            sp.x = xbar.x;
            sp.reason = "mode " + std::to_string(bp.mode);
            uni.special_points.push_back(sp);
        }
        diagram.branches.push_back(std::move(uni));
    }

    // branches emerging at every detected mode zero
    std::vector<Branch> candidates;
    for (const auto& bp : thresholds.mode_crossings) {
        BranchSeeds seeds;
        try {
            seeds = branch_switch(spec.family, spec.free, bp.param, bp.pattern, spec.eps,
                                  spec.delta, SwitchSide::Unstable);
            if (!seeds.ok_plus && !seeds.ok_minus)
                seeds = branch_switch(spec.family, spec.free, bp.param, bp.pattern, spec.eps,
                                      spec.delta, SwitchSide::Stable);
        } catch (const std::exception&) {
            continue;
        }
        // continue away from the break point only; the sliver back to it is
        // already covered by the uniform branch
        const double away = seeds.param >= bp.param ? +1.0 : -1.0;
        for (const auto& [ok, xs] :
             {std::pair{seeds.ok_plus, seeds.x_plus}, std::pair{seeds.ok_minus, seeds.x_minus}}) {
            if (!ok) continue;
            Branch br = continue_branch(spec.family, spec.free, xs, seeds.param, away, copts);
            br.label = "switch mode " + std::to_string(bp.mode);
            if (!br.points.empty()) candidates.push_back(std::move(br));
        }
    }

    // extra branches from multi-start equilibration
    if (spec.multistart) {
        for (const double frac : {0.12, 0.5, 0.88}) {
            const double p = spec.lo + frac * (spec.hi - spec.lo);
            std::vector<EquilibriumResult> found;
            try {
                found = multistart_equilibria(spec.family.config_with(spec.free, p), {},
                                              spec.parallel);
            } catch (const std::exception&) {
                continue;
            }
            for (const auto& eq : found) {
                if ((eq.x_star.x - xbar.x).cwiseAbs().maxCoeff() < 1e-6) continue;
                Branch br =
                    continue_branch_both(spec.family, spec.free, eq.x_star.x, p, copts);
                br.label = "multistart";
                if (!br.points.empty()) candidates.push_back(std::move(br));
            }
        }
    }

    // deduplicate up to the model's region-permutation symmetries
    const auto group = symmetry_group(spec.family.config_with(spec.free, p_mid));
    for (auto& cand : candidates) {
        bool dup = false;
        for (const auto& kept : diagram.branches) {
            if (kept.label == "uniform") {
                // a candidate that never leaves the uniform state is a duplicate
                double far = 0.0;
                for (const auto& pt : cand.points)
                    far = std::max(far, (pt.x - xbar.x).cwiseAbs().maxCoeff());
                if (far < 1e-6) {
                    dup = true;
                    break;
                }
                continue;
            }
            if (branches_equivalent(cand, kept, group)) {
                dup = true;
                break;
            }
        }
        if (!dup) diagram.branches.push_back(std::move(cand));
    }

    // deterministic ordering: (emergence parameter, lexicographic pattern)
    std::stable_sort(diagram.branches.begin(), diagram.branches.end(),
                     [](const Branch& a, const Branch& b) {
                         if (a.label == "uniform" && b.label != "uniform") return true;
                         if (b.label == "uniform" && a.label != "uniform") return false;
                         const double ea = a.emergence_param(), eb = b.emergence_param();
                         if (std::fabs(ea - eb) > 1e-12) return ea < eb;
                         const Vector& xa = a.points.front().x;
                         const Vector& xb = b.points.front().x;
                         for (int i = 0; i < xa.size(); ++i)
                             if (std::fabs(xa(i) - xb(i)) > 1e-12) return xa(i) < xb(i);
                         return false;
                     });
    return diagram;
}

ExponentFit fit_pitchfork_exponent(const Branch& branch, double break_point) {
    if (branch.points.empty()) throw NumericError("exponent fit: empty branch");
    const int n = static_cast<int>(branch.points.front().x.size());
    const Vector xbar = Vector::Constant(n, 1.0 / n);

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto& pt : branch.points) {
        const double dp = std::fabs(pt.param - break_point);
        if (dp < 1e-4 || dp > 1e-2) continue;
        const double amp = (pt.x - xbar).norm();
        if (amp <= 1e-14) continue;
        const double lx = std::log(dp), ly = std::log(amp);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++m;
    }
    if (m < 5)
        throw NumericError("exponent fit: fewer than 5 branch points in the window");
    ExponentFit fit;
    fit.points_used = m;
    fit.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return fit;
}

}  // namespace spateq
