#include "spateq/stability.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace spateq {

namespace {

constexpr double kStructureTol = 1e-12;

Matrix row_normalize(const Matrix& m) {
    Matrix out = m;
    for (int i = 0; i < m.rows(); ++i) out.row(i) /= m.row(i).sum();
    return out;
}

bool is_symmetric_circulant(const Matrix& m, double tol) {
    const int n = static_cast<int>(m.rows());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (std::fabs(m(i, j) - m(0, (j - i + n) % n)) > tol) return false;
    for (int k = 1; k < n; ++k)
        if (std::fabs(m(0, k) - m(0, n - k)) > tol) return false;
    return true;
}

bool is_bccb4(const Matrix& m, double tol) {
    if (m.rows() != 4) return false;
    auto near = [tol](double a, double b) { return std::fabs(a - b) <= tol; };
    // [[A, B], [B, A]] with A, B symmetric 2x2 circulants.
    if (!near(m(0, 0), m(1, 1)) || !near(m(2, 2), m(3, 3)) || !near(m(0, 0), m(2, 2)))
        return false;
    if (!near(m(0, 1), m(1, 0)) || !near(m(2, 3), m(3, 2)) || !near(m(0, 1), m(2, 3)))
        return false;
    if (!near(m(0, 2), m(1, 3)) || !near(m(2, 0), m(3, 1)) || !near(m(0, 2), m(2, 0)))
        return false;
    if (!near(m(0, 3), m(1, 2)) || !near(m(2, 1), m(3, 0)) || !near(m(0, 3), m(2, 1)))
        return false;
    return true;
}

void fix_sign(Vector& z) {
    for (int i = 0; i < z.size(); ++i) {
        if (std::fabs(z(i)) > 1e-9) {
            if (z(i) < 0) z = -z;
            return;
        }
    }
}

/// Real combinations of the DFT eigenvectors of an n x n symmetric
/// circulant, ordered so that n = 4 yields (1,0,-1,0), (1,-1,1,-1),
/// (0,1,0,-1) as in the four-region analysis.
std::vector<Vector> circulant_tangent_basis(int n) {
    std::vector<Vector> basis;
    auto push = [&](Vector z) {
        z.normalize();
        fix_sign(z);
        basis.push_back(std::move(z));
    };
    if (n == 4) {
        Vector z1(4), z2(4), z3(4);
        z1 << 1, 0, -1, 0;
        z2 << 1, -1, 1, -1;
        z3 << 0, 1, 0, -1;
        push(z1);
        push(z2);
        push(z3);
        return basis;
    }
    for (int k = 1; k <= n / 2; ++k) {
        Vector c(n), s(n);
        for (int j = 0; j < n; ++j) {
            c(j) = std::cos(2.0 * std::numbers::pi * k * j / n);
            s(j) = std::sin(2.0 * std::numbers::pi * k * j / n);
        }
        push(c);
        if (2 * k != n) push(s);
    }
    return basis;
}

std::vector<Vector> bccb4_tangent_basis() {
    std::vector<Vector> basis;
    Vector z1(4), z2(4), z3(4);
    z1 << 1, 1, -1, -1;   // North--South
    z2 << 1, -1, 1, -1;   // duo-centric
    z3 << 1, -1, -1, 1;   // East--West
    for (Vector* z : {&z1, &z2, &z3}) {
        z->normalize();
        basis.push_back(*z);
    }
    return basis;
}

/// Checks that every candidate vector is an eigenvector of m (already
/// row-normalized); returns the eigenvalues or nothing on mismatch.
std::optional<std::vector<double>> eigenvalues_on_basis(const Matrix& m,
                                                        const std::vector<Vector>& basis,
                                                        double tol) {
    std::vector<double> vals;
    vals.reserve(basis.size());
    for (const Vector& z : basis) {
        const Vector mz = m * z;
        const double mu = z.dot(mz);
        if ((mz - mu * z).cwiseAbs().maxCoeff() > tol * std::max(1.0, m.cwiseAbs().maxCoeff()))
            return std::nullopt;
        vals.push_back(mu);
    }
    return vals;
}

std::vector<EigenPair> dense_symmetric_tangent_spectrum(const Matrix& m) {
    const int n = static_cast<int>(m.rows());
    const Matrix b = tangent_basis(n);
    Matrix proj = b.transpose() * m * b;
    const double asym = (proj - proj.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10)
        throw ConfigError(
            "general-symmetric spectrum requires a symmetric row-normalized matrix");
    proj = 0.5 * (proj + proj.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(proj);
    std::vector<EigenPair> out;
    for (int k = 0; k < n - 1; ++k) {
        Vector z = b * es.eigenvectors().col(k);
        z.normalize();
        fix_sign(z);
        out.push_back({es.eigenvalues()(k), std::move(z)});
    }
    return out;
}

struct SharedBasis {
    std::vector<Vector> patterns;
    std::vector<double> chi;
    std::vector<double> lambda;
};

/// Shared DFT basis of the row-normalized proximity and externality
/// matrices when both are circulant (or both BCCB for n = 4).
std::optional<SharedBasis> shared_structure_basis(const Matrix& dbar, const Matrix& gbar) {
    const int n = static_cast<int>(dbar.rows());
    if (is_symmetric_circulant(dbar, kStructureTol) &&
        is_symmetric_circulant(gbar, kStructureTol)) {
        auto basis = circulant_tangent_basis(n);
        auto chi = eigenvalues_on_basis(dbar, basis, kStructureTol);
        auto lam = eigenvalues_on_basis(gbar, basis, kStructureTol);
        if (chi && lam) return SharedBasis{std::move(basis), *chi, *lam};
    }
    if (n == 4 && is_bccb4(dbar, kStructureTol) && is_bccb4(gbar, kStructureTol)) {
        auto basis = bccb4_tangent_basis();
        auto chi = eigenvalues_on_basis(dbar, basis, kStructureTol);
        auto lam = eigenvalues_on_basis(gbar, basis, kStructureTol);
        if (chi && lam) return SharedBasis{std::move(basis), *chi, *lam};
    }
    return std::nullopt;
}

EigenReport uniform_stability_impl(const ModelConfig& config, bool force_general);

}  // namespace

GainValue gain_function(double s, double t, double sigma) {
    GainValue g;
    g.sharp = -(1.0 - s) + ((sigma - 1.0) + sigma * s) * t;
    g.flat = sigma + (sigma - 1.0) * s;
    g.omega = g.sharp / g.flat;
    return g;
}

ForceDecomposition decompose_net_force(double phi, double psi, double sigma) {
    if (!(phi > 0.0 && phi < 1.0 && psi > 0.0 && psi < 1.0))
        throw ConfigError("force decomposition requires phi, psi in (0, 1)");
    if (!(sigma > 1.0)) throw ConfigError("force decomposition requires sigma > 1");
    ForceDecomposition d;
    d.chi = (1.0 - phi) / (1.0 + phi);
    d.lambda = (1.0 - psi) / (1.0 + psi);
    d.omega_a = d.chi;
    d.omega_w = 1.0 - d.chi;
    d.alpha_x = d.lambda;
    d.beta_x = ((sigma - 1.0) * (1.0 + d.chi) * d.lambda - 1.0) /
               (sigma + (sigma - 1.0) * d.chi);
    d.omega = d.omega_a * d.alpha_x + d.omega_w * d.beta_x;
    return d;
}

std::vector<EigenPair> proximity_spectrum(const Matrix& m, SpectrumHint hint, bool* hint_ok) {
    if (m.rows() != m.cols() || m.rows() < 2)
        throw ConfigError("spectrum requires a square matrix with n >= 2");
    const Matrix mbar = row_normalize(m);
    if (hint_ok) *hint_ok = true;

    if (hint == SpectrumHint::Circulant && is_symmetric_circulant(mbar, kStructureTol)) {
        auto basis = circulant_tangent_basis(static_cast<int>(m.rows()));
        if (auto vals = eigenvalues_on_basis(mbar, basis, kStructureTol)) {
            std::vector<EigenPair> out;
            for (size_t k = 0; k < basis.size(); ++k)
                out.push_back({(*vals)[k], basis[k]});
            return out;
        }
    }
    if (hint == SpectrumHint::Bccb && is_bccb4(mbar, kStructureTol)) {
        auto basis = bccb4_tangent_basis();
        if (auto vals = eigenvalues_on_basis(mbar, basis, kStructureTol)) {
            std::vector<EigenPair> out;
            for (size_t k = 0; k < basis.size(); ++k)
                out.push_back({(*vals)[k], basis[k]});
            return out;
        }
    }
    if (hint != SpectrumHint::GeneralSymmetric && hint_ok) *hint_ok = false;
    return dense_symmetric_tangent_spectrum(mbar);
}

Matrix payoff_jacobian_at(const ModelConfig& config, const SpatialDistribution& x,
                          const WageSolution& wages) {
    const int n = config.n;
    const MarketState s = market_state(config, x, wages.w);
    const Matrix wx = wage_jacobian(config, x, wages.w);

    Matrix ainv_g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) ainv_g(i, j) = config.externality.psi(i, j) / s.a(i);
    Matrix winv_wx(n, n);
    for (int i = 0; i < n; ++i) winv_wx.row(i) = wx.row(i) / wages.w(i);

    const Matrix inner = s.m.transpose() * ainv_g +
                         (Matrix::Identity(n, n) - s.m.transpose()) * winv_wx;
    return s.v.asDiagonal() * inner;
}

Matrix payoff_jacobian(const ModelConfig& config, const SpatialDistribution& x,
                       JacobianMethod method, double fd_step) {
    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;

    if (method == JacobianMethod::Analytic) {
        const WageSolution ws = solve_wages(config, x, wopts);
        if (!ws.converged) throw NumericError("payoff jacobian: wage solve did not converge");
        return payoff_jacobian_at(config, x, ws);
    }

    const int n = config.n;
    const Matrix b = tangent_basis(n);
    const WageSolution base = solve_wages(config, x, wopts);
    Matrix out = Matrix::Zero(n, n);
    for (int k = 0; k < n - 1; ++k) {
        const Vector xp = x.x + fd_step * b.col(k);
        const Vector xm = x.x - fd_step * b.col(k);
        if ((xp.array() <= 0.0).any() || (xm.array() <= 0.0).any())
            throw NumericError(
                "payoff jacobian: finite-difference step underflows near the simplex boundary");
        const SpatialDistribution sp{xp}, sm{xm};
        const WageSolution wp = solve_wages(config, sp, base.w, wopts);
        const WageSolution wm = solve_wages(config, sm, base.w, wopts);
        const Vector vp = market_state(config, sp, wp.w).v;
        const Vector vm = market_state(config, sm, wm.w).v;
        out += ((vp - vm) / (2.0 * fd_step)) * b.col(k).transpose();
    }
    return out;
}

namespace {

EigenReport uniform_stability_impl(const ModelConfig& config, bool force_general) {
    const int n = config.n;
    const SpatialDistribution xbar = SpatialDistribution::uniform(n);
    const Matrix dbar = row_normalize(config.proximity.phi);
    const Matrix gbar = row_normalize(config.externality.psi);

    WageSolveOptions wopts;
    wopts.tol = 1e-13;
    wopts.max_iter = 100000;
    const WageSolution ws = solve_wages(config, xbar, wopts);
    const Vector v = market_state(config, xbar, ws.w).v;

    EigenReport rep;
    rep.v_bar = v.mean();

    std::optional<SharedBasis> shared =
        force_general ? std::nullopt : shared_structure_basis(dbar, gbar);
    if (shared) {
        rep.closed_form = true;
        for (size_t k = 0; k < shared->patterns.size(); ++k) {
            rep.pattern.push_back(shared->patterns[k]);
            rep.chi.push_back(shared->chi[k]);
            rep.lambda.push_back(shared->lambda[k]);
            rep.omega.push_back(
                gain_function(shared->chi[k], shared->lambda[k], config.sigma).omega);
        }
    } else {
        rep.closed_form = false;
        const Matrix vx = payoff_jacobian_at(config, xbar, ws);
        const Matrix vmat = (1.0 / n) / rep.v_bar * vx;
        const Matrix b = tangent_basis(n);
        Matrix proj = b.transpose() * vmat * b;
        const double asym = (proj - proj.transpose()).cwiseAbs().maxCoeff();
        std::vector<EigenPair> pairs;
        if (asym <= 1e-9) {
            proj = 0.5 * (proj + proj.transpose());
            Eigen::SelfAdjointEigenSolver<Matrix> es(proj);
            for (int k = 0; k < n - 1; ++k) {
                Vector z = b * es.eigenvectors().col(k);
                z.normalize();
                fix_sign(z);
                pairs.push_back({es.eigenvalues()(k), std::move(z)});
            }
        } else {
            // Non-symmetric payoff elasticity (non-commuting structures):
            // report real parts of the tangent spectrum.
            Eigen::EigenSolver<Matrix> es(proj);
            for (int k = 0; k < n - 1; ++k) {
                Vector z = b * es.eigenvectors().col(k).real();
                const double nz = z.norm();
                if (nz > 1e-12) z /= nz;
                fix_sign(z);
                pairs.push_back({es.eigenvalues()(k).real(), std::move(z)});
            }
        }
        // Pair chi/lambda by maximal |inner product| against the separate
        // spectra of Dbar and Gbar; unmatched modes get NaN.
        auto dpairs = dense_symmetric_tangent_spectrum(0.5 * (dbar + dbar.transpose()));
        auto gpairs = dense_symmetric_tangent_spectrum(0.5 * (gbar + gbar.transpose()));
        for (auto& p : pairs) {
            rep.omega.push_back(p.value);
            rep.pattern.push_back(p.pattern);
            auto match = [&](const std::vector<EigenPair>& ref) {
                double best = 0.0, val = std::numeric_limits<double>::quiet_NaN();
                for (const auto& r : ref) {
                    const double c = std::fabs(r.pattern.dot(p.pattern));
                    if (c > best) {
                        best = c;
                        val = r.value;
                    }
                }
                return best >= 0.99 ? val : std::numeric_limits<double>::quiet_NaN();
            };
            rep.chi.push_back(match(dpairs));
            rep.lambda.push_back(match(gpairs));
        }
    }

    rep.omega_star = *std::max_element(rep.omega.begin(), rep.omega.end());
    const double tie_tol = 1e-12 * std::max(1.0, std::fabs(rep.omega_star));
    Vector combined = Vector::Zero(n);
    for (size_t k = 0; k < rep.omega.size(); ++k) {
        if (rep.omega[k] >= rep.omega_star - tie_tol) {
            rep.critical_modes.push_back(static_cast<int>(k));
            Vector z = rep.pattern[k];
            fix_sign(z);
            combined += z;
        }
    }
    combined.normalize();
    fix_sign(combined);
    rep.critical_pattern = combined;
    return rep;
}

double mode_omega(const Family& family, FreeParam free, double p, int mode) {
    const EigenReport rep = uniform_stability_impl(family.config_with(free, p), false);
    return rep.omega.at(mode);
}

double star_omega(const Family& family, FreeParam free, double p) {
    return uniform_stability_impl(family.config_with(free, p), false).omega_star;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double flo,
              double tol) {
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

EigenReport uniform_stability(const ModelConfig& config) {
    return uniform_stability_impl(config, false);
}

ThresholdResult critical_threshold(const Family& family, FreeParam free,
                                   const ThresholdOptions& opts) {
    ThresholdResult result;

    if (opts.use_closed_form && family.kind == FamilyKind::TwoRegion &&
        free == FreeParam::Phi) {
        const double phi_star =
            (2.0 * family.sigma - 1.0) * (1.0 - family.psi) / (3.0 + family.psi);
        Vector z(2);
        z << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
        if (phi_star > 0.0 && phi_star < 1.0) {
            result.param_star = phi_star;
            result.omega_star_crossings.push_back(phi_star);
            result.mode_crossings.push_back({phi_star, 0, z});
            result.outcome = ThresholdOutcome::Found;
        } else if (phi_star <= 0.0) {
            result.outcome = ThresholdOutcome::StableEverywhere;
        } else {
            // phi* >= 1: the uniform state is unstable on all of (0,1).
            result.outcome = ThresholdOutcome::BlackHole;
        }
        return result;
    }

    const int np = std::max(opts.scan_points, 8);
    std::vector<double> params(np);
    for (int i = 0; i < np; ++i)
        params[i] = opts.lo + (opts.hi - opts.lo) * i / (np - 1.0);

    std::vector<EigenReport> reports(np);
    for (int i = 0; i < np; ++i)
        reports[i] = uniform_stability_impl(family.config_with(free, params[i]), false);

    const size_t n_modes = reports[0].omega.size();
    for (size_t k = 0; k < n_modes; ++k) {
        for (int i = 0; i + 1 < np; ++i) {
            const double f0 = reports[i].omega[k], f1 = reports[i + 1].omega[k];
            if (f0 == 0.0 || (f0 > 0.0) != (f1 > 0.0)) {
                const int mode = static_cast<int>(k);
                const double root = bisect(
                    [&](double p) { return mode_omega(family, free, p, mode); }, params[i],
                    params[i + 1], f0, opts.tol);
                result.mode_crossings.push_back({root, mode, reports[i].pattern[k]});
            }
        }
    }
    for (int i = 0; i + 1 < np; ++i) {
        const double f0 = reports[i].omega_star, f1 = reports[i + 1].omega_star;
        if (f0 == 0.0 || (f0 > 0.0) != (f1 > 0.0)) {
            const double root =
                bisect([&](double p) { return star_omega(family, free, p); }, params[i],
                       params[i + 1], f0, opts.tol);
            result.omega_star_crossings.push_back(root);
        }
    }

    if (!result.omega_star_crossings.empty()) {
        result.param_star = result.omega_star_crossings.back();
        result.outcome = ThresholdOutcome::Found;
    } else {
        const bool all_unstable = reports[0].omega_star > 0.0;
        result.outcome =
            all_unstable ? ThresholdOutcome::BlackHole : ThresholdOutcome::StableEverywhere;
    }
    return result;
}

namespace {

struct GridCell {
    double omega_star;
    bool stable;
    int pattern;
};

GridCell grid_cell(const Family& family, double phi, double psi, GridEval eval) {
    GridCell cell{std::numeric_limits<double>::quiet_NaN(), false, -1};
    try {
        const ModelConfig cfg = family.config_at(phi, psi);
        const EigenReport rep = uniform_stability_impl(cfg, eval == GridEval::Dense);
        cell.omega_star = rep.omega_star;
        cell.stable = rep.omega_star < 0.0;
        cell.pattern = rep.critical_modes.front();
    } catch (const ConfigError&) {
        // cell outside the family's admissible region
    } catch (const NumericError&) {
    }
    return cell;
}

StabilityGrid grid_compute(const Family& family, const GridSpec& spec, bool parallel) {
    if (!(spec.phi_lo > 0.0 && spec.phi_hi < 1.0 && spec.psi_lo > 0.0 && spec.psi_hi < 1.0))
        throw ConfigError("grid ranges must lie inside (0, 1)");
    if (spec.n_phi < 1 || spec.n_psi < 1) throw ConfigError("grid needs at least one cell");

    StabilityGrid g;
    g.phi_values.resize(spec.n_phi);
    g.psi_values.resize(spec.n_psi);
    for (int i = 0; i < spec.n_phi; ++i)
        g.phi_values[i] = spec.n_phi == 1
                              ? spec.phi_lo
                              : spec.phi_lo + (spec.phi_hi - spec.phi_lo) * i / (spec.n_phi - 1.0);
    for (int j = 0; j < spec.n_psi; ++j)
        g.psi_values[j] = spec.n_psi == 1
                              ? spec.psi_lo
                              : spec.psi_lo + (spec.psi_hi - spec.psi_lo) * j / (spec.n_psi - 1.0);

    g.omega_star.resize(spec.n_phi, spec.n_psi);
    g.stable.resize(spec.n_phi, spec.n_psi);
    g.pattern.resize(spec.n_phi, spec.n_psi);

    if (parallel) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int i = 0; i < spec.n_phi; ++i)
            for (int j = 0; j < spec.n_psi; ++j) {
                const GridCell c = grid_cell(family, g.phi_values[i], g.psi_values[j], spec.eval);
                g.omega_star(i, j) = c.omega_star;
                g.stable(i, j) = c.stable;
                g.pattern(i, j) = c.pattern;
            }
    } else {
        for (int i = 0; i < spec.n_phi; ++i)
            for (int j = 0; j < spec.n_psi; ++j) {
                const GridCell c = grid_cell(family, g.phi_values[i], g.psi_values[j], spec.eval);
                g.omega_star(i, j) = c.omega_star;
                g.stable(i, j) = c.stable;
                g.pattern(i, j) = c.pattern;
            }
    }
    return g;
}

}  // namespace

StabilityGrid stability_grid(const Family& family, const GridSpec& spec) {
    return grid_compute(family, spec, true);
}

StabilityGrid stability_grid_serial(const Family& family, const GridSpec& spec) {
    return grid_compute(family, spec, false);
}

}  // namespace spateq
