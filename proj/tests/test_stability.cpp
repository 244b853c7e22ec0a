#include "doctest.h"

#include <random>

#include "oracles.hpp"
#include "spateq/stability.hpp"

using namespace spateq;

namespace {

Family two_region(double phi, double psi, double sigma = 4.0) {
    Family f;
    f.kind = FamilyKind::TwoRegion;
    f.sigma = sigma;
    f.phi = phi;
    f.psi = psi;
    return f;
}

Family four_region(FamilyKind kind, double phi, double psi, double sigma = 4.0,
                   std::optional<double> psi_prime = std::nullopt) {
    Family f;
    f.kind = kind;
    f.sigma = sigma;
    f.phi = phi;
    f.psi = psi;
    f.psi_prime = psi_prime;
    return f;
}

}  // namespace

TEST_CASE("gain function values") {
    const GainValue g = gain_function(1.0 / 3.0, 1.0 / 9.0, 4.0);
    CHECK(g.omega == doctest::Approx(-1.0 / 27.0).epsilon(1e-14));
    CHECK(g.flat == doctest::Approx(5.0).epsilon(1e-14));

    // with no spillover sensitivity the uniform state is always stable
    for (double s : {0.0, 0.3, 0.7, 0.95})
        for (double sigma : {1.5, 2.0, 4.0, 8.0}) {
            const GainValue g0 = gain_function(s, 0.0, sigma);
            CHECK(g0.omega < 0.0);
            CHECK(g0.omega ==
                  doctest::Approx(-(1.0 - s) / (sigma + (sigma - 1.0) * s)).epsilon(1e-14));
        }

    // zero locus of the numerator
    for (double s : {0.1, 0.5, 0.9}) {
        const double sigma = 4.0;
        const double t = (1.0 - s) / ((sigma - 1.0) + sigma * s);
        CHECK(gain_function(s, t, sigma).omega == doctest::Approx(0.0).epsilon(1e-14));
    }
}

TEST_CASE("gain function is increasing in the spillover sensitivity") {
    for (int a = 0; a < 50; ++a)
        for (int b = 0; b + 1 < 50; ++b)
            for (double sigma : {1.5, 2.0, 4.0, 6.0, 8.0}) {
                const double s = a / 49.0;
                const double t0 = b / 49.0, t1 = (b + 1) / 49.0;
                CHECK(gain_function(s, t1, sigma).omega > gain_function(s, t0, sigma).omega);
            }
}

TEST_CASE("two-region force decomposition") {
    const ForceDecomposition d = decompose_net_force(0.5, 0.8, 4.0);
    CHECK(d.chi == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(d.lambda == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(d.omega_a == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(d.omega_w == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(d.alpha_x == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(d.beta_x == doctest::Approx(-1.0 / 9.0).epsilon(1e-14));
    CHECK(d.omega == doctest::Approx(-1.0 / 27.0).epsilon(1e-14));

    // internal identities
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    for (int rep = 0; rep < 50; ++rep) {
        const double phi = unif(rng), psi = unif(rng), sigma = 1.5 + 5.0 * unif(rng);
        const ForceDecomposition r = decompose_net_force(phi, psi, sigma);
        CHECK(r.omega_a + r.omega_w == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(r.omega ==
              doctest::Approx(r.omega_a * r.alpha_x + r.omega_w * r.beta_x).epsilon(1e-13));
        CHECK(r.omega ==
              doctest::Approx(gain_function(r.chi, r.lambda, sigma).omega).epsilon(1e-14));
    }

    // spillovers that do not decay kill the agglomeration channel
    const ForceDecomposition hi = decompose_net_force(0.5, 1.0 - 1e-12, 4.0);
    CHECK(hi.alpha_x == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(hi.omega < 0.0);
}

TEST_CASE("racetrack spectrum via the Fourier basis") {
    const ProximityMatrix d = build_geography(GeographyKind::Racetrack4, 0.5);
    bool hint_ok = false;
    const auto pairs = proximity_spectrum(d.phi, SpectrumHint::Circulant, &hint_ok);
    CHECK(hint_ok);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].value == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(pairs[1].value == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(pairs[2].value == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    Vector z1(4), z2(4), z3(4);
    z1 << 1, 0, -1, 0;
    z2 << 1, -1, 1, -1;
    z3 << 0, 1, 0, -1;
    CHECK((pairs[0].pattern - z1 / z1.norm()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((pairs[1].pattern - z2 / z2.norm()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((pairs[2].pattern - z3 / z3.norm()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bypass spectrum") {
    const ExternalityMatrix g = build_externality(ExternalityKind::Bypass4, 0.4225, 0.65);
    const auto pairs = proximity_spectrum(g.psi, SpectrumHint::Circulant);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].value == doctest::Approx(0.35 / 2.495).epsilon(1e-12));
    CHECK(pairs[1].value == doctest::Approx(0.805 / 2.495).epsilon(1e-12));
    CHECK(pairs[0].value == doctest::Approx(0.140281).epsilon(1e-5));
    CHECK(pairs[1].value == doctest::Approx(0.322645).epsilon(1e-5));
}

TEST_CASE("baseline spectrum: hop-decay network has the two-region sensitivity") {
    // row sum (1 + psi)^2 against eigenvalue 1 - psi^2 simplifies to the
    // two-region ratio (1 - psi)/(1 + psi) for the (1,0,-1,0) pattern
    for (double psi : {0.2, 0.5, 0.7, 0.9}) {
        const ExternalityMatrix g = build_externality(ExternalityKind::Baseline4, psi);
        const auto pairs = proximity_spectrum(g.psi, SpectrumHint::Circulant);
        REQUIRE(pairs.size() == 3);
        CHECK(pairs[0].value == doctest::Approx((1.0 - psi) / (1.0 + psi)).epsilon(1e-13));
    }
}

TEST_CASE("block spectrum: the North--South sensitivity ignores psi") {
    for (double psi : {0.3, 0.5, 0.9}) {
        const double psip = 0.25;
        const ExternalityMatrix g = build_externality(ExternalityKind::Block4, psi, psip);
        const auto pairs = proximity_spectrum(g.psi, SpectrumHint::Bccb);
        REQUIRE(pairs.size() == 3);
        Vector ns(4);
        ns << 1, 1, -1, -1;
        int idx = -1;
        for (int k = 0; k < 3; ++k)
            if (std::fabs(std::fabs(pairs[k].pattern.dot(ns / 2.0)) - 1.0) < 1e-12) idx = k;
        REQUIRE(idx >= 0);
        CHECK(pairs[idx].value ==
              doctest::Approx((1.0 - psip) / (1.0 + psip)).epsilon(1e-12));
    }
}

TEST_CASE("closed-form spectra match the dense eigensolver") {
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int rep = 0; rep < 20; ++rep) {
        const double phi = unif(rng), psi = unif(rng);
        const double psip_block = psi * unif(rng);
        const double lo = std::max(2.0 * psi - 1.0 + 1e-3, 1e-3);
        const double psip_byp = lo + (1.0 - lo) * unif(rng);

        std::vector<Matrix> mats = {
            build_geography(GeographyKind::Racetrack4, phi).phi,
            build_externality(ExternalityKind::Baseline4, psi).psi,
            build_externality(ExternalityKind::Equidistant4, psi).psi,
            build_externality(ExternalityKind::Bypass4, psi, psip_byp).psi,
            build_externality(ExternalityKind::Block4, psi, psip_block).psi,
        };
        std::vector<SpectrumHint> hints = {SpectrumHint::Circulant, SpectrumHint::Circulant,
                                           SpectrumHint::Circulant, SpectrumHint::Circulant,
                                           SpectrumHint::Bccb};
        for (size_t m = 0; m < mats.size(); ++m) {
            bool ok = false;
            const auto closed = proximity_spectrum(mats[m], hints[m], &ok);
            CHECK(ok);
            const auto dense = proximity_spectrum(mats[m], SpectrumHint::GeneralSymmetric);
            std::vector<double> a, b;
            for (const auto& p : closed) a.push_back(p.value);
            for (const auto& p : dense) b.push_back(p.value);
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            for (size_t k = 0; k < a.size(); ++k)
                CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
        }
    }
}

TEST_CASE("hint mismatch falls back to the dense path") {
    // symmetric with equal row sums but not circulant
    const double a = 0.5, b = 0.3, c = 0.45;
    Matrix m(4, 4);
    m << 1, a, b, c,
         a, 1, c, b,
         b, c, 1, a,
         c, b, a, 1;
    bool hint_ok = true;
    const auto pairs = proximity_spectrum(m, SpectrumHint::Circulant, &hint_ok);
    CHECK_FALSE(hint_ok);
    CHECK(pairs.size() == 3);
}

TEST_CASE("payoff jacobian: uniform two-region eigenvalue") {
    const ModelConfig cfg = two_region(0.5, 0.8).config();
    const SpatialDistribution xbar = SpatialDistribution::uniform(2);
    const Matrix vx = payoff_jacobian(cfg, xbar, JacobianMethod::Analytic);
    Vector z(2);
    z << 1, -1;
    const double vbar = 1.8 * std::pow(1.5, 1.0 / 3.0) * 0.5;
    const Vector vxz = vx * z;
    const double omega = 0.5 / vbar * vxz(0);
    CHECK(omega == doctest::Approx(-1.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("payoff jacobian: four-region baseline mode eigenvalue") {
    const ModelConfig cfg = four_region(FamilyKind::Baseline4, 0.5, 0.7).config();
    const SpatialDistribution xbar = SpatialDistribution::uniform(4);
    Vector z(4);
    z << 1, 0, -1, 0;
    z.normalize();
    const EigenReport rep = uniform_stability(cfg);
    const Matrix vx = payoff_jacobian(cfg, xbar, JacobianMethod::Analytic);
    const double omega = z.dot((0.25 / rep.v_bar) * (vx * z));
    // Omega(1/3, 3/17; 4) = 1/51: phi = 0.5 sits below the break point
    // phi1* = 21/37, so the mono-centric mode is unstable there
    CHECK(omega == doctest::Approx(1.0 / 51.0).epsilon(1e-12));
    // finite differences agree
    const Matrix vfd = payoff_jacobian(cfg, xbar, JacobianMethod::FiniteDifference);
    const double omega_fd = z.dot((0.25 / rep.v_bar) * (vfd * z));
    CHECK(omega_fd == doctest::Approx(1.0 / 51.0).epsilon(1e-6));
}

TEST_CASE("analytic and finite-difference payoff jacobians agree") {
    std::mt19937_64 rng(41);
    const std::vector<Family> fams = {
        two_region(0.5, 0.8),
        four_region(FamilyKind::Baseline4, 0.5, 0.7),
        four_region(FamilyKind::Equidistant4, 0.4, 0.6),
        four_region(FamilyKind::Block4, 0.6, 0.8, 4.0, 0.64),
        four_region(FamilyKind::Bypass4, 0.5, 0.4225, 4.0, 0.65),
    };
    for (const Family& fam : fams) {
        const ModelConfig cfg = fam.config();
        const Matrix b = tangent_basis(cfg.n);
        for (int rep = 0; rep < 20; ++rep) {
            const Vector x = oracles::random_interior(cfg.n, rng, 0.3);
            const SpatialDistribution xs{x};
            const Matrix va = payoff_jacobian(cfg, xs, JacobianMethod::Analytic);
            const Matrix vf = payoff_jacobian(cfg, xs, JacobianMethod::FiniteDifference);
            const Matrix da = va * b;
            const Matrix df = vf * b;
            const double rel =
                (da - df).cwiseAbs().maxCoeff() / std::max(1e-12, da.cwiseAbs().maxCoeff());
            CHECK(rel < 1e-5);
        }
    }
}

TEST_CASE("finite-difference jacobian near the boundary is signaled") {
    const ModelConfig cfg = two_region(0.5, 0.8).config();
    Vector x(2);
    x << 1.0 - 1e-7, 1e-7;
    CHECK_THROWS_AS(payoff_jacobian(cfg, SpatialDistribution{x},
                                    JacobianMethod::FiniteDifference, 1e-6),
                    NumericError);
}

TEST_CASE("uniform stability: two-region benchmark") {
    const EigenReport rep = uniform_stability(two_region(0.5, 0.8).config());
    CHECK(rep.closed_form);
    REQUIRE(rep.omega.size() == 1);
    CHECK(rep.omega_star == doctest::Approx(-1.0 / 27.0).epsilon(1e-13));
    CHECK(rep.chi[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(rep.lambda[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(rep.critical_pattern(0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(rep.critical_pattern(1) == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-14));
    // closed form agrees with the dense route through the analytic jacobian
    const Matrix vx = payoff_jacobian(two_region(0.5, 0.8).config(),
                                      SpatialDistribution::uniform(2), JacobianMethod::Analytic);
    Vector z(2);
    z << 1, -1;
    z.normalize();
    CHECK(z.dot((0.5 / rep.v_bar) * (vx * z)) ==
          doctest::Approx(rep.omega_star).epsilon(1e-12));
}

TEST_CASE("uniform stability: bypass near the duo-centric threshold") {
    const EigenReport rep =
        uniform_stability(four_region(FamilyKind::Bypass4, 0.85, 0.4225, 4.0, 0.65).config());
    CHECK(rep.closed_form);
    REQUIRE(rep.omega.size() == 3);
    CHECK(rep.critical_modes == std::vector<int>{1});
    Vector duo(4);
    duo << 0.5, -0.5, 0.5, -0.5;
    CHECK((rep.critical_pattern - duo).cwiseAbs().maxCoeff() < 1e-12);
    const double chi = (1.0 - 0.85) / (1.0 + 0.85);
    CHECK(rep.chi[1] == doctest::Approx(chi * chi).epsilon(1e-12));
}

TEST_CASE("uniform stability: block prefers the North--South mode") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int rep = 0; rep < 30; ++rep) {
        const double psi = unif(rng);
        const double psip = psi * unif(rng);  // psi' < psi
        const double phi = unif(rng);
        const EigenReport r =
            uniform_stability(four_region(FamilyKind::Block4, phi, psi, 4.0, psip).config());
        REQUIRE(r.closed_form);
        Vector ns(4), duo(4), ew(4);
        ns << 1, 1, -1, -1;
        duo << 1, -1, 1, -1;
        ew << 1, -1, -1, 1;
        double sharp_ns = 0, sharp_duo = 0, sharp_ew = 0;
        for (size_t k = 0; k < r.omega.size(); ++k) {
            const double s = gain_function(r.chi[k], r.lambda[k], 4.0).sharp;
            if (std::fabs(std::fabs(r.pattern[k].dot(ns.normalized())) - 1) < 1e-9) sharp_ns = s;
            if (std::fabs(std::fabs(r.pattern[k].dot(duo.normalized())) - 1) < 1e-9) sharp_duo = s;
            if (std::fabs(std::fabs(r.pattern[k].dot(ew.normalized())) - 1) < 1e-9) sharp_ew = s;
        }
        CHECK(sharp_ns >= sharp_duo - 1e-13);
        CHECK(sharp_ns >= sharp_ew - 1e-13);
    }
}

TEST_CASE("uniform stability: baseline ties combine the degenerate patterns") {
    const EigenReport rep =
        uniform_stability(four_region(FamilyKind::Baseline4, 0.4, 0.7).config());
    REQUIRE(rep.critical_modes.size() == 2);
    CHECK(rep.omega[0] == doctest::Approx(rep.omega[2]).epsilon(1e-14));
    Vector combined(4);
    combined << 0.5, 0.5, -0.5, -0.5;  // normalized z1 + z3
    CHECK((rep.critical_pattern - combined).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("uniform-state payoff elasticity is symmetric for structured networks") {
    const std::vector<Family> fams = {
        two_region(0.4, 0.7),
        four_region(FamilyKind::Baseline4, 0.5, 0.7),
        four_region(FamilyKind::Block4, 0.6, 0.8, 4.0, 0.5),
    };
    for (const Family& fam : fams) {
        const ModelConfig cfg = fam.config();
        const SpatialDistribution xbar = SpatialDistribution::uniform(cfg.n);
        const Matrix vx = payoff_jacobian(cfg, xbar, JacobianMethod::Analytic);
        const Matrix b = tangent_basis(cfg.n);
        const Matrix proj = b.transpose() * vx * b;
        CHECK((proj - proj.transpose()).cwiseAbs().maxCoeff() <
              1e-12 * proj.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("two-region critical threshold closed form") {
    const ThresholdResult res = critical_threshold(two_region(0.5, 0.8), FreeParam::Phi);
    REQUIRE(res.param_star.has_value());
    CHECK(*res.param_star == doctest::Approx(7.0 / 19.0).epsilon(1e-14));
    CHECK(res.outcome == ThresholdOutcome::Found);

    ThresholdOptions opts;
    opts.use_closed_form = false;
    const ThresholdResult scan = critical_threshold(two_region(0.5, 0.8), FreeParam::Phi, opts);
    REQUIRE(scan.param_star.has_value());
    CHECK(*scan.param_star == doctest::Approx(7.0 / 19.0).epsilon(1e-9));
}

TEST_CASE("no-black-hole condition") {
    const ThresholdResult none = critical_threshold(two_region(0.5, 0.4), FreeParam::Phi);
    CHECK_FALSE(none.param_star.has_value());
    CHECK(none.outcome == ThresholdOutcome::BlackHole);

    const ThresholdResult some = critical_threshold(two_region(0.5, 0.55), FreeParam::Phi);
    CHECK(some.param_star.has_value());
}

TEST_CASE("four-region break points by bisection") {
    ThresholdOptions opts;
    const ThresholdResult base =
        critical_threshold(four_region(FamilyKind::Baseline4, 0.5, 0.7), FreeParam::Phi, opts);
    REQUIRE(base.param_star.has_value());
    CHECK(*base.param_star == doctest::Approx(21.0 / 37.0).epsilon(1e-9));

    const ThresholdResult blk = critical_threshold(
        four_region(FamilyKind::Block4, 0.5, 0.8, 4.0, 0.64), FreeParam::Phi, opts);
    REQUIRE(blk.param_star.has_value());
    CHECK(*blk.param_star == doctest::Approx(9.0 / 13.0).epsilon(1e-9));
    // the intra-pair mode crosses at the two-region threshold 7/19
    bool found_inner = false;
    for (const auto& c : blk.mode_crossings)
        if (std::fabs(c.param - 7.0 / 19.0) < 1e-8) found_inner = true;
    CHECK(found_inner);
}

TEST_CASE("bypass: duo-centric mode needs psi' > psi") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int rep = 0; rep < 40; ++rep) {
        const double psi = unif(rng);
        const double lo = std::max(2.0 * psi - 1.0 + 1e-3, 1e-3);
        if (lo >= psi) continue;
        const double psip = lo + (psi - lo) * unif(rng);  // psi' <= psi
        const double phi = unif(rng);
        const EigenReport r =
            uniform_stability(four_region(FamilyKind::Bypass4, phi, psi, 4.0, psip).config());
        CHECK(r.omega[1] <= r.omega[0] + 1e-13);
    }
}

TEST_CASE("stability grid: two-region cells") {
    Family fam = two_region(0.5, 0.8);
    GridSpec spec;
    spec.phi_lo = 0.2;
    spec.phi_hi = 0.5;
    spec.n_phi = 2;
    spec.psi_lo = 0.8;
    spec.psi_hi = 0.8;
    spec.n_psi = 1;
    const StabilityGrid g = stability_grid(fam, spec);
    CHECK_FALSE(g.stable(0, 0));  // (0.2, 0.8) unstable
    CHECK(g.stable(1, 0));        // (0.5, 0.8) stable
    CHECK(g.omega_star(1, 0) == doctest::Approx(-1.0 / 27.0).epsilon(1e-12));
}

TEST_CASE("equidistant network disperses earlier than the baseline") {
    for (int i = 0; i < 20; ++i) {
        const double psi = 0.05 + 0.9 * i / 19.0;
        const ThresholdResult b =
            critical_threshold(four_region(FamilyKind::Baseline4, 0.5, psi), FreeParam::Phi);
        const ThresholdResult e =
            critical_threshold(four_region(FamilyKind::Equidistant4, 0.5, psi), FreeParam::Phi);
        if (b.param_star && e.param_star) CHECK(*e.param_star <= *b.param_star + 1e-9);
        CHECK((1.0 - psi) / (1.0 + 3.0 * psi) < (1.0 - psi) / (1.0 + psi) + 1e-15);
    }
}

TEST_CASE("low-sigma grid keeps a stable high-phi band at every psi") {
    Family fam = two_region(0.5, 0.5, 1.5);
    GridSpec spec;
    spec.phi_lo = 0.05;
    spec.phi_hi = 0.95;
    spec.n_phi = 10;
    spec.psi_lo = 0.05;
    spec.psi_hi = 0.95;
    spec.n_psi = 10;
    const StabilityGrid g = stability_grid(fam, spec);
    for (int j = 0; j < spec.n_psi; ++j) {
        CHECK(g.stable(spec.n_phi - 1, j));  // phi = 0.95 stable for sigma < 2
        bool seen_stable = false;
        for (int i = 0; i < spec.n_phi; ++i) {
            if (seen_stable) CHECK(g.stable(i, j));
            seen_stable = seen_stable || g.stable(i, j);
        }
    }
}
