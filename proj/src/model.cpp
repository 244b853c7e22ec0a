#include "spateq/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace spateq {

namespace {

constexpr double kCpdMargin = 1e-10;
constexpr double kSimplexTol = 1e-12;

void check_proximity_entries(const Matrix& phi) {
    if (phi.rows() != phi.cols() || phi.rows() < 2)
        throw ConfigError("proximity matrix must be square with n >= 2");
    const int n = static_cast<int>(phi.rows());
    for (int i = 0; i < n; ++i) {
        if (phi(i, i) != 1.0)
            throw ConfigError("proximity invariant violated: phi_ii = 1");
        for (int j = 0; j < n; ++j) {
            const double p = phi(i, j);
            if (!(p > 0.0 && p <= 1.0) || !std::isfinite(p))
                throw ConfigError("proximity invariant violated: 0 < phi_ij <= 1");
        }
    }
}

void check_externality_entries(const Matrix& psi) {
    if (psi.rows() != psi.cols() || psi.rows() < 2)
        throw ConfigError("externality matrix must be square with n >= 2");
    const int n = static_cast<int>(psi.rows());
    for (int i = 0; i < n; ++i) {
        if (psi(i, i) != 1.0)
            throw ConfigError("externality invariant violated: psi_ii = 1");
        for (int j = 0; j < n; ++j) {
            const double p = psi(i, j);
            if (!(p > 0.0 && p <= 1.0) || !std::isfinite(p))
                throw ConfigError("externality invariant violated: 0 < psi_ij <= 1");
        }
    }
}

}  // namespace

Matrix tangent_basis(int n) {
    Matrix b = Matrix::Zero(n, n - 1);
    for (int k = 0; k < n - 1; ++k) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(k + 1) * (k + 2));
        for (int i = 0; i <= k; ++i) b(i, k) = scale;
        b(k + 1, k) = -static_cast<double>(k + 1) * scale;
    }
    return b;
}

double min_tangent_eigenvalue_symmetric_part(const Matrix& m) {
    const Matrix s = 0.5 * (m + m.transpose());
    const Matrix b = tangent_basis(static_cast<int>(m.rows()));
    Eigen::SelfAdjointEigenSolver<Matrix> es(b.transpose() * s * b);
    return es.eigenvalues().minCoeff();
}

ProximityMatrix ProximityMatrix::checked(Matrix phi) {
    check_proximity_entries(phi);
    return ProximityMatrix{std::move(phi)};
}

ExternalityMatrix ExternalityMatrix::checked(Matrix psi) {
    check_externality_entries(psi);
    if (min_tangent_eigenvalue_symmetric_part(psi) <= kCpdMargin)
        throw ConfigError(
            "externality invariant violated: z'Psi z > 0 on the zero-sum subspace "
            "(conditional positive definiteness)");
    return ExternalityMatrix{std::move(psi)};
}

ModelConfig ModelConfig::checked(double sigma, ProximityMatrix proximity,
                                 ExternalityMatrix externality) {
    if (!(sigma > 1.0))
        throw ConfigError("model invariant violated: sigma > 1");
    if (proximity.size() != externality.size())
        throw ConfigError("model invariant violated: proximity and externality are both n x n");
    ModelConfig c;
    c.n = proximity.size();
    c.sigma = sigma;
    c.proximity = std::move(proximity);
    c.externality = std::move(externality);
    return c;
}

SpatialDistribution SpatialDistribution::checked(Vector x) {
    if (x.size() < 2) throw ConfigError("spatial distribution needs n >= 2");
    if ((x.array() < 0.0).any())
        throw ConfigError("spatial distribution invariant violated: x_i >= 0");
    if (std::fabs(x.sum() - 1.0) > kSimplexTol)
        throw ConfigError("spatial distribution invariant violated: sum x_i = 1");
    return SpatialDistribution{std::move(x)};
}

SpatialDistribution SpatialDistribution::uniform(int n) {
    return SpatialDistribution{Vector::Constant(n, 1.0 / n)};
}

ProximityMatrix build_geography(GeographyKind kind, double phi) {
    if (!(phi > 0.0 && phi <= 1.0))
        throw ConfigError("geography invariant violated: scalar phi in (0, 1]");
    switch (kind) {
        case GeographyKind::TwoRegion: {
            Matrix d(2, 2);
            d << 1.0, phi, phi, 1.0;
            return ProximityMatrix::checked(std::move(d));
        }
        case GeographyKind::Racetrack4: {
            Matrix d(4, 4);
            const double p2 = phi * phi;
            d << 1.0, phi, p2, phi,
                 phi, 1.0, phi, p2,
                 p2, phi, 1.0, phi,
                 phi, p2, phi, 1.0;
            return ProximityMatrix::checked(std::move(d));
        }
        case GeographyKind::Custom:
            throw ConfigError("custom geography takes an explicit matrix");
    }
    throw ConfigError("unknown geography kind");
}

ProximityMatrix build_geography(const Matrix& custom) {
    return ProximityMatrix::checked(custom);
}

ExternalityMatrix build_externality(ExternalityKind kind, double psi, double psi_prime) {
    if (!(psi > 0.0 && psi <= 1.0))
        throw ConfigError("externality invariant violated: scalar psi in (0, 1]");
    auto circ4 = [](double nb, double anti) {
        Matrix g(4, 4);
        g << 1.0, nb, anti, nb,
             nb, 1.0, nb, anti,
             anti, nb, 1.0, nb,
             nb, anti, nb, 1.0;
        return g;
    };
    switch (kind) {
        case ExternalityKind::TwoRegion: {
            Matrix g(2, 2);
            g << 1.0, psi, psi, 1.0;
            return ExternalityMatrix::checked(std::move(g));
        }
        case ExternalityKind::Baseline4:
            return ExternalityMatrix::checked(circ4(psi, psi * psi));
        case ExternalityKind::Equidistant4:
            return ExternalityMatrix::checked(circ4(psi, psi));
        case ExternalityKind::Block4: {
            if (!(psi_prime > 0.0 && psi_prime <= psi))
                throw ConfigError("block externality requires 0 < psi' <= psi");
            // [[1,psi'],[psi',1]] (x) [[1,psi],[psi,1]] in circle ordering:
            // neighbors along the circle couple at psi within a super-region
            // and psi' across, antipodes at psi' psi.
            Matrix g(4, 4);
            const double pp = psi_prime * psi;
            g << 1.0, psi, pp, psi_prime,
                 psi, 1.0, psi_prime, pp,
                 pp, psi_prime, 1.0, psi,
                 psi_prime, pp, psi, 1.0;
            return ExternalityMatrix::checked(std::move(g));
        }
        case ExternalityKind::Bypass4: {
            if (!(psi_prime > 0.0 && psi_prime <= 1.0))
                throw ConfigError("bypass externality requires psi' in (0, 1]");
            if (!(psi_prime > 2.0 * psi - 1.0))
                throw ConfigError(
                    "bypass externality violates conditional positive definiteness: "
                    "requires psi' > 2 psi - 1");
            return ExternalityMatrix::checked(circ4(psi, psi_prime));
        }
        case ExternalityKind::Custom:
            throw ConfigError("custom externality takes an explicit matrix");
    }
    throw ConfigError("unknown externality kind");
}

ExternalityMatrix build_externality(const Matrix& custom) {
    return ExternalityMatrix::checked(custom);
}

Vector productivity(const ExternalityMatrix& externality, const SpatialDistribution& x) {
    return externality.psi * x.x;
}

MarketState market_state(const ModelConfig& config, const SpatialDistribution& x,
                         const Vector& w) {
    const int n = config.n;
    if (w.size() != n) throw ConfigError("wage vector has wrong length");
    if ((w.array() <= 0.0).any()) throw ConfigError("wages must be positive");

    MarketState s;
    s.a = config.externality.psi * x.x;
    s.w = w;

    // log k_i = (sigma - 1)(log a_i - log w_i); all sums via logsumexp so
    // large sigma cannot overflow.
    Vector logk(n);
    for (int i = 0; i < n; ++i)
        logk(i) = (config.sigma - 1.0) * (std::log(s.a(i)) - std::log(w(i)));

    Matrix logphi = config.proximity.phi.array().log().matrix();

    s.m.resize(n, n);
    s.P.resize(n);
    s.v.resize(n);
    for (int j = 0; j < n; ++j) {
        double hi = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) hi = std::max(hi, logk(i) + logphi(i, j));
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += std::exp(logk(i) + logphi(i, j) - hi);
        const double logS = hi + std::log(acc);
        for (int i = 0; i < n; ++i) s.m(i, j) = std::exp(logk(i) + logphi(i, j) - logS);
        s.P(j) = std::exp(logS / (1.0 - config.sigma));
        s.v(j) = std::exp(std::log(w(j)) - logS / (1.0 - config.sigma));
        if (!std::isfinite(s.P(j)) || !std::isfinite(s.v(j)))
            throw NumericError("market state overflow in region " + std::to_string(j + 1));
    }
    return s;
}

Matrix trade_flows(const MarketState& state, const SpatialDistribution& x) {
    const int n = static_cast<int>(x.size());
    Matrix q(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) q(i, j) = state.m(i, j) * state.w(j) * x.x(j);
    return q;
}

}  // namespace spateq
