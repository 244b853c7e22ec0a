#pragma once

#include "spateq/types.hpp"

namespace spateq {

enum class GeographyKind { TwoRegion, Racetrack4, Custom };
enum class ExternalityKind { TwoRegion, Baseline4, Equidistant4, Block4, Bypass4, Custom };

/// Named trade geographies. TwoRegion: [[1,phi],[phi,1]]; Racetrack4:
/// circulant with neighbors phi and antipodes phi^2.
ProximityMatrix build_geography(GeographyKind kind, double phi);
ProximityMatrix build_geography(const Matrix& custom);

/// Named externality networks over the four-region circle. Baseline4
/// decays with hop count (psi, psi^2); Equidistant4 has psi everywhere;
/// Block4 couples super-regions {1,2} and {3,4} at psi' <= psi; Bypass4
/// ties antipodes at psi' (requires psi' > 2 psi - 1).
ExternalityMatrix build_externality(ExternalityKind kind, double psi,
                                    double psi_prime = -1.0);
ExternalityMatrix build_externality(const Matrix& custom);

/// a = Psi x.
Vector productivity(const ExternalityMatrix& externality, const SpatialDistribution& x);

/// Prices, trade shares, and payoffs at given wages. Powers are
/// accumulated in log space; nonfinite output raises NumericError naming
/// the offending region.
MarketState market_state(const ModelConfig& config, const SpatialDistribution& x,
                         const Vector& w);

/// Value shipped i -> j: Q_ij = m_ij w_j x_j. At market-clearing wages the
/// row sums equal w_i x_i.
Matrix trade_flows(const MarketState& state, const SpatialDistribution& x);

}  // namespace spateq
