#pragma once

#include <optional>

#include "spateq/model.hpp"

namespace spateq {

enum class FamilyKind { TwoRegion, Baseline4, Equidistant4, Block4, Bypass4 };
enum class FreeParam { Phi, Psi };

/// A named one- or two-parameter economy: geography and externality built
/// from scalars (phi, psi) at fixed sigma. For the block and bypass
/// networks the cross coupling psi' is either pinned explicitly or follows
/// the figure conventions psi' = psi^2 (block) and psi' = sqrt(psi) (bypass).
/// The two-region family optionally tilts one direction of a matrix,
/// phi_12 = phi^phi_exp or psi_21 = psi^psi_exp, giving region 1 a
/// comparative advantage (the unfolded pitchfork experiments).
struct Family {
    FamilyKind kind = FamilyKind::TwoRegion;
    double sigma = 4.0;
    double phi = 0.5;
    double psi = 0.5;
    std::optional<double> psi_prime;
    double phi_exp = 1.0;
    double psi_exp = 1.0;

    int regions() const { return kind == FamilyKind::TwoRegion ? 2 : 4; }
    bool symmetric() const { return phi_exp == 1.0 && psi_exp == 1.0; }
    double resolved_psi_prime(double psi_value) const;
    ModelConfig config() const { return config_at(phi, psi); }
    ModelConfig config_at(double phi_value, double psi_value) const;
    ModelConfig config_with(FreeParam which, double value) const;
};

FamilyKind family_kind_from_name(const std::string& name);
std::string family_name(FamilyKind kind);

}  // namespace spateq
