#include "spateq/families.hpp"

#include <cmath>

namespace spateq {

double Family::resolved_psi_prime(double psi_value) const {
    if (psi_prime) return *psi_prime;
    switch (kind) {
        case FamilyKind::Block4: return psi_value * psi_value;
        case FamilyKind::Bypass4: return std::sqrt(psi_value);
        default: return psi_value;
    }
}

ModelConfig Family::config_at(double phi_value, double psi_value) const {
    if ((phi_exp != 1.0 || psi_exp != 1.0) && kind != FamilyKind::TwoRegion)
        throw ConfigError("asymmetry exponents apply to the two-region family only");
    switch (kind) {
        case FamilyKind::TwoRegion: {
            if (phi_exp == 1.0 && psi_exp == 1.0)
                return ModelConfig::checked(
                    sigma, build_geography(GeographyKind::TwoRegion, phi_value),
                    build_externality(ExternalityKind::TwoRegion, psi_value));
            Matrix d(2, 2), g(2, 2);
            d << 1.0, std::pow(phi_value, phi_exp), phi_value, 1.0;
            g << 1.0, psi_value, std::pow(psi_value, psi_exp), 1.0;
            return ModelConfig::checked(sigma, build_geography(d), build_externality(g));
        }
        case FamilyKind::Baseline4:
            return ModelConfig::checked(
                sigma, build_geography(GeographyKind::Racetrack4, phi_value),
                build_externality(ExternalityKind::Baseline4, psi_value));
        case FamilyKind::Equidistant4:
            return ModelConfig::checked(
                sigma, build_geography(GeographyKind::Racetrack4, phi_value),
                build_externality(ExternalityKind::Equidistant4, psi_value));
        case FamilyKind::Block4:
            return ModelConfig::checked(
                sigma, build_geography(GeographyKind::Racetrack4, phi_value),
                build_externality(ExternalityKind::Block4, psi_value,
                                  resolved_psi_prime(psi_value)));
        case FamilyKind::Bypass4:
            return ModelConfig::checked(
                sigma, build_geography(GeographyKind::Racetrack4, phi_value),
                build_externality(ExternalityKind::Bypass4, psi_value,
                                  resolved_psi_prime(psi_value)));
    }
    throw ConfigError("unknown family kind");
}

ModelConfig Family::config_with(FreeParam which, double value) const {
    return which == FreeParam::Phi ? config_at(value, psi) : config_at(phi, value);
}

FamilyKind family_kind_from_name(const std::string& name) {
    if (name == "two-region") return FamilyKind::TwoRegion;
    if (name == "baseline4") return FamilyKind::Baseline4;
    if (name == "equidistant4") return FamilyKind::Equidistant4;
    if (name == "block4") return FamilyKind::Block4;
    if (name == "bypass4") return FamilyKind::Bypass4;
    throw ConfigError("unknown model family: " + name);
}

std::string family_name(FamilyKind kind) {
    switch (kind) {
        case FamilyKind::TwoRegion: return "two-region";
        case FamilyKind::Baseline4: return "baseline4";
        case FamilyKind::Equidistant4: return "equidistant4";
        case FamilyKind::Block4: return "block4";
        case FamilyKind::Bypass4: return "bypass4";
    }
    return "unknown";
}

}  // namespace spateq
