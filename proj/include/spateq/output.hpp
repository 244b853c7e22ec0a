#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spateq/bifurcation.hpp"

namespace spateq {

/// Fixed 17-significant-digit scientific format, '.' decimal separator.
/// All CSV numbers go through this so outputs are byte-stable.
std::string fmt17(double v);

std::string csv_grid(const StabilityGrid& grid);
std::string csv_branches(const std::vector<Branch>& branches, int n_regions);
std::string csv_wages(const SpatialDistribution& x, const WageSolution& sol,
                      const MarketState& state);
std::string csv_eigen_report(const EigenReport& report);
std::string csv_equilibria(const std::vector<EquilibriumResult>& results);
std::string csv_decompose(const std::vector<ForceDecomposition>& rows,
                          const std::vector<double>& phis, double psi, double sigma);

nlohmann::ordered_json json_wages(const SpatialDistribution& x, const WageSolution& sol,
                                  const MarketState& state);
nlohmann::ordered_json json_eigen_report(const EigenReport& report);
nlohmann::ordered_json json_threshold(const ThresholdResult& result, FreeParam free);
nlohmann::ordered_json json_equilibria(const std::vector<EquilibriumResult>& results);
nlohmann::ordered_json json_grid(const StabilityGrid& grid);
nlohmann::ordered_json json_diagram(const Diagram& diagram);

/// Stability map over (phi, psi): stable cells shaded.
std::string svg_grid_map(const StabilityGrid& grid);
/// Equilibrium branches over the parameter: every region's share drawn,
/// solid where stable, dashed where not; folds marked with diamonds.
std::string svg_branch_diagram(const std::vector<Branch>& branches,
                               const std::string& param_name);

}  // namespace spateq
