#include "spateq/output.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace spateq {

using nlohmann::ordered_json;

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.16e", v);
    return buf;
}

namespace {

const char* point_type_name(PointType t) {
    switch (t) {
        case PointType::Regular: return "regular";
        case PointType::Fold: return "fold";
        case PointType::BranchPoint: return "branch-point";
        case PointType::Endpoint: return "endpoint";
    }
    return "regular";
}

std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string csv_grid(const StabilityGrid& grid) {
    std::ostringstream out;
    out << "phi,psi,omega_star,stable,pattern\n";
    for (size_t i = 0; i < grid.phi_values.size(); ++i)
        for (size_t j = 0; j < grid.psi_values.size(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto jj = static_cast<Eigen::Index>(j);
            out << fmt17(grid.phi_values[i]) << ',' << fmt17(grid.psi_values[j]) << ','
                << fmt17(grid.omega_star(ii, jj)) << ',' << (grid.stable(ii, jj) ? 1 : 0)
                << ',' << grid.pattern(ii, jj) << '\n';
        }
    return out.str();
}

std::string csv_branches(const std::vector<Branch>& branches, int n_regions) {
    std::ostringstream out;
    out << "branch_id,param";
    for (int i = 1; i <= n_regions; ++i) out << ",x_" << i;
    out << ",omega_max,stable,point_type\n";
    for (size_t b = 0; b < branches.size(); ++b) {
        const Branch& br = branches[b];
        for (const auto& pt : br.points) {
            out << b << ',' << fmt17(pt.param);
            for (int i = 0; i < n_regions; ++i) out << ',' << fmt17(pt.x(i));
            out << ',' << fmt17(pt.omega_max) << ',' << (pt.stable ? 1 : 0) << ",regular\n";
        }
        for (const auto& sp : br.special_points) {
            // special rows carry the diagnostics of the nearest curve point
            double om = 0.0;
            bool stable = false;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& pt : br.points) {
                const double d = std::fabs(pt.param - sp.param);
                if (d < best) {
                    best = d;
                    om = pt.omega_max;
                    stable = pt.stable;
                }
            }
            out << b << ',' << fmt17(sp.param);
            for (int i = 0; i < n_regions; ++i)
                out << ',' << fmt17(static_cast<int>(sp.x.size()) == n_regions ? sp.x(i) : 0.0);
            out << ',' << fmt17(om) << ',' << (stable ? 1 : 0) << ','
                << point_type_name(sp.type) << '\n';
        }
    }
    return out.str();
}

std::string csv_wages(const SpatialDistribution& x, const WageSolution& sol,
                      const MarketState& state) {
    std::ostringstream out;
    out << "region,x,w,v,converged\n";
    for (int i = 0; i < x.size(); ++i)
        out << (i + 1) << ',' << fmt17(x.x(i)) << ',' << fmt17(sol.w(i)) << ','
            << fmt17(state.v(i)) << ',' << (sol.converged ? 1 : 0) << '\n';
    return out.str();
}

std::string csv_eigen_report(const EigenReport& report) {
    std::ostringstream out;
    const int n = report.pattern.empty() ? 0 : static_cast<int>(report.pattern[0].size());
    out << "mode,omega,chi,lambda";
    for (int i = 1; i <= n; ++i) out << ",z_" << i;
    out << '\n';
    for (size_t k = 0; k < report.omega.size(); ++k) {
        out << k << ',' << fmt17(report.omega[k]) << ',' << fmt17(report.chi[k]) << ','
            << fmt17(report.lambda[k]);
        for (int i = 0; i < n; ++i) out << ',' << fmt17(report.pattern[k](i));
        out << '\n';
    }
    return out.str();
}

std::string csv_equilibria(const std::vector<EquilibriumResult>& results) {
    std::ostringstream out;
    const int n = results.empty() ? 0 : results.front().x_star.size();
    out << "eq_id,converged,stable,v_star,payoff_spread";
    for (int i = 1; i <= n; ++i) out << ",x_" << i;
    out << '\n';
    for (size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        out << k << ',' << (r.converged ? 1 : 0) << ',' << (r.stable ? 1 : 0) << ','
            << fmt17(r.v_star) << ',' << fmt17(r.payoff_spread);
        for (int i = 0; i < n; ++i) out << ',' << fmt17(r.x_star.x(i));
        out << '\n';
    }
    return out.str();
}

std::string csv_decompose(const std::vector<ForceDecomposition>& rows,
                          const std::vector<double>& phis, double psi, double sigma) {
    std::ostringstream out;
    out << "phi,psi,sigma,chi,lambda,omega_a,omega_w,alpha_x,beta_x,omega\n";
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& d = rows[i];
        out << fmt17(phis[i]) << ',' << fmt17(psi) << ',' << fmt17(sigma) << ','
            << fmt17(d.chi) << ',' << fmt17(d.lambda) << ',' << fmt17(d.omega_a) << ','
            << fmt17(d.omega_w) << ',' << fmt17(d.alpha_x) << ',' << fmt17(d.beta_x) << ','
            << fmt17(d.omega) << '\n';
    }
    return out.str();
}

ordered_json json_wages(const SpatialDistribution& x, const WageSolution& sol,
                        const MarketState& state) {
    ordered_json doc = ordered_json::object();
    doc["x"] = std::vector<double>(x.x.data(), x.x.data() + x.size());
    doc["w"] = std::vector<double>(sol.w.data(), sol.w.data() + sol.w.size());
    doc["v"] = std::vector<double>(state.v.data(), state.v.data() + state.v.size());
    doc["residual"] = sol.residual;
    doc["iterations"] = sol.iterations;
    doc["converged"] = sol.converged;
    return doc;
}

ordered_json json_eigen_report(const EigenReport& report) {
    ordered_json doc = ordered_json::object();
    doc["omega"] = report.omega;
    doc["chi"] = report.chi;
    doc["lambda"] = report.lambda;
    doc["omega_star"] = report.omega_star;
    ordered_json pats = ordered_json::array();
    for (const auto& z : report.pattern)
        pats.push_back(std::vector<double>(z.data(), z.data() + z.size()));
    doc["patterns"] = std::move(pats);
    doc["critical_pattern"] = std::vector<double>(
        report.critical_pattern.data(),
        report.critical_pattern.data() + report.critical_pattern.size());
    doc["critical_modes"] = report.critical_modes;
    doc["closed_form"] = report.closed_form;
    doc["v_bar"] = report.v_bar;
    return doc;
}

ordered_json json_threshold(const ThresholdResult& result, FreeParam free) {
    ordered_json doc = ordered_json::object();
    const std::string star_key = free == FreeParam::Phi ? "phi_star" : "psi_star";
    if (result.param_star)
        doc[star_key] = *result.param_star;
    else
        doc[star_key] = nullptr;
    switch (result.outcome) {
        case ThresholdOutcome::Found: doc["outcome"] = "found"; break;
        case ThresholdOutcome::BlackHole: doc["outcome"] = "black-hole"; break;
        case ThresholdOutcome::StableEverywhere: doc["outcome"] = "stable-everywhere"; break;
    }
    ordered_json crossings = ordered_json::array();
    for (const auto& c : result.mode_crossings) {
        ordered_json e = ordered_json::object();
        e["param"] = c.param;
        e["mode"] = c.mode;
        e["pattern"] = std::vector<double>(c.pattern.data(), c.pattern.data() + c.pattern.size());
        crossings.push_back(std::move(e));
    }
    doc["mode_crossings"] = std::move(crossings);
    doc["omega_star_crossings"] = result.omega_star_crossings;
    return doc;
}

ordered_json json_equilibria(const std::vector<EquilibriumResult>& results) {
    ordered_json arr = ordered_json::array();
    for (const auto& r : results) {
        ordered_json e = ordered_json::object();
        e["x"] = std::vector<double>(r.x_star.x.data(), r.x_star.x.data() + r.x_star.size());
        e["v_star"] = r.v_star;
        e["payoff_spread"] = r.payoff_spread;
        e["stable"] = r.stable;
        e["converged"] = r.converged;
        e["tangent_eigenvalues"] = r.tangent_eigenvalues;
        arr.push_back(std::move(e));
    }
    return arr;
}

ordered_json json_grid(const StabilityGrid& grid) {
    ordered_json doc = ordered_json::object();
    doc["phi_values"] = grid.phi_values;
    doc["psi_values"] = grid.psi_values;
    ordered_json om = ordered_json::array(), st = ordered_json::array(),
                 pat = ordered_json::array();
    for (Eigen::Index i = 0; i < grid.omega_star.rows(); ++i) {
        ordered_json rom = ordered_json::array(), rst = ordered_json::array(),
                     rpat = ordered_json::array();
        for (Eigen::Index j = 0; j < grid.omega_star.cols(); ++j) {
            rom.push_back(grid.omega_star(i, j));
            rst.push_back(static_cast<bool>(grid.stable(i, j)));
            rpat.push_back(grid.pattern(i, j));
        }
        om.push_back(std::move(rom));
        st.push_back(std::move(rst));
        pat.push_back(std::move(rpat));
    }
    doc["omega_star"] = std::move(om);
    doc["stable"] = std::move(st);
    doc["pattern"] = std::move(pat);
    return doc;
}

ordered_json json_diagram(const Diagram& diagram) {
    ordered_json doc = ordered_json::object();
    ordered_json branches = ordered_json::array();
    for (const auto& br : diagram.branches) {
        ordered_json b = ordered_json::object();
        b["label"] = br.label;
        b["points"] = br.points.size();
        if (!br.points.empty()) {
            double lo = br.points.front().param, hi = lo;
            for (const auto& pt : br.points) {
                lo = std::min(lo, pt.param);
                hi = std::max(hi, pt.param);
            }
            b["param_min"] = lo;
            b["param_max"] = hi;
        }
        ordered_json specials = ordered_json::array();
        for (const auto& sp : br.special_points) {
            ordered_json s = ordered_json::object();
            s["type"] = point_type_name(sp.type);
            s["param"] = sp.param;
            if (sp.x.size() > 0)
                s["x"] = std::vector<double>(sp.x.data(), sp.x.data() + sp.x.size());
            if (!sp.reason.empty()) s["reason"] = sp.reason;
            specials.push_back(std::move(s));
        }
        b["special_points"] = std::move(specials);
        branches.push_back(std::move(b));
    }
    doc["branches"] = std::move(branches);
    ordered_json bps = ordered_json::array();
    for (const auto& bp : diagram.break_points) {
        ordered_json e = ordered_json::object();
        e["param"] = bp.param;
        e["mode"] = bp.mode;
        bps.push_back(std::move(e));
    }
    doc["break_points"] = std::move(bps);
    return doc;
}

namespace {

constexpr double kW = 720.0, kH = 600.0;
constexpr double kMarginL = 70.0, kMarginR = 25.0, kMarginT = 25.0, kMarginB = 55.0;

double map_x(double v, double lo, double hi) {
    return kMarginL + (v - lo) / (hi - lo) * (kW - kMarginL - kMarginR);
}
double map_y(double v, double lo, double hi) {
    return kH - kMarginB - (v - lo) / (hi - lo) * (kH - kMarginT - kMarginB);
}

void svg_header(std::ostringstream& out) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
        << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH
        << "\" fill=\"#ffffff\"/>\n";
}

void svg_axes(std::ostringstream& out, const std::string& xlabel, const std::string& ylabel,
              double xlo, double xhi, double ylo, double yhi) {
    out << "<rect x=\"" << coord(kMarginL) << "\" y=\"" << coord(kMarginT) << "\" width=\""
        << coord(kW - kMarginL - kMarginR) << "\" height=\"" << coord(kH - kMarginT - kMarginB)
        << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << coord(kW / 2) << "\" y=\"" << coord(kH - 12)
        << "\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">" << xlabel
        << "</text>\n";
    out << "<text x=\"18\" y=\"" << coord(kH / 2)
        << "\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 18 "
        << coord(kH / 2) << ")\">" << ylabel << "</text>\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", xlo);
    out << "<text x=\"" << coord(kMarginL) << "\" y=\"" << coord(kH - kMarginB + 18)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", xhi);
    out << "<text x=\"" << coord(kW - kMarginR) << "\" y=\"" << coord(kH - kMarginB + 18)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", ylo);
    out << "<text x=\"" << coord(kMarginL - 8) << "\" y=\"" << coord(kH - kMarginB + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << buf
        << "</text>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", yhi);
    out << "<text x=\"" << coord(kMarginL - 8) << "\" y=\"" << coord(kMarginT + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << buf
        << "</text>\n";
}

const char* kPalette[] = {"#1a1a1a", "#c0392b", "#2471a3", "#1e8449",
                          "#884ea0", "#b7950b", "#d35400", "#117a65"};

}  // namespace

std::string svg_grid_map(const StabilityGrid& grid) {
    if (grid.phi_values.empty() || grid.psi_values.empty()) return {};
    std::ostringstream out;
    svg_header(out);
    const double xlo = grid.phi_values.front(), xhi = grid.phi_values.back();
    const double ylo = grid.psi_values.front(), yhi = grid.psi_values.back();
    const double cw = (kW - kMarginL - kMarginR) / grid.phi_values.size();
    const double ch = (kH - kMarginT - kMarginB) / grid.psi_values.size();
    for (size_t i = 0; i < grid.phi_values.size(); ++i)
        for (size_t j = 0; j < grid.psi_values.size(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i);
            const auto jj = static_cast<Eigen::Index>(j);
            const char* fill = "#ffffff";
            if (std::isnan(grid.omega_star(ii, jj))) fill = "#f2e3e3";
            else if (grid.stable(ii, jj)) fill = "#bdbdbd";
            if (std::string(fill) == "#ffffff") continue;
            const double x = kMarginL + i * cw;
            const double y = kH - kMarginB - (j + 1) * ch;
            out << "<rect x=\"" << coord(x) << "\" y=\"" << coord(y) << "\" width=\""
                << coord(cw + 0.5) << "\" height=\"" << coord(ch + 0.5) << "\" fill=\"" << fill
                << "\"/>\n";
        }
    svg_axes(out, "phi", "psi", xlo, xhi, ylo, yhi);
    out << "</svg>\n";
    return out.str();
}

std::string svg_branch_diagram(const std::vector<Branch>& branches,
                               const std::string& param_name) {
    bool any = false;
    double plo = 1.0, phi = 0.0;
    for (const auto& br : branches)
        for (const auto& pt : br.points) {
            plo = std::min(plo, pt.param);
            phi = std::max(phi, pt.param);
            any = true;
        }
    if (!any) return {};

    std::ostringstream out;
    svg_header(out);
    for (size_t b = 0; b < branches.size(); ++b) {
        const Branch& br = branches[b];
        const char* color = kPalette[b % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const int n = br.points.empty() ? 0 : static_cast<int>(br.points.front().x.size());
        for (int comp = 0; comp < n; ++comp) {
            // split into runs of constant stability: solid stable, dashed not
            size_t i = 0;
            while (i < br.points.size()) {
                size_t j = i;
                while (j + 1 < br.points.size() &&
                       br.points[j + 1].stable == br.points[i].stable)
                    ++j;
                out << "<polyline fill=\"none\" stroke=\"" << color
                    << "\" stroke-width=\"1.5\"";
                if (!br.points[i].stable) out << " stroke-dasharray=\"6,4\"";
                out << " points=\"";
                for (size_t k = i; k <= j; ++k)
                    out << coord(map_x(br.points[k].param, plo, phi)) << ','
                        << coord(map_y(br.points[k].x(comp), 0.0, 1.0)) << ' ';
                out << "\"/>\n";
                i = j + 1;
            }
        }
        for (const auto& sp : br.special_points) {
            if (sp.type == PointType::Fold && sp.x.size() > 0) {
                for (int comp = 0; comp < sp.x.size(); ++comp) {
                    const double cx = map_x(sp.param, plo, phi);
                    const double cy = map_y(sp.x(comp), 0.0, 1.0);
                    out << "<path d=\"M " << coord(cx) << ' ' << coord(cy - 6) << " L "
                        << coord(cx + 6) << ' ' << coord(cy) << " L " << coord(cx) << ' '
                        << coord(cy + 6) << " L " << coord(cx - 6) << ' ' << coord(cy)
                        << " Z\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
                }
            } else if (sp.type == PointType::BranchPoint && sp.x.size() > 0) {
                const double cx = map_x(sp.param, plo, phi);
                const double cy = map_y(sp.x(0), 0.0, 1.0);
                out << "<circle cx=\"" << coord(cx) << "\" cy=\"" << coord(cy)
                    << "\" r=\"4\" fill=\"none\" stroke=\"" << color
                    << "\" stroke-width=\"1.5\"/>\n";
            }
        }
    }
    svg_axes(out, param_name, "x_i", plo, phi, 0.0, 1.0);
    out << "</svg>\n";
    return out.str();
}

}  // namespace spateq
