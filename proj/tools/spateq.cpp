// spateq: spatial equilibria, stability, and bifurcation diagrams for a
// multi-region trade economy with production externalities.
//
// Exit codes: 0 success, 2 invalid configuration (the message names the
// violated invariant), 3 solver non-convergence (partial outputs written).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "spateq/output.hpp"
#include "spateq/runconfig.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace spateq;

namespace {

struct CliState {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
};

RunConfig assemble(const CliState& cli, const std::string& command) {
    RunConfig rc;
    if (!cli.config_file.empty()) {
        std::ifstream in(cli.config_file);
        if (!in) throw ConfigError("cannot open config file: " + cli.config_file);
        ordered_json doc = ordered_json::parse(in);
        rc = parse_run_config(doc);
    }
    rc.command = command;
    if (const char* dir = std::getenv("SPATEQ_OUTPUT_DIR"); dir && rc.output.dir == ".")
        rc.output.dir = dir;
    for (const auto& [key, value] : cli.overrides) apply_override(rc, key, value);
    return rc;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write output file: " + path.string());
    out << content;
}

void emit(const RunConfig& rc, const std::string& stem, const std::string* csv,
          const ordered_json* json, const std::string* svg) {
    const fs::path dir(rc.output.dir);
    fs::create_directories(dir);
    if (rc.output.csv && csv) write_file(dir / (stem + ".csv"), *csv);
    if (rc.output.json && json) write_file(dir / (stem + ".json"), json->dump(2) + "\n");
    if (rc.output.svg && svg) {
        if (svg->empty())
            std::cerr << "warning: empty dataset, no SVG written\n";
        else
            write_file(dir / (stem + ".svg"), *svg);
    }
}

Vector parse_x(const std::string& text, int n) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (static_cast<int>(vals.size()) != n)
        throw ConfigError("x must list one share per region");
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = vals[i];
    return x;
}

FreeParam parse_free(const std::string& name) {
    if (name == "phi") return FreeParam::Phi;
    if (name == "psi") return FreeParam::Psi;
    throw ConfigError("free parameter must be phi or psi");
}

int run_wages(const RunConfig& rc) {
    const ModelConfig cfg = rc.model.expand();
    const Vector xv = parse_x(rc.params.value("x", std::string("")), cfg.n);
    const SpatialDistribution x = SpatialDistribution::checked(xv);
    WageSolveOptions opts;
    opts.tol = rc.params.value("tol", 1e-12);
    opts.max_iter = rc.params.value("max_iter", 10000);
    const WageSolution sol = solve_wages(cfg, x, opts);
    const MarketState state = market_state(cfg, x, sol.w);
    const std::string csv = csv_wages(x, sol, state);
    const ordered_json json = json_wages(x, sol, state);
    emit(rc, "wages", &csv, &json, nullptr);
    return sol.converged ? 0 : 3;
}

int run_equilibrate(const RunConfig& rc) {
    const ModelConfig cfg = rc.model.expand();
    EquilibriumOptions opts;
    opts.tol = rc.params.value("tol", 1e-10);
    const bool parallel = rc.params.value("parallel", true);
    const auto results = multistart_equilibria(cfg, opts, parallel);
    const std::string csv = csv_equilibria(results);
    const ordered_json json = json_equilibria(results);
    emit(rc, "equilibria", &csv, &json, nullptr);
    return results.empty() ? 3 : 0;
}

int run_stability(const RunConfig& rc) {
    const ModelConfig cfg = rc.model.expand();
    const EigenReport rep = uniform_stability(cfg);
    const std::string csv = csv_eigen_report(rep);
    const ordered_json json = json_eigen_report(rep);
    emit(rc, "stability", &csv, &json, nullptr);
    return 0;
}

int run_threshold(const RunConfig& rc) {
    if (rc.model.custom) throw ConfigError("threshold needs a named family");
    const FreeParam free = parse_free(rc.params.value("free", std::string("phi")));
    ThresholdOptions opts;
    if (rc.params.contains("range")) {
        const RangeSpec r = parse_range(rc.params.at("range").get<std::string>());
        opts.lo = r.lo;
        opts.hi = r.hi;
    }
    const ThresholdResult res = critical_threshold(rc.model.family, free, opts);
    const ordered_json json = json_threshold(res, free);
    emit(rc, "threshold", nullptr, &json, nullptr);
    return 0;
}

int run_grid(const RunConfig& rc) {
    if (rc.model.custom) throw ConfigError("grid needs a named family");
    GridSpec spec;
    if (rc.params.contains("phi")) {
        const RangeSpec r = parse_range(rc.params.at("phi").get<std::string>());
        spec.phi_lo = r.lo;
        spec.phi_hi = r.hi;
        if (r.count > 0) spec.n_phi = r.count;
    }
    if (rc.params.contains("psi")) {
        const RangeSpec r = parse_range(rc.params.at("psi").get<std::string>());
        spec.psi_lo = r.lo;
        spec.psi_hi = r.hi;
        if (r.count > 0) spec.n_psi = r.count;
    }
    if (rc.params.value("mode", std::string("auto")) == "dense") spec.eval = GridEval::Dense;
    const bool serial = rc.params.value("serial", false);
    const StabilityGrid grid =
        serial ? stability_grid_serial(rc.model.family, spec) : stability_grid(rc.model.family, spec);
    const std::string csv = csv_grid(grid);
    const ordered_json json = json_grid(grid);
    const std::string svg = svg_grid_map(grid);
    emit(rc, "grid", &csv, &json, &svg);
    return 0;
}

int run_bifurcate(const RunConfig& rc) {
    if (rc.model.custom) throw ConfigError("bifurcate needs a named family");
    DiagramSpec spec;
    spec.family = rc.model.family;
    spec.free = parse_free(rc.params.value("param", std::string("phi")));
    if (rc.params.contains("range")) {
        const RangeSpec r = parse_range(rc.params.at("range").get<std::string>());
        spec.lo = r.lo;
        spec.hi = r.hi;
    }
    spec.eps = rc.params.value("eps", 1e-3);
    spec.delta = rc.params.value("delta", 1e-4);
    spec.cont.step_max = rc.params.value("step_max", 1e-2);
    spec.multistart = rc.params.value("multistart", true);
    spec.parallel = rc.params.value("parallel", true);
    const Diagram diagram = bifurcation_diagram(spec);
    const std::string csv = csv_branches(diagram.branches, spec.family.regions());
    const ordered_json json = json_diagram(diagram);
    const std::string svg =
        svg_branch_diagram(diagram.branches, spec.free == FreeParam::Phi ? "phi" : "psi");
    emit(rc, "branches", &csv, &json, &svg);
    return 0;
}

int run_decompose(const RunConfig& rc) {
    if (rc.model.custom || rc.model.family.kind != FamilyKind::TwoRegion)
        throw ConfigError("decompose applies to the two-region family");
    const double sigma = rc.model.family.sigma;
    const double psi = rc.model.family.psi;
    std::vector<double> phis;
    if (rc.params.contains("phi_range")) {
        const RangeSpec r = parse_range(rc.params.at("phi_range").get<std::string>());
        const int count = r.count > 0 ? r.count : 99;
        for (int i = 0; i < count; ++i)
            phis.push_back(count == 1 ? r.lo : r.lo + (r.hi - r.lo) * i / (count - 1.0));
    } else {
        phis.push_back(rc.model.family.phi);
    }
    std::vector<ForceDecomposition> rows;
    rows.reserve(phis.size());
    for (double p : phis) rows.push_back(decompose_net_force(p, psi, sigma));
    const std::string csv = csv_decompose(rows, phis, psi, sigma);
    ordered_json json = ordered_json::array();
    for (size_t i = 0; i < rows.size(); ++i) {
        ordered_json e = ordered_json::object();
        e["phi"] = phis[i];
        e["psi"] = psi;
        e["sigma"] = sigma;
        e["chi"] = rows[i].chi;
        e["lambda"] = rows[i].lambda;
        e["omega_a"] = rows[i].omega_a;
        e["omega_w"] = rows[i].omega_w;
        e["alpha_x"] = rows[i].alpha_x;
        e["beta_x"] = rows[i].beta_x;
        e["omega"] = rows[i].omega;
        json.push_back(std::move(e));
    }
    emit(rc, "decompose", &csv, &json, nullptr);
    return 0;
}

void add_model_flags(CLI::App* cmd, CliState& state) {
    auto track = [&state](const std::string& key) {
        return [&state, key](const std::string& v) { state.overrides.emplace_back(key, v); };
    };
    cmd->add_option_function<std::string>("--family", track("model.family"),
                                          "model family (two-region, baseline4, equidistant4, "
                                          "block4, bypass4)");
    cmd->add_option_function<std::string>("--phi", track("model.phi"), "trade freeness");
    cmd->add_option_function<std::string>("--psi", track("model.psi"), "externality level");
    cmd->add_option_function<std::string>("--psi-prime", track("model.psi_prime"),
                                          "cross coupling for block4/bypass4");
    cmd->add_option_function<std::string>("--sigma", track("model.sigma"),
                                          "elasticity of substitution");
    cmd->add_option_function<std::string>("--phi-exp", track("model.phi_exp"),
                                          "two-region tilt: phi_12 = phi^e");
    cmd->add_option_function<std::string>("--psi-exp", track("model.psi_exp"),
                                          "two-region tilt: psi_21 = psi^e");
    cmd->add_option_function<std::string>("--out-dir", track("output.dir"), "output directory");
    cmd->add_option_function<std::string>("--formats", track("output.formats"),
                                          "comma list of csv,json,svg");
}

void add_param_flag(CLI::App* cmd, CliState& state, const std::string& flag,
                    const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [&state, key](const std::string& v) { state.overrides.emplace_back(key, v); },
        help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial equilibrium and bifurcation toolkit"};
    app.require_subcommand(1);

    CliState state;
    app.add_option("--config", state.config_file, "JSON configuration file")
        ->expected(1);

    auto* wages = app.add_subcommand("wages", "solve market-clearing wages at a given x");
    add_model_flags(wages, state);
    add_param_flag(wages, state, "--x", "command.x", "population shares, comma separated");
    add_param_flag(wages, state, "--tol", "command.tol", "residual tolerance");
    add_param_flag(wages, state, "--max-iter", "command.max_iter", "iteration cap");

    auto* equilibrate = app.add_subcommand("equilibrate", "multi-start spatial equilibria");
    add_model_flags(equilibrate, state);
    add_param_flag(equilibrate, state, "--tol", "command.tol", "payoff-spread tolerance");
    add_param_flag(equilibrate, state, "--parallel", "command.parallel",
                   "run starts in parallel (true/false)");

    auto* stability = app.add_subcommand("stability", "eigen report at the uniform state");
    add_model_flags(stability, state);

    auto* threshold = app.add_subcommand("threshold", "critical freeness levels");
    add_model_flags(threshold, state);
    add_param_flag(threshold, state, "--free", "command.free", "free parameter: phi or psi");
    add_param_flag(threshold, state, "--range", "command.range", "scan range lo:hi");

    auto* grid = app.add_subcommand("grid", "stability grid over (phi, psi)");
    add_model_flags(grid, state);
    add_param_flag(grid, state, "--phi-range", "command.phi", "phi range lo:hi:count");
    add_param_flag(grid, state, "--psi-range", "command.psi", "psi range lo:hi:count");
    add_param_flag(grid, state, "--mode", "command.mode", "auto or dense");
    add_param_flag(grid, state, "--serial", "command.serial", "serial reference (true/false)");

    auto* bifurcate = app.add_subcommand("bifurcate", "bifurcation diagram over one parameter");
    add_model_flags(bifurcate, state);
    add_param_flag(bifurcate, state, "--param", "command.param", "phi or psi");
    add_param_flag(bifurcate, state, "--range", "command.range", "parameter range lo:hi");
    add_param_flag(bifurcate, state, "--eps", "command.eps", "branch-switch amplitude");
    add_param_flag(bifurcate, state, "--delta", "command.delta", "branch-switch offset");
    add_param_flag(bifurcate, state, "--multistart", "command.multistart",
                   "add multi-start branches (true/false)");

    auto* decompose = app.add_subcommand("decompose", "two-region force decomposition table");
    add_model_flags(decompose, state);
    add_param_flag(decompose, state, "--phi-range", "command.phi_range",
                   "phi sweep lo:hi:count");

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const RunConfig rc = assemble(state, command);
        if (command == "wages") return run_wages(rc);
        if (command == "equilibrate") return run_equilibrate(rc);
        if (command == "stability") return run_stability(rc);
        if (command == "threshold") return run_threshold(rc);
        if (command == "grid") return run_grid(rc);
        if (command == "bifurcate") return run_bifurcate(rc);
        if (command == "decompose") return run_decompose(rc);
        std::cerr << "error: unknown command " << command << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
