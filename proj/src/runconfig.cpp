#include "spateq/runconfig.hpp"

#include <sstream>

namespace spateq {

using nlohmann::ordered_json;

ModelConfig ModelSection::expand() const {
    if (custom) {
        return ModelConfig::checked(custom_sigma, build_geography(proximity),
                                    build_externality(externality));
    }
    return family.config();
}

int ModelSection::regions() const {
    return custom ? static_cast<int>(proximity.rows()) : family.regions();
}

namespace {

Matrix matrix_from_json(const ordered_json& rows, const char* what) {
    if (!rows.is_array() || rows.empty())
        throw ConfigError(std::string(what) + " must be an array of rows");
    const int n = static_cast<int>(rows.size());
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
        if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != n)
            throw ConfigError(std::string(what) + " must be square");
        for (int j = 0; j < n; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (int i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

RunConfig parse_run_config(const ordered_json& doc) {
    RunConfig rc;
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    if (doc.contains("model")) {
        const auto& m = doc.at("model");
        if (m.contains("custom")) {
            rc.model.custom = true;
            const auto& c = m.at("custom");
            rc.model.custom_sigma = c.value("sigma", 4.0);
            rc.model.proximity = matrix_from_json(c.at("proximity"), "model.custom.proximity");
            rc.model.externality =
                matrix_from_json(c.at("externality"), "model.custom.externality");
        } else {
            rc.model.custom = false;
            rc.model.family.kind = family_kind_from_name(m.value("family", "two-region"));
            rc.model.family.sigma = m.value("sigma", 4.0);
            rc.model.family.phi = m.value("phi", 0.5);
            rc.model.family.psi = m.value("psi", 0.5);
            if (m.contains("psi_prime") && !m.at("psi_prime").is_null())
                rc.model.family.psi_prime = m.at("psi_prime").get<double>();
            rc.model.family.phi_exp = m.value("phi_exp", 1.0);
            rc.model.family.psi_exp = m.value("psi_exp", 1.0);
        }
    }
    if (doc.contains("command")) {
        const auto& c = doc.at("command");
        rc.command = c.value("name", "");
        rc.params = ordered_json::object();
        for (auto it = c.begin(); it != c.end(); ++it)
            if (it.key() != "name") rc.params[it.key()] = it.value();
    }
    if (doc.contains("output")) {
        const auto& o = doc.at("output");
        rc.output.dir = o.value("dir", ".");
        if (o.contains("formats")) {
            rc.output.csv = rc.output.json = rc.output.svg = false;
            for (const auto& f : o.at("formats")) {
                const std::string name = f.get<std::string>();
                if (name == "csv") rc.output.csv = true;
                else if (name == "json") rc.output.json = true;
                else if (name == "svg") rc.output.svg = true;
                else throw ConfigError("unknown output format: " + name);
            }
        }
    }
    return rc;
}

ordered_json serialize_run_config(const RunConfig& rc) {
    ordered_json doc = ordered_json::object();
    ordered_json model = ordered_json::object();
    if (rc.model.custom) {
        ordered_json c = ordered_json::object();
        c["sigma"] = rc.model.custom_sigma;
        c["proximity"] = matrix_to_json(rc.model.proximity);
        c["externality"] = matrix_to_json(rc.model.externality);
        model["custom"] = std::move(c);
    } else {
        model["family"] = family_name(rc.model.family.kind);
        model["sigma"] = rc.model.family.sigma;
        model["phi"] = rc.model.family.phi;
        model["psi"] = rc.model.family.psi;
        if (rc.model.family.psi_prime) model["psi_prime"] = *rc.model.family.psi_prime;
        if (rc.model.family.phi_exp != 1.0) model["phi_exp"] = rc.model.family.phi_exp;
        if (rc.model.family.psi_exp != 1.0) model["psi_exp"] = rc.model.family.psi_exp;
    }
    doc["model"] = std::move(model);

    ordered_json cmd = ordered_json::object();
    cmd["name"] = rc.command;
    for (auto it = rc.params.begin(); it != rc.params.end(); ++it) cmd[it.key()] = it.value();
    doc["command"] = std::move(cmd);

    ordered_json out = ordered_json::object();
    out["dir"] = rc.output.dir;
    ordered_json formats = ordered_json::array();
    if (rc.output.csv) formats.push_back("csv");
    if (rc.output.json) formats.push_back("json");
    if (rc.output.svg) formats.push_back("svg");
    out["formats"] = std::move(formats);
    doc["output"] = std::move(out);
    return doc;
}

void apply_override(RunConfig& rc, const std::string& key, const std::string& value) {
    ordered_json parsed;
    try {
        parsed = ordered_json::parse(value);
    } catch (...) {
        parsed = value;  // bare strings stay strings
    }

    auto as_double = [&]() {
        if (parsed.is_number()) return parsed.get<double>();
        throw ConfigError("override " + key + " needs a numeric value");
    };

    if (key == "model.family") {
        rc.model.family.kind = family_kind_from_name(parsed.get<std::string>());
        rc.model.custom = false;
    } else if (key == "model.sigma") {
        rc.model.family.sigma = as_double();
        rc.model.custom_sigma = rc.model.family.sigma;
    } else if (key == "model.phi") {
        rc.model.family.phi = as_double();
    } else if (key == "model.psi") {
        rc.model.family.psi = as_double();
    } else if (key == "model.psi_prime") {
        rc.model.family.psi_prime = as_double();
    } else if (key == "model.phi_exp") {
        rc.model.family.phi_exp = as_double();
    } else if (key == "model.psi_exp") {
        rc.model.family.psi_exp = as_double();
    } else if (key == "output.dir") {
        rc.output.dir = parsed.is_string() ? parsed.get<std::string>() : value;
    } else if (key == "output.formats") {
        rc.output.csv = rc.output.json = rc.output.svg = false;
        std::stringstream ss(parsed.is_string() ? parsed.get<std::string>() : value);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok == "csv") rc.output.csv = true;
            else if (tok == "json") rc.output.json = true;
            else if (tok == "svg") rc.output.svg = true;
            else throw ConfigError("unknown output format: " + tok);
        }
    } else if (key.rfind("command.", 0) == 0) {
        rc.params[key.substr(8)] = parsed;
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

RangeSpec parse_range(const std::string& text) {
    RangeSpec r;
    std::stringstream ss(text);
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    if (parts.size() < 2 || parts.size() > 3)
        throw ConfigError("range must be lo:hi or lo:hi:count, got " + text);
    try {
        r.lo = std::stod(parts[0]);
        r.hi = std::stod(parts[1]);
        if (parts.size() == 3) r.count = std::stoi(parts[2]);
    } catch (...) {
        throw ConfigError("malformed range: " + text);
    }
    if (!(r.lo < r.hi)) throw ConfigError("range must have lo < hi: " + text);
    return r;
}

}  // namespace spateq
