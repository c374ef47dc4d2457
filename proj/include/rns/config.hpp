#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rns/dynamics.hpp"
#include "rns/errors.hpp"
#include "rns/grid.hpp"
#include "rns/initial_data.hpp"
#include "rns/regularizer.hpp"

namespace rns {

/// Names accepted in the "checks" list.
inline const std::vector<std::string>& known_checks() {
    static const std::vector<std::string> names{"l2_identity",      "grad_identity", "renorm_identity", "weighted_positive",
                                                "central_estimate", "divergence",    "energy_monotone", "mean_invariant",
                                                "sweep_monotone",   "sqrt_eps_bound"};
    return names;
}

struct PhysicsConfig {
    double eps = 0.0;
    double lambda = 1.0;
    std::string custom_rho;  // empty: the rho_lambda family
    bool operator==(const PhysicsConfig&) const = default;
};

struct SweepConfig {
    std::vector<double> eps_values{1e-1, 1e-2, 1e-3};
    std::vector<double> lambda_values{1.0, 0.5, 0.25, 0.125};
    std::string reference = "limit_run";  // limit_run | finest_run
    bool operator==(const SweepConfig&) const = default;
};

struct OutputConfig {
    std::string directory;                        // empty: --out, then RNS_OUT_DIR, then "rns_out"
    std::vector<std::string> formats{"csv", "json"};
    bool snapshots = false;                       // write RNS1 snapshot files
    bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
    GridSpec grid;
    StepperConfig stepper;
    PhysicsConfig physics;
    initial::InitialDataSpec initial_data;
    SweepConfig sweep;
    OutputConfig outputs;
    std::vector<std::string> checks{"l2_identity", "divergence", "energy_monotone", "mean_invariant"};
    bool operator==(const RunConfig&) const = default;

    RegularizerParams regularizer() const {
        RegularizerParams p;
        p.lambda = physics.lambda;
        if (!physics.custom_rho.empty()) p.custom_rho = named_rho(physics.custom_rho);
        return p;
    }
};

/// Aggregated configuration failure: one message per problem, each prefixed by a JSON pointer.
class ConfigErrors : public ConfigError {
public:
    explicit ConfigErrors(std::vector<std::string> problems)
        : ConfigError(join(problems)), problems_(std::move(problems)) {}
    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p) {
        std::string s = "invalid configuration:";
        for (const auto& m : p) s += "\n  " + m;
        return s;
    }
    std::vector<std::string> problems_;
};

struct ParseResult {
    RunConfig config;
    std::vector<std::string> warnings;  // unknown keys when not strict
};

namespace detail {

using json = nlohmann::json;

class ConfigReader {
public:
    explicit ConfigReader(bool strict) : strict_(strict) {}

    std::vector<std::string> errors, warnings;

    void error(const std::string& ptr, const std::string& msg) { errors.push_back((ptr.empty() ? "/" : ptr) + ": " + msg); }

    /// Object at key; reports unknown members against the allowed list.
    const json* object(const json& parent, const std::string& key, const std::string& ptr, const std::set<std::string>& allowed) {
        if (!parent.contains(key)) return nullptr;
        const json& o = parent.at(key);
        const std::string here = ptr + "/" + key;
        if (!o.is_object()) {
            error(here, "expected an object");
            return nullptr;
        }
        check_keys(o, here, allowed);
        return &o;
    }

    void check_keys(const json& o, const std::string& ptr, const std::set<std::string>& allowed) {
        for (auto it = o.begin(); it != o.end(); ++it)
            if (!allowed.count(it.key())) {
                const std::string m = ptr + "/" + it.key() + ": unknown key";
                if (strict_)
                    errors.push_back(m);
                else
                    warnings.push_back(m);
            }
    }

    void number(const json* o, const char* key, const std::string& ptr, double& out) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        if (!v.is_number()) return error(ptr + "/" + key, "expected a number");
        out = v.get<double>();
    }

    template <class Int>
    void integer(const json* o, const char* key, const std::string& ptr, Int& out) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        if (!v.is_number_integer()) return error(ptr + "/" + key, "expected an integer");
        if constexpr (std::is_unsigned_v<Int>) {
            if (v.is_number_unsigned())
                out = v.get<Int>();
            else if (v.get<std::int64_t>() < 0)
                error(ptr + "/" + key, "expected a non-negative integer");
            else
                out = Int(v.get<std::int64_t>());
        } else {
            const auto x = v.get<std::int64_t>();
            if (x < std::numeric_limits<Int>::min() || x > std::numeric_limits<Int>::max())
                return error(ptr + "/" + key, "integer out of range");
            out = Int(x);
        }
    }

    void boolean(const json* o, const char* key, const std::string& ptr, bool& out) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        if (!v.is_boolean()) return error(ptr + "/" + key, "expected a boolean");
        out = v.get<bool>();
    }

    void string(const json* o, const char* key, const std::string& ptr, std::string& out, bool nullable = false) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        if (nullable && v.is_null()) {
            out.clear();
            return;
        }
        if (!v.is_string()) return error(ptr + "/" + key, "expected a string");
        out = v.get<std::string>();
    }

    void numbers(const json* o, const char* key, const std::string& ptr, std::vector<double>& out) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        const std::string here = ptr + "/" + key;
        if (!v.is_array()) return error(here, "expected an array of numbers");
        std::vector<double> tmp;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                error(here + "/" + std::to_string(i), "expected a number");
                continue;
            }
            tmp.push_back(v[i].get<double>());
        }
        out = tmp;
    }

    void strings(const json* o, const char* key, const std::string& ptr, std::vector<std::string>& out) {
        if (!o || !o->contains(key)) return;
        const json& v = o->at(key);
        const std::string here = ptr + "/" + key;
        if (!v.is_array()) return error(here, "expected an array of strings");
        std::vector<std::string> tmp;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) {
                error(here + "/" + std::to_string(i), "expected a string");
                continue;
            }
            tmp.push_back(v[i].get<std::string>());
        }
        out = tmp;
    }

private:
    bool strict_;
};

inline void check_decreasing(ConfigReader& rd, const std::vector<double>& v, const std::string& ptr) {
    if (v.size() < 3) rd.error(ptr, "at least 3 values required");
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || !std::isfinite(v[i])) rd.error(ptr + "/" + std::to_string(i), "must be positive");
        if (i && !(v[i] < v[i - 1])) rd.error(ptr + "/" + std::to_string(i), "values must be strictly decreasing");
    }
}

}  // namespace detail

/// Parses and validates a configuration document. Every problem is collected
/// before throwing ConfigErrors. Unknown keys are errors in strict mode and
/// warnings otherwise.
inline ParseResult parse_config_json(const nlohmann::json& doc, bool strict = true) {
    using detail::json;
    detail::ConfigReader rd(strict);
    ParseResult res;
    RunConfig& c = res.config;
    if (!doc.is_object()) throw ConfigErrors({"/: configuration must be a JSON object"});
    rd.check_keys(doc, "", {"grid", "stepper", "physics", "initial_data", "sweep", "outputs", "checks"});

    const json* grid = rd.object(doc, "grid", "", {"n", "box_length", "dealias"});
    rd.integer(grid, "n", "/grid", c.grid.n);
    rd.number(grid, "box_length", "/grid", c.grid.box_length);
    rd.boolean(grid, "dealias", "/grid", c.grid.dealias);
    if (c.grid.n < 8 || c.grid.n % 2) rd.error("/grid/n", "must be an even integer >= 8");
    if (!(c.grid.box_length > 0.0) || !std::isfinite(c.grid.box_length)) rd.error("/grid/box_length", "must be positive");

    const json* st = rd.object(doc, "stepper", "", {"scheme", "dt", "t_end", "snapshot_stride"});
    std::string scheme = scheme_name(c.stepper.scheme);
    rd.string(st, "scheme", "/stepper", scheme);
    try {
        c.stepper.scheme = parse_scheme(scheme);
    } catch (const Error&) {
        rd.error("/stepper/scheme", "unknown scheme '" + scheme + "'");
    }
    rd.number(st, "dt", "/stepper", c.stepper.dt);
    rd.number(st, "t_end", "/stepper", c.stepper.t_end);
    rd.integer(st, "snapshot_stride", "/stepper", c.stepper.snapshot_stride);
    if (!(c.stepper.dt > 0.0) || !std::isfinite(c.stepper.dt)) rd.error("/stepper/dt", "must be positive");
    if (!(c.stepper.t_end > 0.0) || !std::isfinite(c.stepper.t_end)) rd.error("/stepper/t_end", "must be positive");
    if (c.stepper.snapshot_stride < 1) rd.error("/stepper/snapshot_stride", "must be >= 1");
    if (c.stepper.dt > 0.0 && c.stepper.t_end > 0.0 && std::isfinite(c.stepper.dt) && c.stepper.snapshot_stride >= 1) {
        try {
            c.stepper.validate();
        } catch (const Error& e) {
            rd.error("/stepper/t_end", e.what());
        }
    }

    const json* ph = rd.object(doc, "physics", "", {"eps", "lambda", "custom_rho"});
    rd.number(ph, "eps", "/physics", c.physics.eps);
    rd.number(ph, "lambda", "/physics", c.physics.lambda);
    rd.string(ph, "custom_rho", "/physics", c.physics.custom_rho, true);
    if (!(c.physics.eps >= 0.0) || !std::isfinite(c.physics.eps)) rd.error("/physics/eps", "must be >= 0");
    if (!(c.physics.lambda >= 0.0) || !std::isfinite(c.physics.lambda)) rd.error("/physics/lambda", "must be >= 0");
    if (!c.physics.custom_rho.empty() && !named_rho(c.physics.custom_rho))
        rd.error("/physics/custom_rho", "unknown rho tag '" + c.physics.custom_rho + "'");

    const json* id = rd.object(doc, "initial_data", "", {"recipe", "amplitude", "wavenumber", "modes", "seed"});
    rd.string(id, "recipe", "/initial_data", c.initial_data.recipe);
    rd.number(id, "amplitude", "/initial_data", c.initial_data.amplitude);
    rd.integer(id, "wavenumber", "/initial_data", c.initial_data.wavenumber);
    rd.integer(id, "modes", "/initial_data", c.initial_data.modes);
    rd.integer(id, "seed", "/initial_data", c.initial_data.seed);
    {
        const auto& r = c.initial_data.recipe;
        if (r != "taylor_green" && r != "random_lowmode" && r != "single_mode" && r != "zero")
            rd.error("/initial_data/recipe", "unknown recipe '" + r + "'");
        if (!std::isfinite(c.initial_data.amplitude)) rd.error("/initial_data/amplitude", "must be finite");
        if (c.initial_data.wavenumber < 1) rd.error("/initial_data/wavenumber", "must be >= 1");
        if (c.initial_data.modes < 1) rd.error("/initial_data/modes", "must be >= 1");
        else if (r == "random_lowmode" && 2 * c.initial_data.modes >= c.grid.n)
            rd.error("/initial_data/modes", "band must stay below the Nyquist index");
    }

    const json* sw = rd.object(doc, "sweep", "", {"eps_values", "lambda_values", "reference"});
    rd.numbers(sw, "eps_values", "/sweep", c.sweep.eps_values);
    rd.numbers(sw, "lambda_values", "/sweep", c.sweep.lambda_values);
    rd.string(sw, "reference", "/sweep", c.sweep.reference);
    detail::check_decreasing(rd, c.sweep.eps_values, "/sweep/eps_values");
    detail::check_decreasing(rd, c.sweep.lambda_values, "/sweep/lambda_values");
    if (c.sweep.reference != "limit_run" && c.sweep.reference != "finest_run")
        rd.error("/sweep/reference", "must be 'limit_run' or 'finest_run'");

    const json* out = rd.object(doc, "outputs", "", {"directory", "formats", "snapshots"});
    rd.string(out, "directory", "/outputs", c.outputs.directory);
    rd.strings(out, "formats", "/outputs", c.outputs.formats);
    rd.boolean(out, "snapshots", "/outputs", c.outputs.snapshots);
    for (std::size_t i = 0; i < c.outputs.formats.size(); ++i)
        if (c.outputs.formats[i] != "csv" && c.outputs.formats[i] != "json")
            rd.error("/outputs/formats/" + std::to_string(i), "must be 'csv' or 'json'");

    if (doc.contains("checks")) {
        std::vector<std::string> checks;
        rd.strings(&doc, "checks", "", checks);
        for (std::size_t i = 0; i < checks.size(); ++i)
            if (std::find(known_checks().begin(), known_checks().end(), checks[i]) == known_checks().end())
                rd.error("/checks/" + std::to_string(i), "unknown check '" + checks[i] + "'");
        c.checks = checks;
    }

    if (!rd.errors.empty()) throw ConfigErrors(rd.errors);
    res.warnings = rd.warnings;
    return res;
}

inline ParseResult parse_config_text(const std::string& text, bool strict = true) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigErrors({std::string("/: malformed JSON: ") + e.what()});
    }
    return parse_config_json(doc, strict);
}

/// Reads and validates a configuration file.
inline RunConfig parse_config(const std::string& path, bool strict = true) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open configuration '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), strict).config;
}

/// Canonical JSON form of a configuration; parse_config_json inverts it.
inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["grid"] = {{"n", c.grid.n}, {"box_length", c.grid.box_length}, {"dealias", c.grid.dealias}};
    j["stepper"] = {{"scheme", scheme_name(c.stepper.scheme)},
                    {"dt", c.stepper.dt},
                    {"t_end", c.stepper.t_end},
                    {"snapshot_stride", c.stepper.snapshot_stride}};
    j["physics"] = {{"eps", c.physics.eps}, {"lambda", c.physics.lambda}};
    j["physics"]["custom_rho"] = c.physics.custom_rho.empty() ? nlohmann::json(nullptr) : nlohmann::json(c.physics.custom_rho);
    j["initial_data"] = {{"recipe", c.initial_data.recipe},
                         {"amplitude", c.initial_data.amplitude},
                         {"wavenumber", c.initial_data.wavenumber},
                         {"modes", c.initial_data.modes},
                         {"seed", c.initial_data.seed}};
    j["sweep"] = {{"eps_values", c.sweep.eps_values}, {"lambda_values", c.sweep.lambda_values}, {"reference", c.sweep.reference}};
    j["outputs"] = {{"directory", c.outputs.directory}, {"formats", c.outputs.formats}, {"snapshots", c.outputs.snapshots}};
    j["checks"] = c.checks;
    return j;
}

}  // namespace rns
