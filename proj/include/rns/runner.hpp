#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>
#include <openssl/evp.h>

#include "rns/config.hpp"
#include "rns/dynamics.hpp"
#include "rns/energy_diag.hpp"
#include "rns/format.hpp"
#include "rns/initial_data.hpp"
#include "rns/ledger.hpp"
#include "rns/limit_lab.hpp"
#include "rns/snapshot_io.hpp"
#include "rns/tightness.hpp"

/// Run orchestration, artifact persistence and report export behind the CLI.
namespace rns::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* code_version = "1.0.0";
inline constexpr const char* manifest_name = "manifest.json";
inline constexpr const char* manifest_format = "rns-manifest v1";

enum ExitCode { exit_ok = 0, exit_usage = 1, exit_check_failed = 2, exit_io = 3 };

// ---------------------------------------------------------------------------
// Hashing and files

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw IoError("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

inline std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Writes through a temporary file in the same directory, then renames.
inline void write_atomic(const fs::path& p, std::string_view content) {
    const fs::path tmp = p.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write '" + tmp.string() + "'");
        os.write(content.data(), std::streamsize(content.size()));
        os.flush();
        if (!os) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into '" + p.string() + "'");
    }
}

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Exclusive lock on a run directory, held for the lifetime of the object.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".rns.lock") {
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) throw IoError("run directory '" + dir.string() + "' is locked or not writable");
        ::close(fd);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

/// Collects artifacts of one invocation; the manifest goes last.
class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory '" + dir_.string() + "'");
        lock_ = std::make_unique<DirectoryLock>(dir_);
    }

    const fs::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        write_atomic(dir_ / name, content);
        files_.push_back({{"name", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
    }

    void finish(json manifest) {
        manifest["artifacts"] = files_;
        write_atomic(dir_ / manifest_name, manifest.dump(2) + "\n");
    }

private:
    fs::path dir_;
    std::unique_ptr<DirectoryLock> lock_;
    json files_ = json::array();
};

// ---------------------------------------------------------------------------
// Checks

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

inline json to_json(const CheckResult& c) {
    return {{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance}, {"detail", c.detail}};
}

inline bool check_applies(const std::string& name, double eps) {
    if (name == "renorm_identity") return eps == 0.0;
    if (name == "weighted_positive") return eps > 0.0;
    return name != "sweep_monotone" && name != "sqrt_eps_bound";
}

/// Inline diagnostic on one trajectory. Tolerances match the documented acceptance thresholds.
inline CheckResult evaluate_check(const std::string& name, const Trajectory& tr) {
    CheckResult c;
    c.name = name;
    if (name == "l2_identity") {
        c.value = diag::max_of(diag::check_energy_identity(tr.ledger, diag::IdentityKind::L2));
        c.tolerance = 1e-3;
        c.passed = c.value < c.tolerance;
    } else if (name == "grad_identity") {
        c.value = diag::max_of(diag::check_energy_identity(tr.ledger, diag::IdentityKind::GRAD));
        c.tolerance = 5e-3;
        c.passed = c.value < c.tolerance;
    } else if (name == "renorm_identity") {
        c.value = diag::max_of(diag::renorm_identity_check(tr.ledger, diag::HSpec::power(tr.ledger.r)));
        c.tolerance = 5e-3;
        c.passed = c.value < c.tolerance;
    } else if (name == "weighted_positive") {
        c.value = tr.ledger.empty() ? 0.0 : tr.ledger.back().weighted_cum;
        c.passed = c.value > 0.0;
        c.detail = "final weighted_cum must be strictly positive";
    } else if (name == "central_estimate") {
        const auto rep = diag::central_estimate_check(tr, 0.5);
        c.value = rep.C_emp;
        c.passed = rep.links_hold && rep.estimate_holds;
        c.detail = "chain links at every snapshot; value is C_emp";
    } else if (name == "divergence") {
        c.value = tr.max_divergence;
        c.tolerance = 1e-10;
        c.passed = c.value <= c.tolerance;
    } else if (name == "energy_monotone") {
        c.value = tr.max_energy_increase;
        c.tolerance = 1e-12;
        c.passed = c.value <= c.tolerance;
    } else if (name == "mean_invariant") {
        c.value = tr.max_mean_drift;
        c.passed = tr.mean_bitwise_invariant;
        c.detail = "k = 0 coefficients bitwise constant";
    } else {
        throw ConfigError("unknown check '" + name + "'");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Serialization

inline json ledger_to_json(const EnergyLedger& ledger) {
    json cols = json::array(), rows = json::array();
    for (const auto& col : ledger_columns) cols.push_back(col.name);
    for (const auto& row : ledger.rows) {
        json r = json::array();
        for (const auto& col : ledger_columns) r.push_back(row.*(col.member));
        rows.push_back(std::move(r));
    }
    return {{"format", "rns-ledger v1"}, {"r", ledger.r}, {"eps", ledger.eps}, {"columns", cols}, {"rows", rows}};
}

inline EnergyLedger ledger_from_json(const json& j) {
    try {
        if (j.at("format") != "rns-ledger v1") throw IoError("ledger json: unsupported format");
        EnergyLedger ledger;
        ledger.r = j.at("r").get<double>();
        ledger.eps = j.at("eps").get<double>();
        const json& cols = j.at("columns");
        if (cols.size() != ledger_columns.size()) throw IoError("ledger json: column mismatch");
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] != ledger_columns[i].name) throw IoError("ledger json: column mismatch");
        for (const json& r : j.at("rows")) {
            if (r.size() != ledger_columns.size()) throw IoError("ledger json: wrong number of fields");
            LedgerRow row;
            for (std::size_t i = 0; i < ledger_columns.size(); ++i) row.*(ledger_columns[i].member) = r[i].get<double>();
            ledger.rows.push_back(row);
        }
        return ledger;
    } catch (const json::exception& e) {
        throw IoError(std::string("ledger json: ") + e.what());
    }
}

inline json trajectory_summary(const Trajectory& tr) {
    return {{"steps", tr.config.steps()},
            {"final_time", tr.ledger.empty() ? 0.0 : tr.ledger.back().time},
            {"max_divergence", tr.max_divergence},
            {"max_energy_increase", tr.max_energy_increase},
            {"max_mean_drift", tr.max_mean_drift},
            {"mean_bitwise_invariant", tr.mean_bitwise_invariant},
            {"warnings", tr.warnings}};
}

inline std::string convergence_csv(const limit::ConvergenceReport& rep) {
    std::ostringstream os;
    os << "# rns-convergence v1\n";
    os << "# axis=" << limit::axis_name(rep.axis) << " reference=" << limit::policy_name(rep.reference)
       << " reference_value=" << fmt::number(rep.reference_value) << '\n';
    os << "value";
    for (const char* n : limit::gap_names) os << ',' << n;
    os << ",sqrt_eps_weighted,l2_identity_max\n";
    for (const auto& e : rep.entries) {
        os << fmt::number(e.value);
        for (double g : limit::gap_array(e.gaps)) os << ',' << fmt::number(g);
        os << ',' << fmt::number(e.sqrt_eps_weighted) << ',' << fmt::number(e.l2_identity_max) << '\n';
    }
    return os.str();
}

inline json convergence_json(const limit::ConvergenceReport& rep) {
    json entries = json::array();
    for (const auto& e : rep.entries) {
        json gaps;
        const auto arr = limit::gap_array(e.gaps);
        for (std::size_t c = 0; c < arr.size(); ++c) gaps[limit::gap_names[c]] = arr[c];
        entries.push_back({{"value", e.value}, {"gaps", gaps}, {"sqrt_eps_weighted", e.sqrt_eps_weighted},
                           {"l2_identity_max", e.l2_identity_max}});
    }
    json rates, mono;
    for (std::size_t c = 0; c < limit::gap_names.size(); ++c) {
        rates[limit::gap_names[c]] = rep.rates[c];
        mono[limit::gap_names[c]] = bool(rep.monotone[c]);
    }
    return {{"format", "rns-convergence v1"},
            {"axis", limit::axis_name(rep.axis)},
            {"reference", limit::policy_name(rep.reference)},
            {"reference_value", rep.reference_value},
            {"reference_l2_identity_max", rep.reference_l2_identity_max},
            {"entries", entries},
            {"fitted_rates", rates},
            {"monotone", mono},
            {"all_monotone", rep.all_monotone},
            {"aborted", rep.aborted},
            {"abort_reason", rep.abort_reason},
            {"note", rep.note}};
}

inline json exponent_table_json(const diag::ExponentTable& t) {
    return {{"r", t.r},         {"alpha", t.alpha},         {"inverse_alpha_sq_plus_4_over_r", t.sum},
            {"beta", t.beta},   {"beta_prime", t.beta_prime}, {"a", t.a},
            {"theta", t.theta}, {"serrin_alpha", t.serrin_alpha}, {"chain_exponent", t.chain_exponent},
            {"sobolev_factor", t.sobolev_factor}, {"serrin_check", t.serrin_check}, {"lyapunov", t.lyapunov}};
}

// ---------------------------------------------------------------------------
// Tightness family files

struct FamilySpec {
    tightness::FunctionFamily family;
    tightness::DiscreteMeasureSpace space;
    int n_max = 20;
    std::vector<std::size_t> budgets{1'000'000};
    std::string name;
};

/// Parses the family description format (see docs/formats.md).
inline FamilySpec parse_family_json(const json& j) {
    std::vector<std::string> errs;
    FamilySpec spec;
    const auto err = [&](const std::string& ptr, const std::string& m) { errs.push_back(ptr + ": " + m); };
    if (!j.is_object()) throw ConfigErrors({"/: family must be a JSON object"});
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "format" && it.key() != "name" && it.key() != "p" && it.key() != "space" && it.key() != "members" &&
            it.key() != "n_max" && it.key() != "budgets")
            err("/" + it.key(), "unknown key");
    if (!j.contains("format") || j["format"] != "rns-family v1") err("/format", "must be \"rns-family v1\"");
    if (j.contains("name")) {
        if (j["name"].is_string())
            spec.name = j["name"].get<std::string>();
        else
            err("/name", "expected a string");
    }
    if (j.contains("p")) {
        if (j["p"].is_number())
            spec.family.p = j["p"].get<double>();
        else if (j["p"] == "inf")
            spec.family.p = tightness::inf;
        else
            err("/p", "expected a number or \"inf\"");
        if (!(spec.family.p >= 1.0)) err("/p", "must lie in [1, inf]");
    }
    if (j.contains("n_max")) {
        if (j["n_max"].is_number_integer() && j["n_max"].get<int>() >= 1)
            spec.n_max = j["n_max"].get<int>();
        else
            err("/n_max", "expected a positive integer");
    }
    if (j.contains("budgets")) {
        spec.budgets.clear();
        if (!j["budgets"].is_array() || j["budgets"].empty()) err("/budgets", "expected a non-empty array of positive integers");
        else
            for (std::size_t i = 0; i < j["budgets"].size(); ++i) {
                const json& b = j["budgets"][i];
                if (b.is_number_integer() && b.get<std::int64_t>() > 0)
                    spec.budgets.push_back(std::size_t(b.get<std::int64_t>()));
                else
                    err("/budgets/" + std::to_string(i), "expected a positive integer");
            }
    }
    if (!j.contains("space") || !j["space"].is_object())
        err("/space", "expected an object");
    else {
        const json& s = j["space"];
        for (auto it = s.begin(); it != s.end(); ++it)
            if (it.key() != "tail" && it.key() != "ratio" && it.key() != "prefix_weights") err("/space/" + it.key(), "unknown key");
        const std::string tail = s.value("tail", std::string("counting"));
        if (tail == "counting")
            spec.space.tail = tightness::TailLaw::counting;
        else if (tail == "geometric")
            spec.space.tail = tightness::TailLaw::geometric;
        else if (tail == "none")
            spec.space.tail = tightness::TailLaw::none;
        else
            err("/space/tail", "must be counting, geometric or none");
        if (s.contains("ratio")) {
            if (s["ratio"].is_number())
                spec.space.tail_ratio = s["ratio"].get<double>();
            else
                err("/space/ratio", "expected a number");
        }
        if (s.contains("prefix_weights")) {
            if (!s["prefix_weights"].is_array())
                err("/space/prefix_weights", "expected an array of numbers");
            else
                for (std::size_t i = 0; i < s["prefix_weights"].size(); ++i) {
                    const json& w = s["prefix_weights"][i];
                    if (!w.is_number() || !(w.get<double>() > 0.0))
                        err("/space/prefix_weights/" + std::to_string(i), "expected a positive number");
                    else
                        spec.space.prefix_weights.push_back(w.get<double>());
                }
        }
        if (spec.space.tail == tightness::TailLaw::geometric && !(spec.space.tail_ratio > 0.0 && spec.space.tail_ratio <= 1.0))
            err("/space/ratio", "must lie in (0, 1]");
    }
    if (!j.contains("members") || !j["members"].is_array())
        err("/members", "expected an array");
    else
        for (std::size_t i = 0; i < j["members"].size(); ++i) {
            const json& m = j["members"][i];
            const std::string ptr = "/members/" + std::to_string(i);
            if (!m.is_object() || !m.contains("kind") || !m["kind"].is_string()) {
                err(ptr, "expected an object with a string \"kind\"");
                continue;
            }
            const std::string kind = m["kind"];
            const auto num = [&](const char* key, double def) {
                if (!m.contains(key)) return def;
                if (!m[key].is_number()) {
                    err(ptr + "/" + key, "expected a number");
                    return def;
                }
                return m[key].get<double>();
            };
            for (auto it = m.begin(); it != m.end(); ++it)
                if (it.key() != "kind" && it.key() != "amplitude" && it.key() != "ratio" && it.key() != "exponent" &&
                    it.key() != "values")
                    err(ptr + "/" + it.key(), "unknown key");
            if (kind == "zero")
                spec.family.members.push_back(tightness::Member::zero());
            else if (kind == "geometric")
                spec.family.members.push_back(tightness::Member::geometric(num("amplitude", 1.0), num("ratio", 0.5)));
            else if (kind == "power_law")
                spec.family.members.push_back(tightness::Member::power_law(num("amplitude", 1.0), num("exponent", 1.0)));
            else if (kind == "shifting_bump")
                spec.family.members.push_back(tightness::Member::shifting_bump(num("amplitude", 1.0)));
            else if (kind == "explicit") {
                std::vector<double> v;
                if (!m.contains("values") || !m["values"].is_array())
                    err(ptr + "/values", "expected an array of numbers");
                else
                    for (std::size_t k = 0; k < m["values"].size(); ++k) {
                        if (!m["values"][k].is_number())
                            err(ptr + "/values/" + std::to_string(k), "expected a number");
                        else
                            v.push_back(m["values"][k].get<double>());
                    }
                spec.family.members.push_back(tightness::Member::explicit_values(std::move(v)));
            } else
                err(ptr + "/kind", "unknown member kind '" + kind + "'");
        }
    if (!errs.empty()) throw ConfigErrors(errs);
    return spec;
}

inline FamilySpec parse_family_file(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return parse_family_json(json::parse(text));
    } catch (const json::parse_error& e) {
        throw ConfigErrors({std::string("/: malformed JSON: ") + e.what()});
    }
}

struct TightnessOutcome {
    json report;
    bool tight = false;
    bool round_trip_ok = true;  // bound, essinf and converse verified (tight families only)
};

inline TightnessOutcome tightness_round_trip(const FamilySpec& spec) {
    TightnessOutcome out;
    json budgets = json::array();
    tightness::Witness last;
    for (std::size_t b : spec.budgets) {
        last = tightness::is_tight_witness(spec.family, spec.space, spec.n_max, b);
        budgets.push_back({{"budget", b}, {"tight", last.tight}, {"failed_at", last.failed_at}, {"best_tail", last.best_tail},
                           {"report", last.report}});
    }
    out.tight = last.tight;
    out.report = {{"format", "rns-tightness v1"}, {"name", spec.name}, {"p", std::isinf(spec.family.p) ? json("inf") : json(spec.family.p)},
                  {"budgets", budgets}, {"tight", out.tight}};
    if (!out.tight) return out;
    out.report["witness"] = {{"prefix_lengths", last.prefix_lengths}, {"tail_norms", last.tail_norms},
                             {"tolerances", last.tolerances}, {"stabilized", last.stabilized}};
    const auto tr = tightness::build_tightener(spec.family, spec.space, last);
    out.report["tightener"] = {{"sup_weighted_norm", tr.sup_weighted_norm},
                               {"series_bound", tr.series_bound},
                               {"truncated_tail_bound", tr.truncated_tail_bound},
                               {"essinf_verified", tr.essinf_verified},
                               {"bound_verified", tr.bound_verified},
                               {"tail_value", std::isinf(tr.weight.tail) ? json("inf") : json(tr.weight.tail)}};
    const auto conv = tightness::tightness_from_weight(tr.weight, spec.family, spec.space, spec.n_max);
    json rows = json::array();
    for (const auto& r : conv.rows)
        rows.push_back({{"n", r.n}, {"certified", r.certified}, {"prefix_length", r.prefix_length}, {"tail_norm", r.tail_norm},
                        {"bound", r.bound}, {"holds", r.holds}});
    out.report["converse"] = {{"sup_weighted_norm", conv.sup_weighted_norm}, {"rows", rows}, {"all_hold", conv.all_hold}};
    out.round_trip_ok = tr.bound_verified && tr.essinf_verified && conv.all_hold;
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct Options {
    std::string subcommand;
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool strict = false;
    std::string format = "csv";  // report
    std::string dest;            // report
};

struct Outcome {
    int exit_code = exit_ok;
    std::vector<std::string> failed;  // failing check names
    fs::path directory;
    json summary;
};

/// Output root: explicit --out, then the config's directory, then RNS_OUT_DIR/<subcommand>, then ./rns_out/<subcommand>.
inline fs::path resolve_out_dir(const Options& o, const std::string& config_dir) {
    if (!o.out_dir.empty()) return o.out_dir;
    if (!config_dir.empty()) return config_dir;
    if (const char* env = std::getenv("RNS_OUT_DIR"); env && *env) return fs::path(env) / o.subcommand;
    return fs::path("rns_out") / o.subcommand;
}

inline json base_manifest(const Options& o, const RunConfig* cfg, const std::string& started) {
    json m = {{"format", manifest_format}, {"subcommand", o.subcommand}, {"code_version", code_version}, {"started_utc", started}};
    if (cfg) {
        m["config"] = config_to_json(*cfg);
        m["seed"] = cfg->initial_data.seed;
    }
    return m;
}

inline void write_ledger(ArtifactWriter& w, const RunConfig& cfg, const std::string& stem, const EnergyLedger& ledger) {
    const auto& f = cfg.outputs.formats;
    if (std::find(f.begin(), f.end(), "csv") != f.end()) w.write(stem + ".csv", ledger_csv(ledger));
    if (std::find(f.begin(), f.end(), "json") != f.end()) w.write(stem + ".json", ledger_to_json(ledger).dump(1) + "\n");
}

inline Outcome finish_checks(Outcome out, const std::vector<CheckResult>& checks) {
    json arr = json::array();
    for (const auto& c : checks) {
        arr.push_back(to_json(c));
        if (!c.passed) out.failed.push_back(c.name);
    }
    out.summary["checks"] = arr;
    out.summary["checks_passed"] = out.failed.empty();
    if (!out.failed.empty() && out.exit_code == exit_ok) out.exit_code = exit_check_failed;
    return out;
}

inline RunConfig load_config(const Options& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) {
        const std::string text = read_file(o.config_path);
        auto res = parse_config_text(text, o.strict);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
        cfg = res.config;
    }
    if (o.seed) cfg.initial_data.seed = *o.seed;
    return cfg;
}

inline Outcome cmd_run(const Options& o) {
    const RunConfig cfg = load_config(o);
    for (std::size_t i = 0; i < cfg.checks.size(); ++i)
        if (!check_applies(cfg.checks[i], cfg.physics.eps))
            throw ConfigErrors({"/checks/" + std::to_string(i) + ": check '" + cfg.checks[i] + "' does not apply to a run with eps = " +
                                fmt::number(cfg.physics.eps)});
    const std::string started = utc_now();
    Outcome out;
    out.directory = resolve_out_dir(o, cfg.outputs.directory);
    ArtifactWriter w(out.directory);
    const VectorField u0 = initial::make(cfg.grid, cfg.initial_data);
    std::vector<CheckResult> checks;
    json manifest = base_manifest(o, &cfg, started);
    try {
        const Trajectory tr = solve(u0, cfg.physics.eps, cfg.regularizer(), cfg.stepper);
        write_ledger(w, cfg, "ledger", tr.ledger);
        if (cfg.outputs.snapshots)
            for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
                std::ostringstream os;
                snapshot::write(os, tr.snapshots[k]);
                char name[32];
                std::snprintf(name, sizeof name, "snapshot_%04zu.rns", k);
                w.write(name, os.str());
            }
        for (const auto& name : cfg.checks) checks.push_back(evaluate_check(name, tr));
        out.summary["trajectory"] = trajectory_summary(tr);
    } catch (const BlowUpError& e) {
        checks.push_back({"blow_up", false, 0.0, 0.0, e.what()});
    }
    out = finish_checks(std::move(out), checks);
    out.summary["format"] = "rns-summary v1";
    w.write("summary.json", out.summary.dump(2) + "\n");
    manifest["finished_utc"] = utc_now();
    manifest["checks_passed"] = out.failed.empty();
    w.finish(manifest);
    return out;
}

inline Outcome cmd_sweep(const Options& o, limit::Axis axis) {
    const RunConfig cfg = load_config(o);
    const std::string started = utc_now();
    Outcome out;
    out.directory = resolve_out_dir(o, cfg.outputs.directory);
    ArtifactWriter w(out.directory);
    const VectorField u0 = initial::make(cfg.grid, cfg.initial_data);
    limit::SweepPlan plan;
    plan.axis = axis;
    plan.values = axis == limit::Axis::eps ? cfg.sweep.eps_values : cfg.sweep.lambda_values;
    plan.stepper = cfg.stepper;
    plan.eps = axis == limit::Axis::eps ? 0.0 : cfg.physics.eps;
    plan.params = cfg.regularizer();
    plan.reference = cfg.sweep.reference == "finest_run" ? limit::ReferencePolicy::finest_run : limit::ReferencePolicy::limit_run;
    const limit::SweepResult res = limit::run_sweep(u0, plan);
    const auto& rep = res.report;
    w.write("convergence.csv", convergence_csv(rep));
    w.write("convergence.json", convergence_json(rep).dump(2) + "\n");
    if (res.reference) write_ledger(w, cfg, "ledger", res.reference->ledger);
    std::vector<CheckResult> checks;
    if (rep.aborted) checks.push_back({"blow_up", false, 0.0, 0.0, rep.abort_reason});
    std::vector<const Trajectory*> all;
    for (const auto& t : res.runs) all.push_back(&t);
    if (res.reference && plan.reference == limit::ReferencePolicy::limit_run) all.push_back(&*res.reference);
    for (const auto& name : cfg.checks) {
        if (name == "sweep_monotone") {
            checks.push_back({name, rep.all_monotone && !rep.aborted, 0.0, 0.0, "every gap column strictly decreasing"});
            continue;
        }
        if (name == "sqrt_eps_bound") {
            if (axis != limit::Axis::eps) throw ConfigErrors({"/checks: sqrt_eps_bound applies to sweep-eps only"});
            double first = rep.entries.empty() ? 0.0 : rep.entries.front().sqrt_eps_weighted, mx = 0.0;
            for (const auto& e : rep.entries) mx = std::max(mx, e.sqrt_eps_weighted);
            checks.push_back({name, mx <= 2.0 * first, first > 0.0 ? mx / first : 0.0, 2.0, "max over sweep / value at largest eps"});
            continue;
        }
        // Trajectory checks: worst case over the runs they apply to.
        std::optional<CheckResult> worst;
        for (const Trajectory* t : all) {
            if (!check_applies(name, t->eps)) continue;
            CheckResult c = evaluate_check(name, *t);
            if (!worst || (!c.passed && worst->passed) || (c.passed == worst->passed && c.value > worst->value)) worst = c;
        }
        if (worst) checks.push_back(*worst);
    }
    out = finish_checks(std::move(out), checks);
    out.summary["format"] = "rns-summary v1";
    w.write("summary.json", out.summary.dump(2) + "\n");
    json manifest = base_manifest(o, &cfg, started);
    manifest["finished_utc"] = utc_now();
    manifest["checks_passed"] = out.failed.empty();
    w.finish(manifest);
    return out;
}

inline Outcome cmd_audit(const Options& o, std::ostream& os) {
    const auto audit = diag::exponent_audit();
    json j = {{"format", "rns-exponents v1"}, {"table", exponent_table_json(audit.table)}, {"passed", audit.passed}};
    json checks = json::array();
    for (const auto& [name, passed] : audit.checks) checks.push_back({{"name", name}, {"passed", passed}});
    j["checks"] = checks;
    os << j.dump(2) << '\n';
    Outcome out;
    out.summary = j;
    for (const auto& [name, passed] : audit.checks)
        if (!passed) out.failed.push_back(name);
    if (!o.out_dir.empty()) {
        out.directory = o.out_dir;
        ArtifactWriter w(out.directory);
        w.write("exponents.json", j.dump(2) + "\n");
        json manifest = base_manifest(o, nullptr, utc_now());
        manifest["finished_utc"] = utc_now();
        manifest["checks_passed"] = out.failed.empty();
        w.finish(manifest);
    }
    out.exit_code = out.failed.empty() ? exit_ok : exit_check_failed;
    return out;
}

inline Outcome cmd_tightness(const Options& o) {
    if (o.config_path.empty()) throw ConfigErrors({"/: tightness-test requires --config FAMILY.json"});
    const FamilySpec spec = parse_family_file(o.config_path);
    const std::string started = utc_now();
    const TightnessOutcome t = tightness_round_trip(spec);
    Outcome out;
    out.summary = t.report;
    if (!t.round_trip_ok) out.failed.push_back("tightness_round_trip");
    out.directory = resolve_out_dir(o, "");
    ArtifactWriter w(out.directory);
    w.write("tightness.json", t.report.dump(2) + "\n");
    json manifest = base_manifest(o, nullptr, started);
    manifest["family"] = spec.name;
    manifest["finished_utc"] = utc_now();
    manifest["checks_passed"] = out.failed.empty();
    w.finish(manifest);
    out.exit_code = out.failed.empty() ? exit_ok : exit_check_failed;
    return out;
}

// ---------------------------------------------------------------------------
// Report export

/// Reads and verifies a manifest: every listed artifact must exist with the recorded checksum.
inline json verify_manifest(const fs::path& dir) {
    const fs::path mp = dir / manifest_name;
    if (!fs::exists(mp)) throw IoError("missing manifest in '" + dir.string() + "'");
    json m;
    try {
        m = json::parse(read_file(mp));
        if (m.at("format") != manifest_format) throw IoError("manifest: unsupported format");
        for (const json& a : m.at("artifacts")) {
            const std::string name = a.at("name");
            const fs::path p = dir / name;
            if (!fs::exists(p)) throw IoError("manifest: artifact '" + name + "' is missing");
            if (sha256_hex(read_file(p)) != a.at("sha256").get<std::string>())
                throw IoError("manifest: checksum mismatch for '" + name + "'");
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("corrupt manifest: ") + e.what());
    }
    return m;
}

/// Report text for a verified run directory. Deterministic: no timestamps, fixed key order.
inline std::string export_report_text(const fs::path& dir, const std::string& format) {
    if (format != "csv" && format != "json") throw ConfigError("report: format must be csv or json");
    const json m = verify_manifest(dir);
    bool has_csv = false, has_json = false;
    for (const json& a : m.at("artifacts")) {
        has_csv = has_csv || a.at("name") == "ledger.csv";
        has_json = has_json || a.at("name") == "ledger.json";
    }
    EnergyLedger ledger;
    if (has_csv) {
        std::istringstream is(read_file(dir / "ledger.csv"));
        ledger = read_ledger_csv(is);
    } else if (has_json) {
        try {
            ledger = ledger_from_json(json::parse(read_file(dir / "ledger.json")));
        } catch (const json::parse_error& e) {
            throw IoError(std::string("ledger json: ") + e.what());
        }
    } else {
        throw IoError("report: run directory has no ledger");
    }
    if (format == "csv") return ledger_csv(ledger);
    json j = ledger_to_json(ledger);
    j["format"] = "rns-report v1";
    j["subcommand"] = m.value("subcommand", "");
    if (fs::exists(dir / "summary.json")) {
        const json s = json::parse(read_file(dir / "summary.json"), nullptr, false);
        if (s.is_discarded()) throw IoError("report: corrupt summary.json");
        if (s.contains("checks")) j["checks"] = s["checks"];
    }
    return j.dump(1) + "\n";
}

/// Writes report.<format> into dest (default: <run dir>/export). Run artifacts are never modified.
inline fs::path export_report(const fs::path& dir, const std::string& format, const fs::path& dest = {}) {
    const std::string text = export_report_text(dir, format);
    const fs::path d = dest.empty() ? dir / "export" : dest;
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create '" + d.string() + "'");
    const fs::path p = d / ("report." + format);
    write_atomic(p, text);
    return p;
}

inline Outcome cmd_report(const Options& o) {
    if (o.out_dir.empty()) throw ConfigErrors({"/: report requires --out RUN_DIR"});
    Outcome out;
    out.directory = export_report(o.out_dir, o.format, o.dest);
    return out;
}

/// Dispatches a subcommand; maps library errors onto exit codes and writes diagnostics to err.
inline int run(const Options& o, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
    parallel::set_threads(o.threads);
    try {
        Outcome out;
        if (o.subcommand == "run")
            out = cmd_run(o);
        else if (o.subcommand == "sweep-eps")
            out = cmd_sweep(o, limit::Axis::eps);
        else if (o.subcommand == "sweep-lambda")
            out = cmd_sweep(o, limit::Axis::lambda);
        else if (o.subcommand == "audit-exponents")
            out = cmd_audit(o, os);
        else if (o.subcommand == "tightness-test")
            out = cmd_tightness(o);
        else if (o.subcommand == "report")
            out = cmd_report(o);
        else {
            err << "unknown subcommand '" << o.subcommand << "'\n";
            return exit_usage;
        }
        if (!out.failed.empty()) {
            err << "failed checks:";
            for (const auto& f : out.failed) err << ' ' << f;
            err << '\n';
            return exit_check_failed;
        }
        if (!out.directory.empty() && o.subcommand != "audit-exponents") os << out.directory.string() << '\n';
        return out.exit_code;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return exit_io;
    } catch (const ConfigError& e) {
        err << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_check_failed;
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << '\n';
        return exit_io;
    }
}

}  // namespace rns::cli
