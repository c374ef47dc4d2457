#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rns/config.hpp"
#include "rns/runner.hpp"

using namespace rns;
using namespace rns::cli;
namespace fs = std::filesystem;

namespace {

std::string fixture(const std::string& name) { return std::string(RNS_FIXTURE_DIR) + "/" + name; }

/// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("rns_test_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

int run_quiet(const Options& o, std::string* out = nullptr, std::string* err = nullptr) {
    std::ostringstream os, es;
    const int code = rns::cli::run(o, os, es);
    if (out) *out = os.str();
    if (err) *err = es.str();
    return code;
}

/// Small, fast run configuration for tests that only need artifacts.
std::string small_config(const fs::path& dir, const std::string& extra = "") {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << R"({"grid": {"n": 8}, "stepper": {"dt": 0.01, "t_end": 0.05, "snapshot_stride": 1})" << extra << "}";
    return p.string();
}

}  // namespace

TEST(Config, EmptyObjectGivesDocumentedDefaults) {
    const ParseResult r = parse_config_text(rns::cli::read_file(fixture("minimal_config.json")));
    EXPECT_EQ(r.config, RunConfig{});
    EXPECT_TRUE(r.warnings.empty());
    const RunConfig& c = r.config;
    EXPECT_EQ(c.grid.n, 32);
    EXPECT_EQ(c.stepper.scheme, Scheme::imex_bdf2);
    EXPECT_EQ(c.stepper.dt, 1e-3);
    EXPECT_EQ(c.stepper.t_end, 0.5);
    EXPECT_EQ(c.physics.eps, 0.0);
    EXPECT_EQ(c.physics.lambda, 1.0);
    EXPECT_EQ(c.initial_data.recipe, "taylor_green");
    EXPECT_EQ(c.sweep.reference, "limit_run");
}

TEST(Config, GoldenFixtureParses) {
    const RunConfig c = parse_config(fixture("golden_config.json"));
    RunConfig expect;
    expect.checks = {"l2_identity", "grad_identity", "renorm_identity", "central_estimate",
                     "divergence",  "energy_monotone", "mean_invariant"};
    EXPECT_EQ(c, expect);
}

TEST(Config, CanonicalJsonRoundTrip) {
    RunConfig c;
    c.grid.n = 16;
    c.stepper.dt = 0.005;
    c.stepper.scheme = Scheme::imex_euler;
    c.physics.eps = 0.25;
    c.physics.custom_rho = "gaussian";
    c.sweep.lambda_values = {2.0, 1.0, 0.5};
    c.outputs.formats = {"json"};
    c.checks = {"weighted_positive"};
    EXPECT_EQ(parse_config_json(config_to_json(c)).config, c);
}

TEST(Config, ZeroStepNamesItsPointer) {
    try {
        parse_config_text(R"({"stepper": {"dt": 0}})");
        FAIL() << "expected ConfigErrors";
    } catch (const ConfigErrors& e) {
        ASSERT_EQ(e.problems().size(), 1u);
        EXPECT_EQ(e.problems()[0].rfind("/stepper/dt", 0), 0u) << e.problems()[0];
    }
}

TEST(Config, ErrorsAreAggregated) {
    try {
        parse_config_text(R"({"grid": {"n": 7}, "physics": {"eps": -1, "custom_rho": "nope"}, "checks": ["l2_identity", "bogus"]})");
        FAIL() << "expected ConfigErrors";
    } catch (const ConfigErrors& e) {
        const auto& p = e.problems();
        ASSERT_EQ(p.size(), 4u);
        const auto has = [&](const std::string& ptr) {
            return std::any_of(p.begin(), p.end(), [&](const std::string& m) { return m.rfind(ptr, 0) == 0; });
        };
        EXPECT_TRUE(has("/grid/n"));
        EXPECT_TRUE(has("/physics/eps"));
        EXPECT_TRUE(has("/physics/custom_rho"));
        EXPECT_TRUE(has("/checks/1"));
    }
}

TEST(Config, UnknownKeysStrictVersusLenient) {
    const std::string text = R"({"grid": {"n": 16, "colour": "blue"}, "extra": 1})";
    EXPECT_THROW(parse_config_text(text, true), ConfigErrors);
    const ParseResult r = parse_config_text(text, false);
    EXPECT_EQ(r.config.grid.n, 16);
    EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(Config, RejectsMalformedAndNonIntegralTimeGrid) {
    EXPECT_THROW(parse_config_text("{\"grid\": "), ConfigErrors);
    EXPECT_THROW(parse_config_text(R"({"stepper": {"dt": 0.3, "t_end": 1.0}})"), ConfigErrors);
    EXPECT_THROW(parse_config_text(R"({"sweep": {"eps_values": [0.1, 0.2, 0.01]}})"), ConfigErrors);
    EXPECT_THROW(parse_config("/nonexistent/config.json"), IoError);
}

TEST(Ledger, CsvAndJsonRoundTripBitwise) {
    EnergyLedger l;
    l.r = central_r;
    l.eps = 0.01;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ud(-1e3, 1e3);
    for (int i = 0; i < 7; ++i) {
        LedgerRow row;
        for (const auto& col : ledger_columns) row.*(col.member) = ud(rng) * std::pow(10.0, i - 3);
        l.rows.push_back(row);
    }
    std::istringstream is(ledger_csv(l));
    const EnergyLedger a = read_ledger_csv(is);
    const EnergyLedger b = ledger_from_json(json::parse(ledger_to_json(l).dump()));
    EXPECT_EQ(a.rows, l.rows);
    EXPECT_EQ(b.rows, l.rows);
    EXPECT_EQ(a.r, l.r);
    EXPECT_EQ(b.eps, l.eps);
    EXPECT_EQ(ledger_csv(a), ledger_csv(b));
}

TEST(Ledger, EmptyLedgerIsHeaderOnly) {
    EnergyLedger l;
    const std::string csv = ledger_csv(l);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    std::istringstream is(csv);
    EXPECT_TRUE(read_ledger_csv(is).rows.empty());
}

TEST(Ledger, RejectsCorruptCsv) {
    std::istringstream a("not a ledger\n");
    EXPECT_THROW(read_ledger_csv(a), IoError);
    std::string csv = ledger_csv(EnergyLedger{});
    csv += "1,2,3\n";
    std::istringstream b(csv);
    EXPECT_THROW(read_ledger_csv(b), IoError);
}

TEST(Cli, RunWritesManifestedArtifacts) {
    TempDir tmp;
    Options o;
    o.subcommand = "run";
    o.config_path = small_config(tmp.path);
    o.out_dir = (tmp.path / "run").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    for (const char* f : {"ledger.csv", "ledger.json", "summary.json", "manifest.json"}) EXPECT_TRUE(fs::exists(tmp.path / "run" / f)) << f;
    const json m = verify_manifest(tmp.path / "run");
    EXPECT_EQ(m.at("format"), "rns-manifest v1");
    EXPECT_EQ(m.at("code_version"), code_version);
    EXPECT_FALSE(fs::exists(tmp.path / "run" / ".rns.lock"));
}

TEST(Cli, InapplicableCheckIsUsageError) {
    TempDir tmp;
    Options o;
    o.subcommand = "run";
    o.config_path = small_config(tmp.path, R"(, "checks": ["renorm_identity"], "physics": {"eps": 0.1})");
    o.out_dir = (tmp.path / "run").string();
    std::string err;
    EXPECT_EQ(run_quiet(o, nullptr, &err), exit_usage);
    EXPECT_NE(err.find("/checks/0"), std::string::npos);
}

TEST(Cli, CorruptManifestIsIoError) {
    TempDir tmp;
    Options o;
    o.subcommand = "run";
    o.config_path = small_config(tmp.path);
    o.out_dir = (tmp.path / "run").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    Options rep;
    rep.subcommand = "report";
    rep.out_dir = o.out_dir;
    rep.dest = (tmp.path / "exp").string();
    EXPECT_EQ(run_quiet(rep), exit_ok);
    // tamper with an artifact: checksum mismatch
    std::ofstream(tmp.path / "run" / "ledger.csv", std::ios::app) << "0\n";
    EXPECT_EQ(run_quiet(rep), exit_io);
    // truncated manifest
    std::ofstream(tmp.path / "run" / "manifest.json") << "{\"format\": ";
    EXPECT_EQ(run_quiet(rep), exit_io);
    fs::remove(tmp.path / "run" / "manifest.json");
    EXPECT_EQ(run_quiet(rep), exit_io);
}

TEST(Cli, ReportIsIdempotentAndFormatsAgree) {
    TempDir tmp;
    Options o;
    o.subcommand = "run";
    o.config_path = small_config(tmp.path);
    o.out_dir = (tmp.path / "run").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    const fs::path first = export_report(o.out_dir, "csv");
    const std::string a = read_file(first);
    const fs::path second = export_report(o.out_dir, "csv");
    EXPECT_EQ(first, second);
    EXPECT_EQ(read_file(second), a);
    EXPECT_EQ(a, read_file(tmp.path / "run" / "ledger.csv"));
    const json j = json::parse(export_report_text(o.out_dir, "json"));
    EXPECT_EQ(j.at("format"), "rns-report v1");
    json as_ledger = j;
    as_ledger["format"] = ledger_to_json(EnergyLedger{})["format"];
    EXPECT_EQ(ledger_csv(ledger_from_json(as_ledger)), a);
    EXPECT_TRUE(j.contains("checks"));
    // exporting never invalidates the run directory
    EXPECT_NO_THROW(verify_manifest(o.out_dir));
    EXPECT_THROW(export_report_text(o.out_dir, "xml"), ConfigError);
}

TEST(Cli, GoldenReportIsByteIdentical) {
    TempDir tmp;
    Options o;
    o.subcommand = "run";
    o.config_path = fixture("golden_config.json");
    o.out_dir = (tmp.path / "golden").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    EXPECT_EQ(export_report_text(o.out_dir, "csv"), read_file(fixture("golden_report.csv")));
}

TEST(Cli, AuditExitsCleanlyAndPrintsJson) {
    Options o;
    o.subcommand = "audit-exponents";
    std::string out;
    ASSERT_EQ(run_quiet(o, &out), exit_ok);
    const json j = json::parse(out);
    EXPECT_TRUE(j.at("passed").get<bool>());
    EXPECT_NEAR(j.at("table").at("a").get<double>(), diag::exponent_table().a, 1e-12);
}

TEST(Cli, TightnessFamilies) {
    TempDir tmp;
    Options o;
    o.subcommand = "tightness-test";
    o.config_path = fixture("geometric_family.json");
    o.out_dir = (tmp.path / "geo").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    const json g = json::parse(read_file(tmp.path / "geo" / "tightness.json"));
    EXPECT_TRUE(g.at("tight").get<bool>());
    EXPECT_TRUE(g.at("converse").at("all_hold").get<bool>());
    EXPECT_LE(g.at("tightener").at("sup_weighted_norm").get<double>(), g.at("tightener").at("series_bound").get<double>());

    o.config_path = fixture("shifting_bump_family.json");
    o.out_dir = (tmp.path / "bump").string();
    ASSERT_EQ(run_quiet(o), exit_ok);
    const json b = json::parse(read_file(tmp.path / "bump" / "tightness.json"));
    EXPECT_FALSE(b.at("tight").get<bool>());
    for (const json& row : b.at("budgets")) EXPECT_FALSE(row.at("tight").get<bool>());
}

TEST(Cli, FamilyFormatValidation) {
    EXPECT_THROW(parse_family_json(json::parse(R"({"format": "rns-family v1", "p": 0.5, "members": []})")), ConfigError);
    EXPECT_THROW(parse_family_json(json::parse(R"({"format": "other"})")), ConfigError);
    EXPECT_THROW(parse_family_json(json::parse(R"({"format": "rns-family v1", "members": [{"kind": "spiral"}]})")), ConfigError);
    const FamilySpec s = parse_family_json(
        json::parse(R"({"format": "rns-family v1", "p": "inf", "space": {"tail": "counting"}, "n_max": 10, "members": [{"kind": "power_law", "amplitude": 1, "exponent": 1}]})"));
    EXPECT_TRUE(std::isinf(s.family.p));
    EXPECT_TRUE(tightness_round_trip(s).tight);
    // m(n) = 2^n - 1 outgrows a budget of 1000 at n = 10
    FamilySpec small = s;
    small.budgets = {1000};
    EXPECT_FALSE(tightness_round_trip(small).tight);
}

TEST(Cli, OutputDirectoryResolution) {
    Options o;
    o.subcommand = "run";
    o.out_dir = "explicit";
    EXPECT_EQ(resolve_out_dir(o, "from_config"), fs::path("explicit"));
    o.out_dir.clear();
    EXPECT_EQ(resolve_out_dir(o, "from_config"), fs::path("from_config"));
    ::setenv("RNS_OUT_DIR", "/tmp/envroot", 1);
    EXPECT_EQ(resolve_out_dir(o, ""), fs::path("/tmp/envroot") / "run");
    ::unsetenv("RNS_OUT_DIR");
    EXPECT_EQ(resolve_out_dir(o, ""), fs::path("rns_out") / "run");
}

TEST(Cli, LockedDirectoryIsRefused) {
    TempDir tmp;
    fs::create_directories(tmp.path / "run");
    std::ofstream(tmp.path / "run" / ".rns.lock") << "held";
    Options o;
    o.subcommand = "run";
    o.config_path = small_config(tmp.path);
    o.out_dir = (tmp.path / "run").string();
    EXPECT_EQ(run_quiet(o), exit_io);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
    Options o;
    o.subcommand = "frobnicate";
    EXPECT_EQ(run_quiet(o), exit_usage);
}
