#include <CLI11.hpp>

#include "rns/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Regularized Navier-Stokes desk-scale lab"};
    app.require_subcommand(1, 1);
    rns::cli::Options opt;
    std::uint64_t seed = 0;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "configuration JSON")->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out_dir, "output directory (default: $RNS_OUT_DIR/<subcommand>)");
        sub->add_option("--seed", seed, "override initial_data.seed");
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("--strict", opt.strict, "unknown configuration keys are errors");
    };
    for (const char* name : {"run", "sweep-eps", "sweep-lambda", "audit-exponents", "tightness-test"}) {
        CLI::App* sub = app.add_subcommand(name);
        common(sub);
    }
    CLI::App* report = app.add_subcommand("report", "export the ledger of a completed run directory");
    report->add_option("--out", opt.out_dir, "run directory")->required();
    report->add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    report->add_option("--dest", opt.dest, "destination directory (default: <run dir>/export)");
    report->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : rns::cli::exit_usage;
    }
    CLI::App* chosen = app.get_subcommands().front();
    opt.subcommand = chosen->get_name();
    if (opt.subcommand != "report" && chosen->count("--seed")) opt.seed = seed;
    return rns::cli::run(opt);
}
