// Command-line driver: every experiment is a subcommand taking a JSON config
// plus seed/workers/output overrides. Exit codes: 0 success, 1 internal
// error, 2 config or precondition error (with a JSON error object on stdout).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmlab/experiments.hpp"

namespace {

using nlohmann::json;

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out_path;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw rmlab::ConfigInvalid("cannot open config file: " + path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw rmlab::ConfigInvalid(std::string("config parse error: ") + e.what());
    }
    return cfg;
}

void write_output(const rmlab::experiments::Output& out, const std::string& out_path) {
    const std::string document = out.document();
    if (out_path.empty()) {
        std::fputs(document.c_str(), stdout);
        return;
    }
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw rmlab::ExperimentFailed("cannot write output file: " + out_path);
    f << document;
    if (!out.report.is_null()) {
        std::string report_path = out_path;
        const auto dot = report_path.rfind(".csv");
        if (dot != std::string::npos && dot == report_path.size() - 4)
            report_path = report_path.substr(0, dot);
        report_path += ".json";
        std::ofstream r(report_path, std::ios::binary);
        r << out.report.dump(2) << "\n";
    }
}

int fail(const char* kind, const std::string& message, int code) {
    const json err = {{"error", kind}, {"message", message}};
    std::fputs((err.dump() + "\n").c_str(), stdout);
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for products of 2x2 random matrices"};
    app.require_subcommand(1);

    const std::vector<std::string> experiments = {"le",     "ldt",      "irred", "prison", "ap",  "bridge",
                                                  "transfer", "pressure", "ids",   "thouless", "toy"};

    CommonArgs args;
    std::string sweep_param;
    std::string sweep_values;

    std::string chosen;
    CLI::App* active = nullptr;
    for (const auto& name : experiments) {
        auto* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
        sub->add_option("--config", args.config_path, "JSON config file");
        sub->add_option("--seed", args.seed, "base RNG seed");
        sub->add_option("--workers", args.workers, "worker pool size");
        sub->add_option("--out", args.out_path, "output CSV path (stdout when omitted)");
        sub->callback([&chosen, &active, name, sub] {
            chosen = name;
            active = sub;
        });
    }
    auto* sw = app.add_subcommand("sweep", "run one experiment across parameter values");
    sw->add_option("--config", args.config_path, "JSON config file (must name the experiment)");
    sw->add_option("--param", sweep_param, "dotted config path to sweep, e.g. cocycle.eta")->required();
    sw->add_option("--values", sweep_values, "comma-separated JSON values")->required();
    sw->add_option("--seed", args.seed, "base RNG seed");
    sw->add_option("--workers", args.workers, "worker pool size");
    sw->add_option("--out", args.out_path, "output CSV path (stdout when omitted)");
    sw->callback([&chosen, &active, sw] {
        chosen = "sweep";
        active = sw;
    });

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg = load_config(args.config_path);
        // config-level seed/workers/out are defaults; flags override
        if (cfg.contains("seed")) {
            if (active == nullptr || active->count("--seed") == 0)
                args.seed = cfg.at("seed").get<std::uint64_t>();
            cfg.erase("seed");
        }
        if (cfg.contains("workers")) {
            if (active == nullptr || active->count("--workers") == 0)
                args.workers = cfg.at("workers").get<int>();
            cfg.erase("workers");
        }
        if (cfg.contains("out")) {
            if (args.out_path.empty()) args.out_path = cfg.at("out").get<std::string>();
            cfg.erase("out");
        }

        if (chosen == "sweep") {
            const std::string name = cfg.value("experiment", "");
            if (name.empty()) throw rmlab::ConfigInvalid("sweep: config must name the experiment");
            std::vector<json> values;
            std::stringstream ss(sweep_values);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (item.empty()) continue;
                values.push_back(json::parse(item));
            }
            const auto out = rmlab::experiments::sweep(name, cfg, sweep_param, values, args.seed, args.workers);
            write_output(out, args.out_path);
            return 0;
        }

        const auto out = rmlab::experiments::run_experiment(chosen, cfg, args.seed, args.workers);
        write_output(out, args.out_path);
        return 0;
    } catch (const rmlab::ConfigInvalid& e) {
        return fail("ConfigInvalid", e.what(), 2);
    } catch (const rmlab::ZeroRho& e) {
        return fail("ZeroRho", e.what(), 2);
    } catch (const rmlab::ZeroLyapunov& e) {
        return fail("ZeroLyapunov", e.what(), 2);
    } catch (const rmlab::LedgerInfeasible& e) {
        return fail("LedgerInfeasible", e.what(), 2);
    } catch (const rmlab::GridTooNarrow& e) {
        return fail("GridTooNarrow", e.what(), 2);
    } catch (const nlohmann::json::exception& e) {
        return fail("ConfigInvalid", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("InternalError", e.what(), 1);
    }
}
