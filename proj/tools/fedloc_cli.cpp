// fedloc: command-line front end for the localization experiments.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.

#include "fedloc/config.hpp"
#include "fedloc/runner.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

using namespace fedloc;
namespace fs = std::filesystem;

/// Config sources and per-flag overrides shared by every subcommand.
struct ConfigOptions {
    std::string config_path;
    std::string preset;
    std::string data_dir;
    std::uint64_t seed = 0;
    std::size_t clients = 0;
    std::size_t rounds = 0;
    std::size_t epochs = 0;
    std::size_t batch = 0;
    std::size_t workers = 0;
    double lr = 0.0;
    double tau = 0.0;
    std::string partition;
    std::string wiring;
    std::string mde_variant;
    bool adam_conventional = false;
    bool local_sgd = false;
    std::map<std::string, CLI::Option*> given;

    void attach(CLI::App* app) {
        given["config"] = app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        given["preset"] = app->add_option("--preset", preset, "committed preset: table1, table4, scalability");
        given["data-dir"] =
            app->add_option("--data-dir", data_dir, "directory with the survey CSVs (default: $FEDLOC_DATA_DIR)");
        given["seed"] = app->add_option("--seed", seed, "base seed");
        given["clients"] = app->add_option("--clients", clients, "number of federated clients");
        given["rounds"] = app->add_option("--rounds", rounds, "maximum communication rounds");
        given["epochs"] =
            app->add_option("--epochs", epochs, "training epochs (central) or local epochs per round (federated)");
        given["batch"] = app->add_option("--batch", batch, "mini-batch size");
        given["workers"] = app->add_option("--workers", workers, "concurrent client trainers (0 = all cores)");
        given["lr"] = app->add_option("--lr", lr, "learning rate");
        given["tau"] = app->add_option("--tau", tau, "AP visibility threshold");
        given["partition"] = app->add_option("--partition", partition, "client partition")
                                 ->check(CLI::IsMember({"iid", "by-user", "by-building"}));
        given["wiring"] = app->add_option("--wiring", wiring, "head wiring")
                              ->check(CLI::IsMember({"concat-probs", "concat-logits", "flat"}));
        given["mde-variant"] = app->add_option("--mde-variant", mde_variant, "headline 2D-MDE")
                                   ->check(CLI::IsMember({"correct-subset", "eq6-as-printed"}));
        given["adam-conventional"] =
            app->add_flag("--adam-conventional", adam_conventional, "use Adam betas 0.9 / 0.999");
        given["local-sgd"] = app->add_flag("--local-sgd", local_sgd, "plain SGD for federated local updates");
    }

    [[nodiscard]] bool has(const std::string& flag) const { return given.at(flag)->count() > 0; }

    [[nodiscard]] RunConfig resolve(std::optional<run::Mode> mode = std::nullopt) const {
        json file_layer = json::object();
        const json schema = to_json(RunConfig{});
        if (has("preset")) {
            file_layer.merge_patch(load_preset(preset));
        }
        if (has("config")) {
            file_layer.merge_patch(read_json_file(config_path));
        }
        json o = json::object();
        if (has("data-dir")) {
            o["data"]["dir"] = data_dir;
        }
        if (has("seed")) {
            o["seed"] = seed;
        }
        if (has("clients")) {
            o["federation"]["clients"] = clients;
        }
        if (has("rounds")) {
            o["federation"]["rounds"] = rounds;
        }
        if (has("epochs")) {
            if (mode == run::Mode::federated) {
                o["federation"]["local_epochs"] = epochs;
            } else {
                o["train"]["epochs"] = epochs;
            }
        }
        if (has("batch")) {
            o["train"]["batch_size"] = batch;
        }
        if (has("workers")) {
            o["federation"]["workers"] = workers;
        }
        if (has("lr")) {
            o["train"]["lr"] = lr;
        }
        if (has("tau")) {
            o["preprocess"]["visibility_threshold"] = tau;
        }
        if (has("partition")) {
            o["federation"]["partition"] = partition;
        }
        if (has("wiring")) {
            o["model"]["wiring"] = wiring;
        }
        if (has("mde-variant")) {
            o["metrics"]["mde_variant"] = mde_variant;
        }
        if (adam_conventional) {
            o["train"]["adam_conventional"] = true;
        }
        if (local_sgd) {
            o["federation"]["local_optimizer"] = "sgd";
        }
        return resolve_config(file_layer, o);
    }
};

void print_metrics(const json& m) {
    auto line = [](const char* name, const json& t) {
        if (t.is_null()) {
            return;
        }
        std::cout << name << ": B-ACC=" << t["b_acc"].get<double>() << " F-ACC=" << t["f_acc"].get<double>()
                  << " ACC=" << t["acc"].get<double>()
                  << " 2D-MDE(correct-subset)=" << t["mde2d_correct_subset"].get<double>()
                  << " 2D-MDE(eq6-as-printed)=" << t["mde2d_eq6_as_printed"].get<double>()
                  << " 3D-MDE=" << t["mde3d"].get<double>() << "\n";
    };
    if (m.contains("test")) {
        line("test", m["test"]);
        line("validation", m["validation"]);
    }
}

int exit_code_for(const fedloc::Error& e) {
    switch (e.kind()) {
        case ErrorKind::usage: return 1;
        case ErrorKind::data: return 2;
        case ErrorKind::numeric: return 3;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical and federated indoor localization from Wi-Fi fingerprints", "fedloc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", run::kVersion);

    // preprocess
    ConfigOptions pre_opts;
    std::string pre_out = "processed";
    auto* pre = app.add_subcommand("preprocess", "AP selection, powed transform and split; writes a cache");
    pre_opts.attach(pre);
    pre->add_option("--out", pre_out, "cache directory");

    // train
    ConfigOptions train_opts;
    std::string mode_name;
    std::string train_out;
    bool print_config = false;
    bool quiet = false;
    auto* train = app.add_subcommand("train", "train central, federated or hierbase and write a run directory");
    train->add_option("mode", mode_name, "central | federated | hierbase")
        ->required()
        ->check(CLI::IsMember({"central", "federated", "hierbase"}));
    train_opts.attach(train);
    train->add_option("--out", train_out, "run directory (default: runs/<mode>)");
    train->add_flag("--print-config", print_config, "print the resolved configuration and exit");
    train->add_flag("--quiet", quiet, "no per-round progress on stderr");

    // eval
    std::string eval_checkpoint;
    std::string eval_run;
    std::string eval_csv;
    std::string eval_out;
    ConfigOptions eval_opts;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a survey CSV");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
    eval->add_option("--run", eval_run, "run directory (uses <run>/checkpoint)");
    eval->add_option("--csv", eval_csv, "survey CSV (default: validation file of the dataset directory)");
    eval->add_option("--out", eval_out, "write metrics JSON here as well");
    eval_opts.attach(eval);

    // report
    std::vector<std::string> report_runs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "comparison table over run directories");
    report->add_option("runs", report_runs, "run directories; the first is the baseline");
    report->add_option("--out", report_out, "CSV destination (default: stdout)");

    // comm-budget
    ConfigOptions budget_opts;
    std::size_t max_clients = 128;
    std::string budget_out;
    auto* budget = app.add_subcommand("comm-budget", "per-round communication load and channel feasibility");
    budget_opts.attach(budget);
    budget->add_option("--max-clients", max_clients, "largest client count in the table");
    budget->add_option("--out", budget_out, "CSV destination (default: stdout)");

    // param-count
    ConfigOptions count_opts;
    auto* count = app.add_subcommand("param-count", "trainable parameters of the configured network");
    count_opts.attach(count);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*pre) {
            const auto cfg = pre_opts.resolve();
            const auto s = run::preprocess(cfg, pre_out);
            std::cout << "stage0=" << s.selection.original << "\n";
            std::cout << "stage1=" << s.selection.after_all_missing << ", stage2=" << s.selection.after_visibility
                      << "\n";
            std::cout << "min_rssi=" << s.min_rssi << "\n";
            std::cout << "train=" << s.train_records << ", test=" << s.test_records;
            if (s.validation_records) {
                std::cout << ", validation=" << *s.validation_records;
            }
            std::cout << "\ncache_checksum=" << s.cache_checksum << "\n";
        } else if (*train) {
            const auto mode = run::parse_mode(mode_name);
            const auto cfg = train_opts.resolve(mode);
            if (print_config) {
                std::cout << to_json(cfg).dump(2) << "\n";
                return 0;
            }
            const fs::path out = train_out.empty() ? fs::path("runs") / mode_name : fs::path(train_out);
            const json m = run::train(cfg, mode, out, quiet ? nullptr : &std::cerr);
            print_metrics(m);
            std::cout << "run directory: " << out.string() << "\n";
        } else if (*eval) {
            fs::path checkpoint = eval_checkpoint;
            if (checkpoint.empty()) {
                if (eval_run.empty()) {
                    throw UsageError("eval needs --checkpoint or --run");
                }
                checkpoint = fs::path(eval_run) / "checkpoint";
            }
            fs::path csv = eval_csv;
            if (csv.empty()) {
                const auto cfg = eval_opts.resolve();
                csv = run::resolve_data_dir(cfg) / cfg.data.validation_file;
            }
            const json m = run::evaluate_checkpoint(checkpoint, csv);
            if (!eval_out.empty()) {
                run::write_json(eval_out, m);
            }
            std::cout << m.dump(2) << "\n";
        } else if (*report) {
            std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
            const std::string csv = run::report_csv(dirs);
            if (report_out.empty()) {
                std::cout << csv;
            } else {
                io::write_file(report_out, csv);
            }
        } else if (*budget) {
            const std::string csv = run::comm_budget_csv(budget_opts.resolve(), max_clients);
            if (budget_out.empty()) {
                std::cout << csv;
            } else {
                io::write_file(budget_out, csv);
            }
        } else if (*count) {
            const auto p = run::parameter_count(count_opts.resolve());
            std::cout << "total=" << p.total << "\ntrunk=" << p.trunk << "\npayload_bits=" << p.payload_bits << "\n";
        }
    } catch (const fedloc::Error& e) {
        std::cerr << "fedloc: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "fedloc: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fedloc: unexpected failure: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
