#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "accsim/config.hpp"
#include "accsim/errors.hpp"
#include "accsim/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitControllerFault = 4;
constexpr int kExitCollision = 5;

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw accsim::ConfigError("cannot write output file: " + path);
    out << content;
}

std::string format_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct CommonArgs {
    std::string scenario_path;
    std::optional<std::string> preset;
    std::optional<unsigned> seed;
};

accsim::ScenarioFile load_scenario(const CommonArgs& args) {
    std::ifstream in(args.scenario_path);
    if (!in) throw accsim::ConfigError("cannot open scenario file: " + args.scenario_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw accsim::ConfigError("scenario parse error: " + std::string(e.what()));
    }
    if (args.preset) doc["preset"] = *args.preset;
    accsim::ScenarioFile sc = accsim::parse_scenario_json(doc);
    if (args.seed) sc.sim.seed = *args.seed;
    return sc;
}

accsim::IdsBundle obtain_model(const accsim::ScenarioFile& sc, const std::string& model_path) {
    if (!model_path.empty() && std::filesystem::exists(model_path)) {
        auto [model, thresholds] = accsim::load_model_file(model_path);
        std::cerr << "loaded identifier model from " << model_path << "\n";
        return {model, thresholds};
    }
    std::cerr << "training identifier on the attack-free variant...\n";
    accsim::IdsBundle bundle = accsim::train_on_nominal(sc.sim);
    std::cerr << "training RMSE " << format_num(bundle.model.train_rmse) << " m/s, held-out "
              << format_num(bundle.model.val_rmse) << " m/s\n";
    return bundle;
}

int cmd_run(const CommonArgs& args, const std::string& out_override,
            const std::string& metrics_override, const std::string& model_override) {
    accsim::ScenarioFile sc = load_scenario(args);
    if (!out_override.empty()) sc.output.trace = out_override;
    if (!metrics_override.empty()) sc.output.metrics = metrics_override;
    if (!model_override.empty()) sc.output.model = model_override;

    accsim::IdsBundle bundle;
    const accsim::IdsBundle* bundle_ptr = nullptr;
    if (sc.sim.ids.enabled) {
        bundle = obtain_model(sc, model_override.empty() ? "" : sc.output.model);
        bundle_ptr = &bundle;
    }

    const accsim::RunResult result = accsim::run_scenario(sc.sim, bundle_ptr);
    write_text_file(sc.output.trace, accsim::trace_to_csv(result.trace));
    const std::string metrics_json = accsim::metrics_to_json(result.metrics);
    write_text_file(sc.output.metrics, metrics_json);
    std::cout << metrics_json;
    return result.metrics.collision ? kExitCollision : kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& model_out) {
    accsim::ScenarioFile sc = load_scenario(args);
    const std::string path = model_out.empty() ? sc.output.model : model_out;

    accsim::IdsBundle bundle = accsim::train_on_nominal(sc.sim);
    accsim::save_model_file(path, bundle.model, bundle.thresholds);

    std::cout << "model written to " << path << "\n";
    std::cout << "training RMSE: " << format_num(bundle.model.train_rmse) << " m/s\n";
    std::cout << "held-out RMSE: " << format_num(bundle.model.val_rmse) << " m/s\n";
    const auto print_entry = [](const char* name, const accsim::ThresholdEntry& e) {
        std::cout << name << ": mu=" << format_num(e.mu) << " sigma=" << format_num(e.sigma)
                  << (e.pooled_fallback ? " (pooled fallback)" : "") << "\n";
    };
    print_entry("speed mode", bundle.thresholds.speed);
    print_entry("spacing mode", bundle.thresholds.spacing);
    std::cout << "false-positive probability at k=" << format_num(bundle.thresholds.k)
              << ": " << format_num(accsim::false_positive_prob(bundle.thresholds.k))
              << " per sample\n";
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& param,
              const std::vector<double>& values, const std::string& out_path) {
    if (values.empty()) throw accsim::ConfigError("sweep: values list is empty");
    const accsim::ScenarioFile base = load_scenario(args);

    std::string csv =
        "param,value,detection_latency,min_d_rel,violation_duration,steady_gap_deficit,"
        "collision,exceed_count\n";
    for (double v : values) {
        accsim::ScenarioFile sc = base;
        accsim::set_numeric_field(sc.sim, param, v);
        sc.sim.validate();

        accsim::IdsBundle bundle;
        const accsim::IdsBundle* bundle_ptr = nullptr;
        if (sc.sim.ids.enabled) {
            bundle = accsim::train_on_nominal(sc.sim);
            bundle_ptr = &bundle;
        }
        const accsim::RunResult result = accsim::run_scenario(sc.sim, bundle_ptr);
        const accsim::Metrics& m = result.metrics;
        csv += param + "," + format_num(v) + ",";
        csv += m.detection_latency ? format_num(*m.detection_latency) : std::string();
        csv += "," + format_num(m.min_d_rel) + "," + format_num(m.violation_duration) +
               "," + format_num(m.steady_gap_deficit) + "," +
               (m.collision ? "1" : "0") + "," + std::to_string(m.exceed_count) + "\n";
        std::cerr << param << "=" << format_num(v) << " done\n";
    }
    write_text_file(out_path, csv);
    std::cout << csv;
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive cruise control testbed: covert attacks, NN anomaly detection "
                 "and fallback compensation"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string out_path, metrics_path, model_path, model_out, param, sweep_out = "sweep.csv";
    std::vector<double> values;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("scenario", common.scenario_path, "Scenario JSON file")->required();
        sub->add_option("--preset", common.preset,
                        "Preset override (nominal, attack1_nocomp, attack1_comp, "
                        "attack2_nocomp, attack2_comp)");
        sub->add_option("--seed", common.seed, "RNG seed override");
    };

    CLI::App* run = app.add_subcommand("run", "Run a scenario; write CSV trace and metrics");
    add_common(run);
    run->add_option("--out", out_path, "Trace CSV path override");
    run->add_option("--metrics", metrics_path, "Metrics JSON path override");
    run->add_option("--model", model_path, "Identifier model file (loaded if present)");

    CLI::App* train = app.add_subcommand(
        "train", "Train the identifier on the attack-free interval and write the model file");
    add_common(train);
    train->add_option("--model-out", model_out, "Model file path override");

    CLI::App* sweep = app.add_subcommand("sweep", "Run one scenario per parameter value");
    add_common(sweep);
    sweep->add_option("--param", param, "Numeric config field to vary")->required();
    sweep->add_option("--values", values, "Comma-separated values")
        ->required()
        ->delimiter(',');
    sweep->add_option("--out", sweep_out, "Sweep CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(common, out_path, metrics_path, model_path);
        if (train->parsed()) return cmd_train(common, model_out);
        return cmd_sweep(common, param, values, sweep_out);
    } catch (const accsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const accsim::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitTraining;
    } catch (const accsim::ControllerFault& e) {
        std::cerr << "controller fault: " << e.what() << "\n";
        return kExitControllerFault;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
