#include "cli.hpp"

#include <CLI11.hpp>
#include <iomanip>
#include <optional>
#include <ostream>

#include "mtpd/error.hpp"
#include "mtpd/pipeline.hpp"

namespace mtpd {

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool ablation = false;
};

void print_rows(std::ostream& out, const nlohmann::json& report) {
    out << std::left << std::setw(14) << "row" << std::right << std::setw(10) << "params" << std::setw(12)
        << "val loss" << std::setw(10) << "box mse" << std::setw(9) << "cls acc" << std::setw(9) << "da acc"
        << std::setw(10) << "lane acc" << std::setw(11) << "ms/image" << "\n";
    for (const auto& row : report.at("rows")) {
        const auto& m = row.at("metrics");
        out << std::left << std::setw(14) << row.at("name").get<std::string>() << std::right << std::setw(10)
            << m.at("parameters").get<std::size_t>() << std::fixed << std::setprecision(4) << std::setw(12)
            << m.at("total_task_loss").get<double>() << std::setw(10) << m.at("box_mse").get<double>()
            << std::setw(9) << m.at("class_accuracy").get<double>() << std::setw(9)
            << m.at("da_pixel_accuracy").get<double>() << std::setw(10) << m.at("lane_pixel_accuracy").get<double>()
            << std::setprecision(3) << std::setw(11) << row.at("latency_ms_per_image").get<double>() << "\n";
    }
    out << report.at("note").get<std::string>() << "\n";
}

void run_stage(const std::string& stage, const Options& opts, std::ostream& out) {
    PipelineConfig config = load_config(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;

    if (stage == "train") {
        const auto s = run_train(config);
        out << "trained " << s.epochs_run << " epoch(s)" << (s.stopped_on_plateau ? " (stopped on plateau)" : "")
            << "; val total loss " << s.initial_val_loss << " -> " << s.final_val_loss << "\n"
            << "wrote " << s.checkpoint.string() << "\n";
    } else if (stage == "collect") {
        const auto s = run_collect(config);
        out << "collected " << s.batches << " calibration batch(es) over " << s.layers << " prunable layer(s): "
            << s.importance_records << " importance and " << s.conflict_records << " conflict records\n"
            << "wrote " << s.stats.string() << "\n";
    } else if (stage == "plan") {
        out << format_plan_table(run_plan(config));
    } else if (stage == "prune") {
        const auto s = run_prune(config);
        out << "parameters before " << s.parameters_before << ", after " << s.parameters_after << " ("
            << std::fixed << std::setprecision(2) << s.reduction_percent << "% reduction); analytic count "
            << s.predicted_parameters << "\n"
            << "wrote " << s.checkpoint.string() << "\n";
    } else if (stage == "distill") {
        const auto s = run_distill(config);
        for (const auto& e : s.epochs) {
            out << "epoch " << e.epoch << " beta " << e.beta_effective << " task " << e.task[0] + e.task[1] + e.task[2]
                << " kd " << e.kd << " total " << e.total << "\n";
        }
        out << "wrote " << s.checkpoint.string() << "\n";
    } else if (stage == "eval") {
        print_rows(out, opts.ablation ? run_ablation(config) : run_eval(config));
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task channel pruning and feature distillation pipeline", "prune-distill"};
    app.require_subcommand(1, 1);
    Options opts;
    const char* stages[][2] = {{"train", "Train the teacher on synthetic scenes"},
                               {"collect", "Accumulate per-task channel statistics on calibration batches"},
                               {"plan", "Build the pruning plan from the statistics"},
                               {"prune", "Apply the plan to the teacher"},
                               {"distill", "Recover the pruned model with feature distillation"},
                               {"eval", "Evaluate checkpoints and write the report"}};
    for (const auto& [name, help] : stages) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "Pipeline config (JSON)")->required();
        sub->add_option("--seed", opts.seed, "Override the config seed");
        if (std::string(name) == "eval") sub->add_flag("--ablation", opts.ablation, "Run the four-row ablation ladder");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_config;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        run_stage(stage, opts, out);
        return exit_ok;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const DependencyError& e) {
        err << "dependency error: " << e.what() << "\n";
        return exit_dependency;
    } catch (const DivergenceError& e) {
        err << "divergence: " << e.what() << "\n";
        return exit_divergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_other;
    }
}

}  // namespace mtpd
