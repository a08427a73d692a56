// Command-line front end: experiment runs, hyperparameter sweeps, bound
// reports, the randomized verification suite, plot emission and sigma2
// calibration. Exit code 0 on success, nonzero on any fault or
// verification failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "moe/bounds.hpp"
#include "moe/experiment.hpp"
#include "moe/gridworld.hpp"
#include "moe/policy.hpp"
#include "moe/pomdp.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Maximum observation entropy exploration for tabular POMDPs"};
    app.require_subcommand(1);

    // run <config> [--out dir]
    std::string run_config_path, run_out_override;
    auto* run_cmd = app.add_subcommand("run", "Run a multi-seed training experiment from a config file");
    run_cmd->add_option("config", run_config_path, "experiment config file")->required();
    run_cmd->add_option("--out", run_out_override, "override the config's output directory");

    // sweep <config> --param p --values v1,v2,...
    std::string sweep_config_path, sweep_param, sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep over alpha, beta or sigma2");
    sweep_cmd->add_option("config", sweep_config_path, "experiment config file")->required();
    sweep_cmd->add_option("--param", sweep_param, "alpha | beta | sigma2")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();

    // bounds-report <model> <policy>
    std::string br_model_path, br_policy_path;
    auto* br_cmd = app.add_subcommand("bounds-report", "Evaluate every bound for a model/policy pair");
    br_cmd->add_option("model", br_model_path, "model file")->required();
    br_cmd->add_option("policy", br_policy_path, "policy file")->required();

    // verify <scope> [--instances n] [--seed s]
    std::string verify_scope = "all";
    int verify_instances = 1000;
    std::uint64_t verify_seed = 20240901;
    auto* verify_cmd = app.add_subcommand("verify", "Randomized oracle verification suite");
    verify_cmd->add_option("scope", verify_scope, "bounds | gradient | occupancy | all")->required();
    verify_cmd->add_option("--instances", verify_instances, "number of random instances");
    verify_cmd->add_option("--seed", verify_seed, "suite seed");

    // plot <curves.csv> --out dir
    std::string plot_csv_path, plot_out_dir = "plots";
    auto* plot_cmd = app.add_subcommand("plot", "Render SVG charts from a curves CSV");
    plot_cmd->add_option("curves", plot_csv_path, "curves.csv produced by run")->required();
    plot_cmd->add_option("--out", plot_out_dir, "output directory");

    // calibrate-sigma <gridspec-or-name> --target-entropy h
    std::string cal_env;
    double cal_target = 1.0, cal_lo = 1e-3, cal_hi = 1e4;
    auto* cal_cmd = app.add_subcommand("calibrate-sigma",
                                       "Bisect sigma2 until the mean observation-row entropy hits a target");
    cal_cmd->add_option("environment", cal_env, "gridspec file or canonical environment name")->required();
    cal_cmd->add_option("--target-entropy", cal_target, "target mean row entropy in nats")->required();
    cal_cmd->add_option("--lo", cal_lo, "lower sigma2 bracket");
    cal_cmd->add_option("--hi", cal_hi, "upper sigma2 bracket");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            moe::ExperimentConfig config = moe::load_experiment_config(run_config_path);
            if (!run_out_override.empty()) config.output_dir = run_out_override;
            const moe::ExperimentResult result = moe::run_experiment(config);
            moe::emit_plot_data(result.curves, config.output_dir);
            for (const auto& [algo, finals] : result.final_h_states) {
                double mean = 0.0;
                for (double v : finals) mean += v;
                std::cout << algo << " final mean H(S|pi) = " << mean / finals.size() << " over "
                          << finals.size() << " runs\n";
            }
            if (!result.failures.empty()) {
                std::cerr << result.failures.size() << " run(s) failed; see manifest.txt\n";
                return 1;
            }
        } else if (*sweep_cmd) {
            const moe::ExperimentConfig config = moe::load_experiment_config(sweep_config_path);
            const auto parameter = moe::sweep_parameter_from_name(sweep_param);
            const auto values = parse_values(sweep_values);
            const moe::SweepResult sweep = moe::ablation_sweep(config, parameter, values);
            for (const auto& entry : sweep.entries) {
                std::cout << sweep_param << " = " << entry.value << ":\n";
                for (const auto& [algo, finals] : entry.result.final_h_states) {
                    double mean = 0.0;
                    for (double v : finals) mean += v;
                    std::cout << "  " << algo << " final mean H(S|pi) = " << mean / finals.size() << "\n";
                }
            }
        } else if (*br_cmd) {
            const moe::PomdpModel model = moe::load_model(std::filesystem::path(br_model_path));
            moe::require_valid(model);
            const moe::PolicyFile pf = moe::load_policy(std::filesystem::path(br_policy_path));
            const moe::BoundsReport report =
                moe::bounds_report(model, pf.policy.table(), pf.conditioning);
            moe::write_bounds_report(report, std::cout);
        } else if (*verify_cmd) {
            const moe::VerifyReport report = moe::verify_suite(verify_scope, verify_seed, verify_instances);
            moe::write_verify_report(report, std::cout);
            if (!report.passed()) return 1;
        } else if (*plot_cmd) {
            const auto curves = moe::read_plot_csv(plot_csv_path);
            moe::emit_plot_data(curves, plot_out_dir);
            std::cout << "wrote plots to " << plot_out_dir << "\n";
        } else if (*cal_cmd) {
            moe::GridSpec spec = moe::is_canonical_environment(cal_env)
                                     ? moe::canonical_environment(cal_env).spec
                                     : moe::load_grid_spec(std::filesystem::path(cal_env));
            const double sigma2 = moe::calibrate_sigma2(spec, cal_target, cal_lo, cal_hi);
            std::cout << std::setprecision(17) << "sigma2 " << sigma2 << "\n";
            std::cout << "mean_observation_entropy " << moe::mean_obs_entropy_for_sigma2(spec, sigma2)
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
