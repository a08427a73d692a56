#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moe/bounds.hpp"
#include "moe/gridworld.hpp"
#include "moe/policy.hpp"
#include "moe/pomdp.hpp"

namespace moe {

// ---------------------------------------------------------------------------
// Experiment configuration: a flat key-value text document describing one
// multi-seed training comparison.

struct ExperimentConfig {
    std::string environment = "well_behaved";  // canonical name or gridspec file path
    std::vector<Objective> algorithms = {Objective::Mse, Objective::Moe, Objective::RegMoe};
    TrainConfig train;  // objective and seed are overridden per run
    int num_runs = 16;
    std::string output_dir = "out";
    std::uint64_t master_seed = 1;
};

inline void validate_experiment_config(const ExperimentConfig& config) {
    if (config.algorithms.empty()) throw std::invalid_argument("experiment config: no algorithms selected");
    if (config.num_runs < 1) throw std::invalid_argument("experiment config: num_runs must be >= 1");
    if (!(config.train.learning_rate > 0.0))
        throw std::invalid_argument("experiment config: alpha must be > 0");
    if (config.train.iterations < 1) throw std::invalid_argument("experiment config: iterations must be >= 1");
    if (config.train.batch_size < 1) throw std::invalid_argument("experiment config: batch_size must be >= 1");
    if (config.train.eval_every < 1) throw std::invalid_argument("experiment config: eval_every must be >= 1");
    const bool has_regmoe = std::find(config.algorithms.begin(), config.algorithms.end(),
                                      Objective::RegMoe) != config.algorithms.end();
    if (has_regmoe && !config.train.beta)
        throw std::invalid_argument("experiment config: beta required when pg_regmoe is selected");
}

inline void save_experiment_config(const ExperimentConfig& config, std::ostream& os) {
    os << std::setprecision(17);
    os << "experiment v1\n";
    os << "environment " << config.environment << "\n";
    os << "algorithms ";
    for (std::size_t i = 0; i < config.algorithms.size(); ++i)
        os << objective_name(config.algorithms[i]) << (i + 1 < config.algorithms.size() ? "," : "");
    os << "\n";
    os << "alpha " << config.train.learning_rate << "\n";
    os << "iterations " << config.train.iterations << "\n";
    os << "batch_size " << config.train.batch_size << "\n";
    if (config.train.beta) os << "beta " << *config.train.beta << "\n";
    os << "eval_every " << config.train.eval_every << "\n";
    os << "num_runs " << config.num_runs << "\n";
    os << "master_seed " << config.master_seed << "\n";
    os << "output_dir " << config.output_dir << "\n";
    os << "end\n";
}

inline ExperimentConfig load_experiment_config(std::istream& is) {
    std::string tok;
    if (!(is >> tok) || tok != "experiment") throw std::runtime_error("experiment config: bad header");
    if (!(is >> tok) || tok != "v1") throw std::runtime_error("experiment config: unknown version");
    ExperimentConfig config;
    config.algorithms.clear();
    while (is >> tok) {
        if (tok == "environment") {
            is >> config.environment;
        } else if (tok == "algorithms") {
            std::string list;
            is >> list;
            std::stringstream ss(list);
            std::string name;
            while (std::getline(ss, name, ',')) config.algorithms.push_back(objective_from_name(name));
        } else if (tok == "alpha") {
            is >> config.train.learning_rate;
        } else if (tok == "iterations") {
            is >> config.train.iterations;
        } else if (tok == "batch_size") {
            is >> config.train.batch_size;
        } else if (tok == "beta") {
            double b;
            is >> b;
            config.train.beta = b;
        } else if (tok == "eval_every") {
            is >> config.train.eval_every;
        } else if (tok == "num_runs") {
            is >> config.num_runs;
        } else if (tok == "master_seed") {
            is >> config.master_seed;
        } else if (tok == "output_dir") {
            is >> config.output_dir;
        } else if (tok == "end") {
            validate_experiment_config(config);
            return config;
        } else {
            throw std::runtime_error("experiment config: unknown field '" + tok + "'");
        }
        if (!is) throw std::runtime_error("experiment config: malformed value for '" + tok + "'");
    }
    throw std::runtime_error("experiment config: missing 'end'");
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return load_experiment_config(is);
}

// Canonical name or a gridspec file on disk.
struct ResolvedEnvironment {
    GridSpec spec;
    PomdpModel model;
};

inline ResolvedEnvironment resolve_environment(const std::string& environment) {
    if (is_canonical_environment(environment)) {
        auto env = canonical_environment(environment);
        return {env.spec, env.model};
    }
    GridSpec spec = load_grid_spec(std::filesystem::path(environment));
    PomdpModel model = build_model(spec);
    return {std::move(spec), std::move(model)};
}

// Deterministic, injective-per-experiment derivation of run seeds.
inline std::uint64_t run_seed(std::uint64_t master_seed, Objective algorithm, int run_index) {
    return mix_seed(master_seed, hash_string(objective_name(algorithm)),
                    static_cast<std::uint64_t>(run_index));
}

// ---------------------------------------------------------------------------
// Aggregated learning curves: per-iteration mean and 95% confidence band
// (normal approximation, 1.96 * sd / sqrt(n)) over independent runs.

struct CurvePoint {
    int iteration = 0;
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct AggregateCurve {
    std::string algorithm;  // pg_mse | pg_moe | pg_regmoe
    std::string metric;     // h_states | h_obs
    std::vector<CurvePoint> points;
};

inline CurvePoint aggregate_mean_ci(int iteration, std::span<const double> values) {
    CurvePoint p;
    p.iteration = iteration;
    double sum = 0.0;
    for (double v : values) sum += v;
    p.mean = sum / static_cast<double>(values.size());
    double half_width = 0.0;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - p.mean) * (v - p.mean);
        const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        half_width = 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
    }
    p.ci_low = p.mean - half_width;
    p.ci_high = p.mean + half_width;
    return p;
}

struct RunFailure {
    std::string algorithm;
    int run_index = 0;
    std::uint64_t seed = 0;
    std::string error;
};

struct ExperimentResult {
    std::vector<AggregateCurve> curves;
    std::vector<RunFailure> failures;
    // Final-iteration per-run exact H(S|pi) keyed by algorithm name, in
    // run order; the quantity the trend comparisons are made on.
    std::map<std::string, std::vector<double>> final_h_states;
};

namespace detail {

inline void write_run_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& records,
                          std::uint64_t seed) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << std::setprecision(17);
    os << "iteration,objective,h_states,h_obs,grad_norm,seed\n";
    for (const auto& r : records)
        os << r.iteration << ',' << r.mean_return << ',' << r.h_states << ',' << r.h_obs << ','
           << r.gradient_norm << ',' << seed << '\n';
}

}  // namespace detail

// Runs algorithms x runs, writes one CSV per run plus a failure manifest,
// and aggregates the exact-entropy curves. Fully deterministic given the
// master seed; a failed run is recorded and excluded from aggregation
// instead of aborting the sweep.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    validate_experiment_config(config);
    const ResolvedEnvironment env = resolve_environment(config.environment);

    const std::filesystem::path out_dir(config.output_dir);
    std::filesystem::create_directories(out_dir);

    ExperimentResult result;
    for (Objective algorithm : config.algorithms) {
        const std::string algo_name(objective_name(algorithm));
        std::vector<std::vector<IterationRecord>> run_records;
        for (int run = 0; run < config.num_runs; ++run) {
            const std::uint64_t seed = run_seed(config.master_seed, algorithm, run);
            TrainConfig tc = config.train;
            tc.objective = algorithm;
            tc.seed = seed;
            if (algorithm != Objective::RegMoe) tc.beta.reset();
            try {
                TrainResult tr = train(env.model, tc);
                detail::write_run_csv(out_dir / (algo_name + "_run" + std::to_string(run) + ".csv"),
                                      tr.records, seed);
                run_records.push_back(std::move(tr.records));
            } catch (const std::exception& e) {
                result.failures.push_back({algo_name, run, seed, e.what()});
            }
        }
        if (run_records.empty()) continue;

        const std::size_t points = run_records.front().size();
        AggregateCurve curve_states{algo_name, "h_states", {}};
        AggregateCurve curve_obs{algo_name, "h_obs", {}};
        std::vector<double> states_at, obs_at;
        for (std::size_t p = 0; p < points; ++p) {
            states_at.clear();
            obs_at.clear();
            for (const auto& records : run_records) {
                states_at.push_back(records[p].h_states);
                obs_at.push_back(records[p].h_obs);
            }
            const int iteration = run_records.front()[p].iteration;
            curve_states.points.push_back(aggregate_mean_ci(iteration, states_at));
            curve_obs.points.push_back(aggregate_mean_ci(iteration, obs_at));
        }
        result.curves.push_back(std::move(curve_states));
        result.curves.push_back(std::move(curve_obs));

        std::vector<double>& finals = result.final_h_states[algo_name];
        for (const auto& records : run_records) finals.push_back(records.back().h_states);
    }

    if (!result.failures.empty()) {
        std::ofstream manifest(out_dir / "manifest.txt");
        for (const auto& f : result.failures)
            manifest << f.algorithm << " run " << f.run_index << " seed " << f.seed << " failed: " << f.error
                     << "\n";
    }
    return result;
}

// ---------------------------------------------------------------------------
// Plot data: one long-format CSV plus a self-contained SVG chart per
// metric. Reading the CSV back reproduces the curve values exactly.

namespace detail {

inline std::string svg_color(const std::string& algorithm) {
    if (algorithm == "pg_mse") return "#2ca02c";
    if (algorithm == "pg_moe") return "#ff7f0e";
    if (algorithm == "pg_regmoe") return "#d62728";
    return "#1f77b4";
}

inline void write_svg_chart(const std::vector<const AggregateCurve*>& curves, const std::string& metric,
                            const std::filesystem::path& path) {
    const double width = 800, height = 500;
    const double ml = 70, mr = 20, mt = 40, mb = 50;

    int it_min = 0, it_max = 1;
    double y_min = 0.0, y_max = 1e-9;
    bool first = true;
    for (const auto* c : curves)
        for (const auto& p : c->points) {
            if (first) {
                it_min = it_max = p.iteration;
                y_min = p.ci_low;
                y_max = p.ci_high;
                first = false;
            }
            it_min = std::min(it_min, p.iteration);
            it_max = std::max(it_max, p.iteration);
            y_min = std::min(y_min, p.ci_low);
            y_max = std::max(y_max, p.ci_high);
        }
    if (it_max == it_min) it_max = it_min + 1;
    if (y_max - y_min < 1e-12) y_max = y_min + 1.0;
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    auto sx = [&](double it) { return ml + (it - it_min) / (it_max - it_min) * (width - ml - mr); };
    auto sy = [&](double v) { return height - mb - (v - y_min) / (y_max - y_min) * (height - mt - mb); };

    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << std::setprecision(8);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">"
       << metric << "</text>\n";
    // axes
    os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
       << height - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = y_min + (y_max - y_min) * k / 4.0;
        os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(v) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << std::setprecision(3)
           << v << std::setprecision(8) << "</text>\n";
        const double it = it_min + (it_max - it_min) * k / 4.0;
        os << "<text x=\"" << sx(it) << "\" y=\"" << height - mb + 18
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
           << static_cast<int>(it) << "</text>\n";
    }
    os << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">iteration</text>\n";

    double legend_y = mt + 8;
    for (const auto* c : curves) {
        const std::string color = svg_color(c->algorithm);
        // confidence band
        std::ostringstream band;
        for (const auto& p : c->points) band << sx(p.iteration) << "," << sy(p.ci_high) << " ";
        for (auto it = c->points.rbegin(); it != c->points.rend(); ++it)
            band << sx(it->iteration) << "," << sy(it->ci_low) << " ";
        os << "<polygon points=\"" << band.str() << "\" fill=\"" << color << "\" opacity=\"0.18\"/>\n";
        // mean line
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (const auto& p : c->points) os << sx(p.iteration) << "," << sy(p.mean) << " ";
        os << "\"/>\n";
        // legend entry
        os << "<line x1=\"" << width - mr - 150 << "\" y1=\"" << legend_y << "\" x2=\"" << width - mr - 120
           << "\" y2=\"" << legend_y << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << width - mr - 112 << "\" y=\"" << legend_y + 4
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << c->algorithm << "</text>\n";
        legend_y += 18;
    }
    os << "</svg>\n";
}

}  // namespace detail

inline void emit_plot_data(const std::vector<AggregateCurve>& curves, const std::filesystem::path& out_dir) {
    if (curves.empty()) throw std::invalid_argument("emit_plot_data: no curves");
    std::filesystem::create_directories(out_dir);

    std::ofstream os(out_dir / "curves.csv");
    if (!os) throw std::runtime_error("cannot open curves.csv for writing");
    os << std::setprecision(17);
    os << "algorithm,iteration,metric,mean,ci_low,ci_high\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            os << c.algorithm << ',' << p.iteration << ',' << c.metric << ',' << p.mean << ',' << p.ci_low
               << ',' << p.ci_high << '\n';
    os.close();

    std::vector<std::string> metrics;
    for (const auto& c : curves)
        if (std::find(metrics.begin(), metrics.end(), c.metric) == metrics.end()) metrics.push_back(c.metric);
    for (const auto& metric : metrics) {
        std::vector<const AggregateCurve*> selected;
        for (const auto& c : curves)
            if (c.metric == metric) selected.push_back(&c);
        detail::write_svg_chart(selected, metric, out_dir / (metric + ".svg"));
    }
}

inline std::vector<AggregateCurve> read_plot_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "algorithm,iteration,metric,mean,ci_low,ci_high")
        throw std::runtime_error("curves csv: unexpected header");
    std::vector<AggregateCurve> curves;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string algorithm, metric, field;
        CurvePoint p;
        std::getline(ss, algorithm, ',');
        std::getline(ss, field, ',');
        p.iteration = std::stoi(field);
        std::getline(ss, metric, ',');
        std::getline(ss, field, ',');
        p.mean = std::stod(field);
        std::getline(ss, field, ',');
        p.ci_low = std::stod(field);
        std::getline(ss, field, ',');
        p.ci_high = std::stod(field);
        auto it = std::find_if(curves.begin(), curves.end(), [&](const AggregateCurve& c) {
            return c.algorithm == algorithm && c.metric == metric;
        });
        if (it == curves.end()) {
            curves.push_back({algorithm, metric, {}});
            it = curves.end() - 1;
        }
        it->points.push_back(p);
    }
    return curves;
}

// ---------------------------------------------------------------------------
// Hyperparameter ablations. One run_experiment per value, each in its own
// subdirectory, plus a summary table value -> final mean H(S|pi).

enum class SweepParameter { Alpha, Beta, Sigma2 };

inline SweepParameter sweep_parameter_from_name(std::string_view name) {
    if (name == "alpha") return SweepParameter::Alpha;
    if (name == "beta") return SweepParameter::Beta;
    if (name == "sigma2") return SweepParameter::Sigma2;
    throw std::invalid_argument("unknown sweep parameter '" + std::string(name) +
                                "' (expected alpha, beta or sigma2)");
}

struct SweepEntry {
    double value = 0.0;
    ExperimentResult result;
};

struct SweepResult {
    SweepParameter parameter = SweepParameter::Alpha;
    std::vector<SweepEntry> entries;
};

inline SweepResult ablation_sweep(const ExperimentConfig& base_config, SweepParameter parameter,
                                  std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("ablation_sweep: no values");
    validate_experiment_config(base_config);
    if (parameter == SweepParameter::Beta) {
        const bool has_regmoe = std::find(base_config.algorithms.begin(), base_config.algorithms.end(),
                                          Objective::RegMoe) != base_config.algorithms.end();
        if (!has_regmoe)
            throw std::invalid_argument("ablation_sweep: beta sweep requires pg_regmoe among the algorithms");
    }

    const std::filesystem::path base_out(base_config.output_dir);
    std::filesystem::create_directories(base_out);

    // The sigma2 sweep regenerates the observation matrix, so the
    // environment must be a Gaussian-observation grid.
    std::optional<GridSpec> grid;
    if (parameter == SweepParameter::Sigma2) {
        ResolvedEnvironment env = resolve_environment(base_config.environment);
        if (env.spec.observation.kind != ObservationSpec::Kind::GaussianManhattan)
            throw std::invalid_argument(
                "ablation_sweep: sigma2 sweep requires a gaussian_manhattan observation spec");
        grid = std::move(env.spec);
    }

    auto format_value = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    auto param_name = [parameter]() -> std::string {
        switch (parameter) {
            case SweepParameter::Alpha: return "alpha";
            case SweepParameter::Beta: return "beta";
            case SweepParameter::Sigma2: return "sigma2";
        }
        return "?";
    }();

    SweepResult sweep;
    sweep.parameter = parameter;
    for (double value : values) {
        ExperimentConfig config = base_config;
        config.output_dir = (base_out / (param_name + "=" + format_value(value))).string();
        switch (parameter) {
            case SweepParameter::Alpha:
                config.train.learning_rate = value;
                break;
            case SweepParameter::Beta:
                config.train.beta = value;
                break;
            case SweepParameter::Sigma2: {
                GridSpec spec = *grid;
                spec.observation.sigma2 = value;
                const auto spec_path = base_out / (param_name + "=" + format_value(value) + ".gridspec");
                save_grid_spec(spec, spec_path);
                config.environment = spec_path.string();
                break;
            }
        }
        SweepEntry entry;
        entry.value = value;
        entry.result = run_experiment(config);
        sweep.entries.push_back(std::move(entry));
    }

    std::ofstream summary(base_out / "sweep_summary.csv");
    summary << std::setprecision(17);
    summary << param_name << ",algorithm,final_mean_h_states\n";
    for (const auto& entry : sweep.entries)
        for (const auto& [algo, finals] : entry.result.final_h_states) {
            double mean = 0.0;
            for (double v : finals) mean += v;
            mean /= static_cast<double>(finals.size());
            summary << entry.value << ',' << algo << ',' << mean << '\n';
        }
    return sweep;
}

// ---------------------------------------------------------------------------
// Sigma2 calibration: bisects the Gaussian variance until the mean
// observation-row entropy of the built model (glasses doubling included)
// hits the target. Relies on the entropy being monotone in sigma2.

inline double mean_obs_entropy_for_sigma2(GridSpec spec, double sigma2) {
    if (spec.observation.kind != ObservationSpec::Kind::GaussianManhattan)
        throw std::invalid_argument("calibrate_sigma2: spec must use gaussian_manhattan observations");
    spec.observation.sigma2 = sigma2;
    return mean_observation_function_entropy(build_model(spec).observation);
}

inline double calibrate_sigma2(const GridSpec& spec, double target_entropy, double lo = 1e-3,
                               double hi = 1e4, double tolerance = 1e-6) {
    if (mean_obs_entropy_for_sigma2(spec, lo) > target_entropy ||
        mean_obs_entropy_for_sigma2(spec, hi) < target_entropy)
        throw std::invalid_argument("calibrate_sigma2: target entropy outside the [lo, hi] bracket");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double h = mean_obs_entropy_for_sigma2(spec, mid);
        if (std::abs(h - target_entropy) < tolerance) return mid;
        (h < target_entropy ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Policy table file format, used by the bounds-report CLI.

struct PolicyFile {
    SoftmaxPolicy policy;
    Conditioning conditioning = Conditioning::Observation;
};

inline void save_policy(const PolicyFile& pf, std::ostream& os) {
    os << std::setprecision(17);
    os << "policy v1\n";
    os << "conditioning "
       << (pf.conditioning == Conditioning::Observation ? "observation" : "latent_state") << "\n";
    os << "symbols " << pf.policy.num_symbols << "\n";
    os << "actions " << pf.policy.num_actions << "\n";
    os << "theta\n";
    for (int s = 0; s < pf.policy.num_symbols; ++s) {
        auto row = pf.policy.theta_row(s);
        for (int a = 0; a < pf.policy.num_actions; ++a)
            os << row[a] << (a + 1 < pf.policy.num_actions ? ' ' : '\n');
    }
    os << "end\n";
}

inline void save_policy(const PolicyFile& pf, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    save_policy(pf, os);
}

inline PolicyFile load_policy(std::istream& is) {
    auto expect = [&is](const char* expected) {
        std::string tok;
        if (!(is >> tok) || tok != expected)
            throw std::runtime_error(std::string("policy parse error: expected '") + expected + "'");
    };
    expect("policy");
    expect("v1");
    expect("conditioning");
    std::string cond;
    is >> cond;
    PolicyFile pf;
    if (cond == "observation")
        pf.conditioning = Conditioning::Observation;
    else if (cond == "latent_state")
        pf.conditioning = Conditioning::LatentState;
    else
        throw std::runtime_error("policy parse error: unknown conditioning '" + cond + "'");
    expect("symbols");
    int symbols = 0, actions = 0;
    if (!(is >> symbols) || symbols <= 0) throw std::runtime_error("policy parse error: bad symbols");
    expect("actions");
    if (!(is >> actions) || actions <= 0) throw std::runtime_error("policy parse error: bad actions");
    expect("theta");
    pf.policy = SoftmaxPolicy(symbols, actions);
    for (double& v : pf.policy.theta)
        if (!(is >> v)) throw std::runtime_error("policy parse error: missing theta value");
    expect("end");
    return pf;
}

inline PolicyFile load_policy(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return load_policy(is);
}

// ---------------------------------------------------------------------------
// Enumeration-backed oracles for the trajectory objective. These are the
// independent routes the verification suite compares the sampling-based
// estimator and the finite-difference quotient against.

inline double trajectory_objective_by_enumeration(
    const PomdpModel& model, const SoftmaxPolicy& policy, Conditioning conditioning,
    const std::function<double(const Trajectory&)>& trajectory_return) {
    const auto paths = enumerate_trajectories(model, policy.table(), conditioning);
    double value = 0.0;
    for (const auto& wt : paths) value += wt.probability * trajectory_return(wt.trajectory);
    return value;
}

inline std::vector<double> policy_gradient_by_enumeration(
    const PomdpModel& model, const SoftmaxPolicy& policy, Conditioning conditioning,
    const std::function<double(const Trajectory&)>& trajectory_return) {
    const auto paths = enumerate_trajectories(model, policy.table(), conditioning);
    std::vector<double> grad(policy.theta.size(), 0.0);
    for (const auto& wt : paths) {
        const auto score = policy_score(policy, wt.trajectory, conditioning);
        const double weight = wt.probability * trajectory_return(wt.trajectory);
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += weight * score[j];
    }
    return grad;
}

inline std::vector<double> policy_gradient_by_finite_differences(
    const PomdpModel& model, const SoftmaxPolicy& policy, Conditioning conditioning,
    const std::function<double(const Trajectory&)>& trajectory_return, double h = 1e-5) {
    std::vector<double> grad(policy.theta.size(), 0.0);
    SoftmaxPolicy probe = policy;
    for (std::size_t j = 0; j < probe.theta.size(); ++j) {
        const double saved = probe.theta[j];
        probe.theta[j] = saved + h;
        const double plus = trajectory_objective_by_enumeration(model, probe, conditioning, trajectory_return);
        probe.theta[j] = saved - h;
        const double minus = trajectory_objective_by_enumeration(model, probe, conditioning, trajectory_return);
        probe.theta[j] = saved;
        grad[j] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Randomized verification suite: executes the oracle-backed property
// checks over freshly drawn instances and reports violations with enough
// instance detail to replay them.

struct VerifyCheck {
    std::string name;
    int instances = 0;
    int violations = 0;
    bool informational = false;  // findings are reported but do not fail the suite
    std::vector<std::string> details;
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.informational && c.violations > 0) return false;
        return true;
    }
};

namespace detail {

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Random model with dims <= 6 and T <= 8. strictly_positive controls
// whether observation rows may contain zeros.
inline PomdpModel random_model(std::mt19937_64& rng, bool strictly_positive, int max_dim = 6,
                               int max_horizon = 8) {
    auto dim = [&rng, max_dim] { return 2 + static_cast<int>(uniform01(rng) * (max_dim - 1.99)); };
    PomdpModel model;
    model.num_states = dim();
    model.num_observations = dim();
    model.num_actions = dim();
    model.horizon = 1 + static_cast<int>(uniform01(rng) * (max_horizon - 0.01));

    auto random_row = [&rng, strictly_positive](std::span<double> row) {
        double sum = 0.0;
        for (double& v : row) {
            v = strictly_positive ? uniform_in(rng, 0.05, 1.0)
                                  : (uniform01(rng) < 0.3 ? 0.0 : uniform_in(rng, 0.05, 1.0));
            sum += v;
        }
        if (sum == 0.0) {
            row[0] = 1.0;
            sum = 1.0;
        }
        for (double& v : row) v /= sum;
    };

    model.transition.assign(model.num_actions, Matrix(model.num_states, model.num_states));
    for (auto& t : model.transition)
        for (int s = 0; s < model.num_states; ++s) random_row(t.row(s));
    model.observation = Matrix(model.num_states, model.num_observations);
    for (int s = 0; s < model.num_states; ++s) random_row(model.observation.row(s));
    model.initial.resize(model.num_states);
    random_row(model.initial);
    return model;
}

inline SoftmaxPolicy random_softmax_policy(std::mt19937_64& rng, int symbols, int actions) {
    SoftmaxPolicy policy(symbols, actions);
    for (double& v : policy.theta) v = uniform_in(rng, -2.0, 2.0);
    return policy;
}

inline std::string describe_instance(const PomdpModel& model, std::uint64_t instance_seed) {
    std::ostringstream os;
    os << "instance seed " << instance_seed << " (S=" << model.num_states << ", X=" << model.num_observations
       << ", A=" << model.num_actions << ", T=" << model.horizon << ")";
    return os.str();
}

}  // namespace detail

inline std::vector<VerifyCheck> verify_bounds_checks(std::uint64_t seed, int instance_count) {
    VerifyCheck sandwich{"bounds: Thm-1 sandwich / Thm-2 / Eq-3 / tight variant", 0, 0, false, {}};
    VerifyCheck corollary{"bounds: Cor-1 column-normalized reading (informational)", 0, 0, true, {}};

    for (int i = 0; i < instance_count; ++i) {
        const std::uint64_t instance_seed = mix_seed(seed, 0xB0B5ull, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(instance_seed);
        const bool strictly_positive = i % 2 == 0;
        const PomdpModel model = detail::random_model(rng, strictly_positive);
        const SoftmaxPolicy policy =
            detail::random_softmax_policy(rng, model.num_observations, model.num_actions);
        const PolicyTable table = policy.table();

        const auto p_states = exact_state_occupancy(model, table);
        const auto p_obs = matvec_transposed(model.observation, p_states);
        const double h_states = shannon_entropy(p_states);
        const double h_obs = shannon_entropy(p_obs);
        const double gap = h_states - h_obs;

        ++sandwich.instances;
        bool bad = false;
        const auto spectral = spectral_bounds(model.observation);
        if (gap > spectral.upper + 1e-9) bad = true;
        if (spectral.lower && gap < *spectral.lower - 1e-9) bad = true;
        if (std::abs(gap) > worst_case_gap(model.num_states, model.num_observations) + 1e-9) bad = true;
        if (h_states < information_lower_bound(model.observation, p_states, p_obs) - 1e-9) bad = true;
        double p_max = 0.0;
        for (double v : p_states) p_max = std::max(p_max, v);
        if (p_max < 1.0 - 1e-12 && tight_spectral_upper(model.observation, p_states) > h_obs + 1e-9)
            bad = true;
        if (bad) {
            ++sandwich.violations;
            sandwich.details.push_back(detail::describe_instance(model, instance_seed));
        }

        if (strictly_positive) {
            ++corollary.instances;
            const double actionable = actionable_lower_bound(model.observation, p_obs);
            if (actionable > h_states + 1e-9) {
                ++corollary.violations;
                if (corollary.details.size() < 5)
                    corollary.details.push_back(detail::describe_instance(model, instance_seed) +
                                                ": actionable " + std::to_string(actionable) + " > H(S) " +
                                                std::to_string(h_states));
            }
        }
    }
    return {sandwich, corollary};
}

// Gradient triple agreement on the tiny enumerable POMDP: the enumerated
// exact gradient, the REINFORCE estimator mean, and central finite
// differences must coincide.
inline std::vector<VerifyCheck> verify_gradient_checks(std::uint64_t seed, int sample_count = 100000) {
    std::mt19937_64 rng(mix_seed(seed, 0x6EADull));
    PomdpModel model = detail::random_model(rng, true, 2, 3);  // |S| = |X| = |A| = 2
    model.horizon = 3;

    SoftmaxPolicy policy = detail::random_softmax_policy(rng, model.num_observations, model.num_actions);
    const int X = model.num_observations;
    auto ret = [X](const Trajectory& t) { return moe_return(t, X); };

    const auto exact = policy_gradient_by_enumeration(model, policy, Conditioning::Observation, ret);
    const auto fd = policy_gradient_by_finite_differences(model, policy, Conditioning::Observation, ret);

    VerifyCheck fd_check{"gradient: enumeration vs central finite differences (rel 1e-5)", 1, 0, false, {}};
    for (std::size_t j = 0; j < exact.size(); ++j) {
        const double scale = std::max(std::abs(exact[j]), 1e-8);
        if (std::abs(exact[j] - fd[j]) / scale > 1e-5) {
            fd_check.violations = 1;
            fd_check.details.push_back("entry " + std::to_string(j) + ": exact " + std::to_string(exact[j]) +
                                       " vs fd " + std::to_string(fd[j]));
        }
    }

    // REINFORCE estimator mean with a 3-standard-error band per entry.
    VerifyCheck mc_check{"gradient: REINFORCE estimator mean vs enumeration (3 SE)", 1, 0, false, {}};
    const PolicyTable table = policy.table();
    std::vector<double> mean(exact.size(), 0.0), m2(exact.size(), 0.0);
    std::mt19937_64 episode_rng(mix_seed(seed, 0xE715ull));
    for (int i = 0; i < sample_count; ++i) {
        const Trajectory traj = sample_trajectory(model, table, Conditioning::Observation, episode_rng);
        const auto score = policy_score(policy, traj, Conditioning::Observation);
        const double r = ret(traj);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double sample = score[j] * r;
            const double delta = sample - mean[j];
            mean[j] += delta / static_cast<double>(i + 1);
            m2[j] += delta * (sample - mean[j]);
        }
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
        const double se = std::sqrt(m2[j] / (sample_count - 1.0) / sample_count);
        if (std::abs(mean[j] - exact[j]) > 3.0 * se + 1e-12) {
            mc_check.violations = 1;
            mc_check.details.push_back("entry " + std::to_string(j) + ": estimator " + std::to_string(mean[j]) +
                                       " vs exact " + std::to_string(exact[j]) + " (3se " +
                                       std::to_string(3.0 * se) + ")");
        }
    }
    return {fd_check, mc_check};
}

// Occupancy oracle: forward marginalization vs enumeration marginals and
// vs Monte Carlo frequencies.
inline std::vector<VerifyCheck> verify_occupancy_checks(std::uint64_t seed, int instance_count,
                                                        int episodes = 1000000) {
    VerifyCheck enum_check{"occupancy: forward marginalization vs enumeration (1e-10)", 0, 0, false, {}};
    VerifyCheck mc_check{"occupancy: forward marginalization vs Monte Carlo (3 SE)", 0, 0, false, {}};

    for (int i = 0; i < instance_count; ++i) {
        const std::uint64_t instance_seed = mix_seed(seed, 0x0CC7ull, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(instance_seed);
        // Dims <= 4, T <= 3: every instance stays under the enumeration cap.
        PomdpModel model = detail::random_model(rng, false, 4, 3);
        const SoftmaxPolicy policy =
            detail::random_softmax_policy(rng, model.num_observations, model.num_actions);
        const PolicyTable table = policy.table();
        const auto exact = exact_state_occupancy(model, table);

        ++enum_check.instances;
        const auto paths = enumerate_trajectories(model, table, Conditioning::Observation, 5'000'000);
        std::vector<double> marginal(model.num_states, 0.0);
        for (const auto& wt : paths)
            for (int s : wt.trajectory.states) marginal[s] += wt.probability / model.horizon;
        for (int s = 0; s < model.num_states; ++s)
            if (std::abs(marginal[s] - exact[s]) > 1e-10) {
                ++enum_check.violations;
                enum_check.details.push_back(detail::describe_instance(model, instance_seed));
                break;
            }

        ++mc_check.instances;
        std::vector<double> mean(model.num_states, 0.0), m2(model.num_states, 0.0);
        std::vector<double> freq(model.num_states, 0.0);
        std::mt19937_64 episode_rng(mix_seed(instance_seed, 0x3A3Aull));
        for (int e = 0; e < episodes; ++e) {
            const Trajectory traj = sample_trajectory(model, table, Conditioning::Observation, episode_rng);
            std::fill(freq.begin(), freq.end(), 0.0);
            for (int s : traj.states) freq[s] += 1.0 / model.horizon;
            for (int s = 0; s < model.num_states; ++s) {
                const double delta = freq[s] - mean[s];
                mean[s] += delta / static_cast<double>(e + 1);
                m2[s] += delta * (freq[s] - mean[s]);
            }
        }
        for (int s = 0; s < model.num_states; ++s) {
            const double se = std::sqrt(m2[s] / (episodes - 1.0) / episodes);
            if (std::abs(mean[s] - exact[s]) > 3.0 * se + 1e-12) {
                ++mc_check.violations;
                mc_check.details.push_back(detail::describe_instance(model, instance_seed) + ": state " +
                                           std::to_string(s));
                break;
            }
        }
    }
    return {enum_check, mc_check};
}

inline VerifyReport verify_suite(std::string_view scope, std::uint64_t seed, int instance_count) {
    VerifyReport report;
    if (scope == "bounds" || scope == "all") {
        auto checks = verify_bounds_checks(seed, instance_count);
        report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    }
    if (scope == "gradient" || scope == "all") {
        auto checks = verify_gradient_checks(seed);
        report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    }
    if (scope == "occupancy" || scope == "all") {
        const int instances = scope == "all" ? std::min(instance_count, 5) : instance_count;
        auto checks = verify_occupancy_checks(seed, instances);
        report.checks.insert(report.checks.end(), checks.begin(), checks.end());
    }
    if (report.checks.empty())
        throw std::invalid_argument("verify_suite: unknown scope '" + std::string(scope) +
                                    "' (expected bounds, gradient, occupancy or all)");
    return report;
}

inline void write_verify_report(const VerifyReport& report, std::ostream& os) {
    for (const auto& c : report.checks) {
        const bool ok = c.violations == 0;
        os << (ok ? "[PASS] " : (c.informational ? "[FINDING] " : "[FAIL] ")) << c.name << ": "
           << c.instances << " instances, " << c.violations << " violations\n";
        for (const auto& d : c.details) os << "    " << d << "\n";
    }
    os << (report.passed() ? "verification passed" : "verification FAILED") << "\n";
}

}  // namespace moe
