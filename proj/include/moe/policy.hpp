#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moe/entropy.hpp"
#include "moe/pomdp.hpp"
#include "moe/rng.hpp"

namespace moe {

// Tabular softmax policy: one parameter row per conditioning symbol,
// temperature fixed to 1. theta = 0 is the uniform policy.
struct SoftmaxPolicy {
    int num_symbols = 0;
    int num_actions = 0;
    std::vector<double> theta;  // [symbol][action], row-major

    SoftmaxPolicy() = default;
    SoftmaxPolicy(int symbols, int actions)
        : num_symbols(symbols),
          num_actions(actions),
          theta(static_cast<std::size_t>(symbols) * actions, 0.0) {
        if (symbols <= 0 || actions <= 0) throw std::invalid_argument("SoftmaxPolicy: sizes must be positive");
    }

    std::span<const double> theta_row(int symbol) const {
        return {theta.data() + static_cast<std::size_t>(symbol) * num_actions,
                static_cast<std::size_t>(num_actions)};
    }
    std::span<double> theta_row(int symbol) {
        return {theta.data() + static_cast<std::size_t>(symbol) * num_actions,
                static_cast<std::size_t>(num_actions)};
    }

    // Softmax with max-subtraction; rows sum to 1 up to rounding.
    std::vector<double> action_distribution(int symbol) const {
        if (symbol < 0 || symbol >= num_symbols)
            throw std::out_of_range("action_distribution: symbol " + std::to_string(symbol) +
                                    " outside [0, " + std::to_string(num_symbols) + ")");
        auto row = theta_row(symbol);
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        std::vector<double> p(num_actions);
        double z = 0.0;
        for (int a = 0; a < num_actions; ++a) {
            p[a] = std::exp(row[a] - mx);
            z += p[a];
        }
        for (double& v : p) v /= z;
        return p;
    }

    PolicyTable table() const {
        PolicyTable t;
        t.num_symbols = num_symbols;
        t.num_actions = num_actions;
        t.probs.resize(theta.size());
        for (int symbol = 0; symbol < num_symbols; ++symbol) {
            const auto p = action_distribution(symbol);
            std::copy(p.begin(), p.end(), t.probs.begin() + static_cast<std::size_t>(symbol) * num_actions);
        }
        return t;
    }
};

// Score of one episode: sum over steps of grad_theta log pi(a_t|symbol_t).
// For softmax, entry (symbol, a) accumulates 1{symbol = symbol_t} *
// (1{a = a_t} - pi(a|symbol_t)).
inline std::vector<double> policy_score(const SoftmaxPolicy& policy, const Trajectory& trajectory,
                                        Conditioning conditioning) {
    std::vector<double> score(policy.theta.size(), 0.0);
    const auto& symbols =
        conditioning == Conditioning::Observation ? trajectory.observations : trajectory.states;
    for (int t = 0; t < trajectory.length(); ++t) {
        const int symbol = symbols[t];
        const int action = trajectory.actions[t];
        if (symbol < 0 || symbol >= policy.num_symbols || action < 0 || action >= policy.num_actions)
            throw std::out_of_range("policy_score: trajectory symbol or action outside policy support");
        const auto p = policy.action_distribution(symbol);
        double* row = score.data() + static_cast<std::size_t>(symbol) * policy.num_actions;
        for (int a = 0; a < policy.num_actions; ++a) row[a] -= p[a];
        row[action] += 1.0;
    }
    return score;
}

// The trajectory return of the observation-entropy objective: H(X|x).
inline double moe_return(const Trajectory& trajectory, int num_observations) {
    return trajectory_entropy(trajectory.observations, num_observations);
}

// Regularized return: H(X|x) - beta * sum_x phat(x) H(colbar_x(O)), with
// the same column normalization used by the actionable bound. beta = 0
// reproduces moe_return exactly.
inline double regmoe_return(const Trajectory& trajectory, const Matrix& observation, double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("regmoe_return: beta must be in [0, 1]");
    const double base = moe_return(trajectory, observation.cols);
    if (beta == 0.0) return base;
    const auto p_hat = empirical_distribution(trajectory.observations, observation.cols);
    double penalty = 0.0;
    for (int x = 0; x < observation.cols; ++x) {
        if (p_hat[x] > 0.0) penalty += p_hat[x] * column_state_entropy(observation, x);
    }
    return base - beta * penalty;
}

// REINFORCE estimator: (1/N) sum_i score(traj_i) * return_i.
inline std::vector<double> reinforce_gradient(std::span<const Trajectory> batch,
                                              std::span<const double> returns,
                                              const SoftmaxPolicy& policy, Conditioning conditioning) {
    if (batch.empty()) throw std::invalid_argument("reinforce_gradient: empty batch");
    if (batch.size() != returns.size())
        throw std::invalid_argument("reinforce_gradient: batch and returns lengths differ");
    std::vector<double> grad(policy.theta.size(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto score = policy_score(policy, batch[i], conditioning);
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += score[j] * returns[i];
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return grad;
}

// Plain ascent step, no momentum or schedule.
inline void gradient_step(SoftmaxPolicy& policy, std::span<const double> gradient, double alpha) {
    if (gradient.size() != policy.theta.size())
        throw std::invalid_argument("gradient_step: shape mismatch");
    if (!(alpha > 0.0)) throw std::invalid_argument("gradient_step: alpha must be > 0");
    for (double g : gradient)
        if (!std::isfinite(g)) throw std::runtime_error("gradient_step: non-finite gradient");
    for (std::size_t j = 0; j < gradient.size(); ++j) policy.theta[j] += alpha * gradient[j];
}

enum class Objective { Mse, Moe, RegMoe };

inline std::string_view objective_name(Objective o) {
    switch (o) {
        case Objective::Mse: return "pg_mse";
        case Objective::Moe: return "pg_moe";
        case Objective::RegMoe: return "pg_regmoe";
    }
    throw std::logic_error("objective_name: unknown objective");
}

inline Objective objective_from_name(std::string_view name) {
    if (name == "pg_mse") return Objective::Mse;
    if (name == "pg_moe") return Objective::Moe;
    if (name == "pg_regmoe") return Objective::RegMoe;
    throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                                "' (expected pg_mse, pg_moe or pg_regmoe)");
}

struct TrainConfig {
    Objective objective = Objective::Moe;
    double learning_rate = 0.9;
    int iterations = 334;
    int batch_size = 6;
    std::optional<double> beta;  // required iff objective == RegMoe
    std::uint64_t seed = 0;
    int eval_every = 1;
};

inline void validate_config(const TrainConfig& config) {
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (config.iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
    if (config.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (config.eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
    if (config.objective == Objective::RegMoe) {
        if (!config.beta) throw std::invalid_argument("TrainConfig: beta required for pg_regmoe");
        if (*config.beta < 0.0 || *config.beta > 1.0)
            throw std::invalid_argument("TrainConfig: beta must be in [0, 1]");
    } else if (config.beta) {
        throw std::invalid_argument("TrainConfig: beta only applies to pg_regmoe");
    }
}

// One emitted point of a learning curve. Entropies are the exact values
// of the policy that generated the iteration's batch, computed by forward
// marginalization rather than sampling.
struct IterationRecord {
    int iteration = 0;
    double mean_return = 0.0;
    double h_states = 0.0;
    double h_obs = 0.0;
    double gradient_norm = 0.0;
};

struct TrainResult {
    std::vector<IterationRecord> records;
    SoftmaxPolicy policy;
};

// REINFORCE ascent on the trajectory-based objective. Each iteration
// samples batch_size episodes with per-episode seeds derived from
// (seed, iteration, episode), so runs are reproducible regardless of how
// the batch would be parallelized. The gradient is estimated from
// batch-mean-centered returns; centering leaves the estimator mean
// unchanged (the score has zero mean) but keeps the update magnitude
// proportional to the return spread rather than the return level, which
// entropy-scale returns need to avoid saturating the softmax within a
// few iterations.
inline TrainResult train(const PomdpModel& model, const TrainConfig& config) {
    require_valid(model);
    validate_config(config);

    const Conditioning conditioning =
        config.objective == Objective::Mse ? Conditioning::LatentState : Conditioning::Observation;
    const int support = conditioning_support(model, conditioning);

    SoftmaxPolicy policy(support, model.num_actions);
    TrainResult result;

    std::vector<Trajectory> batch(config.batch_size);
    std::vector<double> returns(config.batch_size);

    for (int k = 1; k <= config.iterations; ++k) {
        const PolicyTable table = policy.table();

        for (int i = 0; i < config.batch_size; ++i) {
            std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(k),
                                         static_cast<std::uint64_t>(i)));
            batch[i] = sample_trajectory(model, table, conditioning, rng);
            switch (config.objective) {
                case Objective::Mse:
                    returns[i] = trajectory_entropy(batch[i].states, model.num_states);
                    break;
                case Objective::Moe:
                    returns[i] = moe_return(batch[i], model.num_observations);
                    break;
                case Objective::RegMoe:
                    returns[i] = regmoe_return(batch[i], model.observation, *config.beta);
                    break;
            }
        }

        double return_mean = 0.0;
        for (double r : returns) return_mean += r;
        return_mean /= config.batch_size;
        std::vector<double> centered(returns);
        for (double& r : centered) r -= return_mean;

        const auto gradient = reinforce_gradient(batch, centered, policy, conditioning);
        for (double g : gradient)
            if (!std::isfinite(g))
                throw std::runtime_error("train: non-finite gradient at iteration " + std::to_string(k));

        if (k % config.eval_every == 0 || k == 1 || k == config.iterations) {
            IterationRecord rec;
            rec.iteration = k;
            rec.mean_return = return_mean;
            const auto p_states = exact_state_occupancy(model, table, conditioning);
            rec.h_states = shannon_entropy(p_states);
            rec.h_obs = shannon_entropy(matvec_transposed(model.observation, p_states));
            rec.gradient_norm = norm2(gradient);
            result.records.push_back(rec);
        }

        gradient_step(policy, gradient, config.learning_rate);
    }

    result.policy = std::move(policy);
    return result;
}

}  // namespace moe
