#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "moe/experiment.hpp"
#include "moe/gridworld.hpp"
#include "moe/policy.hpp"
#include "moe/pomdp.hpp"

using Catch::Approx;

namespace {

// Deterministic ring of four states: action 0 steps clockwise, action 1
// counterclockwise. Identity observations, start at state 0.
moe::PomdpModel four_cycle(int horizon) {
    moe::PomdpModel model;
    model.num_states = 4;
    model.num_observations = 4;
    model.num_actions = 2;
    model.horizon = horizon;
    model.transition.assign(2, moe::Matrix(4, 4));
    for (int s = 0; s < 4; ++s) {
        model.transition[0].at(s, (s + 1) % 4) = 1.0;
        model.transition[1].at(s, (s + 3) % 4) = 1.0;
    }
    model.observation = moe::Matrix::identity(4);
    model.initial = {1.0, 0.0, 0.0, 0.0};
    return model;
}

moe::PomdpModel random_tiny_model(std::mt19937_64& rng, int dims, int horizon, bool positive = true) {
    auto fill_row = [&rng, positive](std::span<double> row) {
        double sum = 0.0;
        for (double& v : row) {
            v = positive ? 0.05 + moe::uniform01(rng) : (moe::uniform01(rng) < 0.25 ? 0.0 : moe::uniform01(rng));
            sum += v;
        }
        if (sum == 0.0) {
            row[0] = 1.0;
            sum = 1.0;
        }
        for (double& v : row) v /= sum;
    };
    moe::PomdpModel model;
    model.num_states = dims;
    model.num_observations = dims;
    model.num_actions = 2;
    model.horizon = horizon;
    model.transition.assign(2, moe::Matrix(dims, dims));
    for (auto& t : model.transition)
        for (int s = 0; s < dims; ++s) fill_row(t.row(s));
    model.observation = moe::Matrix(dims, dims);
    for (int s = 0; s < dims; ++s) fill_row(model.observation.row(s));
    model.initial.resize(dims);
    fill_row(model.initial);
    return model;
}

}  // namespace

TEST_CASE("action_distribution") {
    moe::SoftmaxPolicy policy(2, 4);
    const auto uniform = policy.action_distribution(0);
    for (double p : uniform) REQUIRE(p == Approx(0.25).margin(1e-15));

    moe::SoftmaxPolicy skewed(1, 2);
    skewed.theta = {10.0, 0.0};
    const auto p = skewed.action_distribution(0);
    REQUIRE(p[0] == Approx(0.9999546021312976).epsilon(1e-12));
    REQUIRE(p[1] == Approx(4.5397868702434395e-05).epsilon(1e-9));

    REQUIRE_THROWS_AS(policy.action_distribution(2), std::out_of_range);
}

TEST_CASE("action_distribution is invariant to per-row shifts") {
    moe::SoftmaxPolicy policy(1, 3);
    policy.theta = {0.3, -1.2, 0.7};
    const auto before = policy.action_distribution(0);
    for (double& v : policy.theta) v += 13.75;
    const auto after = policy.action_distribution(0);
    for (int a = 0; a < 3; ++a) REQUIRE(after[a] == Approx(before[a]).margin(1e-15));
}

TEST_CASE("policy rows sum to one") {
    std::mt19937_64 rng(12);
    moe::SoftmaxPolicy policy(5, 4);
    for (double& v : policy.theta) v = 6.0 * (moe::uniform01(rng) - 0.5);
    const auto table = policy.table();
    for (int s = 0; s < 5; ++s) {
        double sum = 0.0;
        for (double v : table.row(s)) sum += v;
        REQUIRE(sum == Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("policy_score single-step example") {
    moe::SoftmaxPolicy policy(2, 2);  // uniform
    moe::Trajectory traj;
    traj.states = {0};
    traj.observations = {0};
    traj.actions = {0};
    const auto score = moe::policy_score(policy, traj, moe::Conditioning::Observation);
    REQUIRE(score[0] == Approx(0.5).margin(1e-15));
    REQUIRE(score[1] == Approx(-0.5).margin(1e-15));
    REQUIRE(score[2] == 0.0);
    REQUIRE(score[3] == 0.0);
}

TEST_CASE("policy_score has zero mean under the trajectory law") {
    std::mt19937_64 rng(34);
    const auto model = random_tiny_model(rng, 3, 4);
    moe::SoftmaxPolicy policy(3, 2);
    for (double& v : policy.theta) v = 2.0 * (moe::uniform01(rng) - 0.5);
    const auto table = policy.table();

    const int samples = 100000;
    std::vector<double> mean(policy.theta.size(), 0.0), m2(policy.theta.size(), 0.0);
    std::mt19937_64 episode_rng(777);
    for (int i = 0; i < samples; ++i) {
        const auto traj = moe::sample_trajectory(model, table, moe::Conditioning::Observation, episode_rng);
        const auto score = moe::policy_score(policy, traj, moe::Conditioning::Observation);
        for (std::size_t j = 0; j < score.size(); ++j) {
            const double delta = score[j] - mean[j];
            mean[j] += delta / (i + 1.0);
            m2[j] += delta * (score[j] - mean[j]);
        }
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
        const double se = std::sqrt(m2[j] / (samples - 1.0) / samples);
        REQUIRE(std::abs(mean[j]) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("policy_score matches finite differences of the log-likelihood") {
    std::mt19937_64 rng(56);
    const auto model = random_tiny_model(rng, 3, 5);
    moe::SoftmaxPolicy policy(3, 2);
    for (double& v : policy.theta) v = 2.0 * (moe::uniform01(rng) - 0.5);

    std::mt19937_64 episode_rng(4242);
    const auto traj =
        moe::sample_trajectory(model, policy.table(), moe::Conditioning::Observation, episode_rng);
    const auto score = moe::policy_score(policy, traj, moe::Conditioning::Observation);

    // Only the policy factors of log q depend on theta, so the
    // finite-difference target is sum_t log pi(a_t | x_t).
    auto log_likelihood = [&traj](const moe::SoftmaxPolicy& p) {
        double ll = 0.0;
        for (int t = 0; t < traj.length(); ++t)
            ll += std::log(p.action_distribution(traj.observations[t])[traj.actions[t]]);
        return ll;
    };
    const double h = 1e-6;
    for (std::size_t j = 0; j < policy.theta.size(); ++j) {
        moe::SoftmaxPolicy probe = policy;
        probe.theta[j] += h;
        const double plus = log_likelihood(probe);
        probe.theta[j] -= 2.0 * h;
        const double minus = log_likelihood(probe);
        const double fd = (plus - minus) / (2.0 * h);
        const double scale = std::max(std::abs(score[j]), 1e-6);
        REQUIRE(std::abs(fd - score[j]) / scale <= 1e-6);
    }
}

TEST_CASE("moe_return") {
    moe::Trajectory constant;
    constant.observations = {2, 2, 2};
    REQUIRE(moe::moe_return(constant, 4) == 0.0);

    moe::Trajectory distinct;
    distinct.observations = {0, 1, 2, 3, 4};
    REQUIRE(moe::moe_return(distinct, 5) == Approx(std::log(5.0)).epsilon(1e-12));

    moe::Trajectory mixed;
    mixed.observations = {0, 0, 1, 1};
    REQUIRE(moe::moe_return(mixed, 4) == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("regmoe_return") {
    SECTION("beta = 0 equals moe_return exactly") {
        std::mt19937_64 rng(78);
        const auto model = random_tiny_model(rng, 4, 6);
        std::mt19937_64 episode_rng(9);
        const auto traj = moe::sample_trajectory(model, moe::PolicyTable::uniform(4, 2),
                                                 moe::Conditioning::Observation, episode_rng);
        REQUIRE(moe::regmoe_return(traj, model.observation, 0.0) ==
                moe::moe_return(traj, model.num_observations));
    }

    SECTION("permutation channel: zero column entropies for any beta") {
        moe::Matrix perm(3, 3);
        perm.at(0, 1) = 1.0;
        perm.at(1, 2) = 1.0;
        perm.at(2, 0) = 1.0;
        moe::Trajectory traj;
        traj.observations = {1, 2, 0, 1};
        for (double beta : {0.3, 0.8, 1.0})
            REQUIRE(moe::regmoe_return(traj, perm, beta) == Approx(moe::moe_return(traj, 3)).margin(1e-15));
    }

    SECTION("beta = 0.8 penalizes entropic columns on the structured gridworld") {
        const auto env = moe::canonical_environment("structured");
        std::mt19937_64 episode_rng(11);
        const auto traj = moe::sample_trajectory(
            env.model, moe::PolicyTable::uniform(env.model.num_observations, 4),
            moe::Conditioning::Observation, episode_rng);
        const double reg = moe::regmoe_return(traj, env.model.observation, 0.8);
        REQUIRE(reg < moe::moe_return(traj, env.model.num_observations));
    }

    SECTION("beta outside [0, 1] is rejected") {
        moe::Trajectory traj;
        traj.observations = {0};
        REQUIRE_THROWS_AS(moe::regmoe_return(traj, moe::Matrix::identity(2), 1.5), std::invalid_argument);
    }
}

TEST_CASE("reinforce_gradient with constant returns has zero mean") {
    std::mt19937_64 rng(90);
    const auto model = random_tiny_model(rng, 3, 4);
    moe::SoftmaxPolicy policy(3, 2);
    for (double& v : policy.theta) v = moe::uniform01(rng) - 0.5;
    const auto table = policy.table();

    const int samples = 100000;
    const double constant_return = 2.5;
    std::vector<moe::Trajectory> batch(samples);
    std::vector<double> returns(samples, constant_return);
    std::mt19937_64 episode_rng(888);
    for (int i = 0; i < samples; ++i)
        batch[i] = moe::sample_trajectory(model, table, moe::Conditioning::Observation, episode_rng);
    const auto grad = moe::reinforce_gradient(batch, returns, policy, moe::Conditioning::Observation);

    // Per-entry standard errors of score * constant.
    std::vector<double> mean(grad.size(), 0.0), m2(grad.size(), 0.0);
    for (int i = 0; i < samples; ++i) {
        const auto score = moe::policy_score(policy, batch[i], moe::Conditioning::Observation);
        for (std::size_t j = 0; j < grad.size(); ++j) {
            const double sample = score[j] * constant_return;
            const double delta = sample - mean[j];
            mean[j] += delta / (i + 1.0);
            m2[j] += delta * (sample - mean[j]);
        }
    }
    for (std::size_t j = 0; j < grad.size(); ++j) {
        const double se = std::sqrt(m2[j] / (samples - 1.0) / samples);
        REQUIRE(std::abs(grad[j]) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("gradient estimators agree on the tiny enumerable POMDP") {
    std::mt19937_64 rng(111);
    const auto model = random_tiny_model(rng, 2, 3);  // |S| = |X| = |A| = 2, T = 3
    moe::SoftmaxPolicy policy(2, 2);
    for (double& v : policy.theta) v = 2.0 * (moe::uniform01(rng) - 0.5);
    const int X = model.num_observations;
    auto ret = [X](const moe::Trajectory& t) { return moe::moe_return(t, X); };

    const auto exact =
        moe::policy_gradient_by_enumeration(model, policy, moe::Conditioning::Observation, ret);
    const auto fd =
        moe::policy_gradient_by_finite_differences(model, policy, moe::Conditioning::Observation, ret);
    for (std::size_t j = 0; j < exact.size(); ++j) {
        const double scale = std::max(std::abs(exact[j]), 1e-8);
        REQUIRE(std::abs(exact[j] - fd[j]) / scale <= 1e-5);
    }

    const auto table = policy.table();
    const int samples = 100000;
    std::vector<double> mean(exact.size(), 0.0), m2(exact.size(), 0.0);
    std::mt19937_64 episode_rng(999);
    for (int i = 0; i < samples; ++i) {
        const auto traj = moe::sample_trajectory(model, table, moe::Conditioning::Observation, episode_rng);
        const auto score = moe::policy_score(policy, traj, moe::Conditioning::Observation);
        const double r = ret(traj);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double sample = score[j] * r;
            const double delta = sample - mean[j];
            mean[j] += delta / (i + 1.0);
            m2[j] += delta * (sample - mean[j]);
        }
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
        const double se = std::sqrt(m2[j] / (samples - 1.0) / samples);
        REQUIRE(std::abs(mean[j] - exact[j]) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("gradient_step") {
    moe::SoftmaxPolicy policy(2, 2);
    policy.theta = {0.5, -0.25, 1.0, 0.0};
    const auto saved = policy.theta;

    SECTION("zero gradient leaves the policy unchanged bit-for-bit") {
        const std::vector<double> zero(4, 0.0);
        moe::gradient_step(policy, zero, 0.9);
        REQUIRE(policy.theta == saved);
    }

    SECTION("alpha = 0.9 applies the scaled gradient entrywise") {
        const std::vector<double> g = {1.0, -2.0, 0.5, 4.0};
        moe::gradient_step(policy, g, 0.9);
        for (int j = 0; j < 4; ++j) REQUIRE(policy.theta[j] == Approx(saved[j] + 0.9 * g[j]).margin(1e-15));
    }

    SECTION("two steps accumulate linearly") {
        const std::vector<double> g1 = {0.125, 0.25, -0.5, 1.0};
        const std::vector<double> g2 = {-0.25, 0.5, 0.125, -1.0};
        moe::gradient_step(policy, g1, 0.5);
        moe::gradient_step(policy, g2, 0.5);
        for (int j = 0; j < 4; ++j)
            REQUIRE(policy.theta[j] == Approx(saved[j] + 0.5 * (g1[j] + g2[j])).margin(1e-15));
    }

    SECTION("non-finite gradients abort") {
        const std::vector<double> bad = {1.0, std::numeric_limits<double>::infinity(), 0.0, 0.0};
        REQUIRE_THROWS_AS(moe::gradient_step(policy, bad, 0.9), std::runtime_error);
    }
}

TEST_CASE("train: MOE and MSE coincide bit-for-bit on an identity channel") {
    const auto model = four_cycle(8);
    moe::TrainConfig config;
    config.learning_rate = 0.5;
    config.iterations = 60;
    config.batch_size = 4;
    config.seed = 314159;
    config.eval_every = 1;

    config.objective = moe::Objective::Moe;
    const auto moe_result = moe::train(model, config);
    config.objective = moe::Objective::Mse;
    const auto mse_result = moe::train(model, config);

    REQUIRE(moe_result.records.size() == mse_result.records.size());
    for (std::size_t i = 0; i < moe_result.records.size(); ++i) {
        REQUIRE(moe_result.records[i].iteration == mse_result.records[i].iteration);
        REQUIRE(moe_result.records[i].mean_return == mse_result.records[i].mean_return);
        REQUIRE(moe_result.records[i].h_states == mse_result.records[i].h_states);
        REQUIRE(moe_result.records[i].h_obs == mse_result.records[i].h_obs);
        REQUIRE(moe_result.records[i].gradient_norm == mse_result.records[i].gradient_norm);
    }
    REQUIRE(moe_result.policy.theta == mse_result.policy.theta);
}

TEST_CASE("train: RegMOE with beta = 0 reproduces MOE bit-for-bit") {
    std::mt19937_64 rng(222);
    const auto model = random_tiny_model(rng, 3, 5);
    moe::TrainConfig config;
    config.learning_rate = 0.5;
    config.iterations = 40;
    config.batch_size = 5;
    config.seed = 2024;

    config.objective = moe::Objective::Moe;
    const auto moe_result = moe::train(model, config);
    config.objective = moe::Objective::RegMoe;
    config.beta = 0.0;
    const auto reg_result = moe::train(model, config);

    REQUIRE(moe_result.policy.theta == reg_result.policy.theta);
    for (std::size_t i = 0; i < moe_result.records.size(); ++i)
        REQUIRE(moe_result.records[i].h_states == reg_result.records[i].h_states);
}

TEST_CASE("train climbs to near-uniform cycling on the deterministic 4-cycle") {
    const auto model = four_cycle(8);

    // Exhaustive search over deterministic policies certifies the optimum.
    double best = 0.0;
    for (int mask = 0; mask < 16; ++mask) {
        moe::PolicyTable table;
        table.num_symbols = 4;
        table.num_actions = 2;
        table.probs.assign(8, 0.0);
        for (int s = 0; s < 4; ++s) table.probs[2 * s + ((mask >> s) & 1)] = 1.0;
        best = std::max(best, moe::shannon_entropy(moe::exact_state_occupancy(model, table)));
    }
    REQUIRE(best == Approx(std::log(4.0)).margin(1e-12));

    moe::TrainConfig config;
    config.objective = moe::Objective::Moe;
    config.learning_rate = 0.5;
    config.iterations = 2000;
    config.batch_size = 10;
    config.seed = 7;
    config.eval_every = 100000;  // record only the first and last iterations

    const auto result = moe::train(model, config);
    REQUIRE(result.records.back().h_states >= 0.95 * std::log(4.0));
}

TEST_CASE("train: exact H(S|pi) improves from start to finish for almost all seeds") {
    const auto model = four_cycle(8);
    int improved = 0;
    for (int seed = 0; seed < 16; ++seed) {
        moe::TrainConfig config;
        config.objective = moe::Objective::Moe;
        config.learning_rate = 0.5;
        config.iterations = 600;
        config.batch_size = 10;
        config.seed = 1000 + seed;
        config.eval_every = 100000;
        const auto result = moe::train(model, config);
        if (result.records.back().h_states > result.records.front().h_states) ++improved;
    }
    REQUIRE(improved >= 15);
}

TEST_CASE("shifted softmax parameters sample identical trajectories") {
    std::mt19937_64 rng(333);
    const auto model = random_tiny_model(rng, 3, 6);
    moe::SoftmaxPolicy policy(3, 2);
    // Dyadic parameters so the row shift is exact in floating point.
    policy.theta = {0.5, -0.25, 0.75, 0.125, -1.5, 0.0};
    moe::SoftmaxPolicy shifted = policy;
    for (double& v : shifted.theta) v += 2.25;

    std::mt19937_64 rng_a(606), rng_b(606);
    const auto a = moe::sample_trajectory(model, policy.table(), moe::Conditioning::Observation, rng_a);
    const auto b = moe::sample_trajectory(model, shifted.table(), moe::Conditioning::Observation, rng_b);
    REQUIRE(a.states == b.states);
    REQUIRE(a.observations == b.observations);
    REQUIRE(a.actions == b.actions);
}

TEST_CASE("trajectory objective is a lower bound on the exact MOE objective") {
    std::mt19937_64 rng(444);
    for (int i = 0; i < 20; ++i) {
        const auto model = random_tiny_model(rng, 2 + static_cast<int>(moe::uniform01(rng) * 1.99), 3, false);
        moe::SoftmaxPolicy policy(model.num_observations, 2);
        for (double& v : policy.theta) v = 2.0 * (moe::uniform01(rng) - 0.5);
        const int X = model.num_observations;
        const double trajectory_objective = moe::trajectory_objective_by_enumeration(
            model, policy, moe::Conditioning::Observation,
            [X](const moe::Trajectory& t) { return moe::moe_return(t, X); });
        const double exact_objective =
            moe::shannon_entropy(moe::exact_observation_occupancy(model, policy.table()));
        REQUIRE(trajectory_objective <= exact_objective + 1e-10);
    }
}

TEST_CASE("validate_config") {
    moe::TrainConfig config;
    config.objective = moe::Objective::RegMoe;
    REQUIRE_THROWS_AS(moe::validate_config(config), std::invalid_argument);  // missing beta
    config.beta = 0.8;
    REQUIRE_NOTHROW(moe::validate_config(config));
    config.objective = moe::Objective::Moe;
    REQUIRE_THROWS_AS(moe::validate_config(config), std::invalid_argument);  // stray beta
    config.beta.reset();
    config.learning_rate = 0.0;
    REQUIRE_THROWS_AS(moe::validate_config(config), std::invalid_argument);
}
