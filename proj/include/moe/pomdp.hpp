#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moe/entropy.hpp"
#include "moe/matrix.hpp"
#include "moe/rng.hpp"

namespace moe {

// Construction-time tolerance on stochasticity of model rows.
inline constexpr double kStochasticTolerance = 1e-12;
// Tolerance accepted on policy rows handed to the simulator.
inline constexpr double kPolicyTolerance = 1e-9;

// Finite POMDP without rewards: latent states, observations emitted by a
// row-stochastic observation matrix, per-action transition matrices, a
// fixed initial distribution and a finite horizon.
struct PomdpModel {
    int num_states = 0;
    int num_observations = 0;
    int num_actions = 0;
    int horizon = 1;
    std::vector<Matrix> transition;  // one [S x S] matrix per action; row = current state
    Matrix observation;              // [S x X]
    std::vector<double> initial;     // [S]
    std::vector<std::string> state_labels;        // optional, display only
    std::vector<std::string> observation_labels;  // optional, display only
};

// One episode; the three index sequences share the same length T. The
// final action has no consequence but is sampled so episodes stay
// rectangular.
struct Trajectory {
    std::vector<int> states;
    std::vector<int> observations;
    std::vector<int> actions;

    int length() const { return static_cast<int>(states.size()); }
};

// Whether a policy reads the emitted observation or the latent state. The
// latter realizes the oracle baseline that sees the true states.
enum class Conditioning { Observation, LatentState };

// Row-stochastic action table, one row per conditioning symbol. This is
// the concrete policy object the simulator consumes; parameterized
// policies materialize into it.
struct PolicyTable {
    int num_symbols = 0;
    int num_actions = 0;
    std::vector<double> probs;  // [symbol][action], row-major

    std::span<const double> row(int symbol) const {
        return {probs.data() + static_cast<std::size_t>(symbol) * num_actions,
                static_cast<std::size_t>(num_actions)};
    }

    static PolicyTable uniform(int symbols, int actions) {
        PolicyTable t;
        t.num_symbols = symbols;
        t.num_actions = actions;
        t.probs.assign(static_cast<std::size_t>(symbols) * actions, 1.0 / actions);
        return t;
    }
};

namespace detail {

inline void check_row_stochastic(std::span<const double> row, double tol, const std::string& what,
                                 std::vector<std::string>& violations) {
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double v = row[j];
        if (!std::isfinite(v)) {
            violations.push_back(what + " has non-finite entry at column " + std::to_string(j));
            return;
        }
        if (v < 0.0 || v > 1.0)
            violations.push_back(what + " entry " + std::to_string(j) + " = " + std::to_string(v) +
                                 " outside [0, 1]");
        sum += v;
    }
    const double residual = std::abs(sum - 1.0);
    if (residual > tol) {
        std::ostringstream os;
        os << what << " sums to " << std::setprecision(17) << sum << " (residual "
           << std::setprecision(6) << residual << ")";
        violations.push_back(os.str());
    }
}

}  // namespace detail

// Checks every structural invariant of the model. Violations are data,
// not faults: an empty result means the model is valid.
inline std::vector<std::string> validate_model(const PomdpModel& model) {
    std::vector<std::string> v;
    if (model.num_states <= 0) v.push_back("num_states must be positive");
    if (model.num_observations <= 0) v.push_back("num_observations must be positive");
    if (model.num_actions <= 0) v.push_back("num_actions must be positive");
    if (model.horizon < 1) v.push_back("horizon must be >= 1");
    if (!v.empty()) return v;

    if (static_cast<int>(model.transition.size()) != model.num_actions)
        v.push_back("transition must hold one matrix per action");
    for (int a = 0; a < static_cast<int>(model.transition.size()); ++a) {
        const Matrix& m = model.transition[a];
        if (m.rows != model.num_states || m.cols != model.num_states) {
            v.push_back("transition matrix for action " + std::to_string(a) + " has wrong shape");
            continue;
        }
        for (int s = 0; s < m.rows; ++s)
            detail::check_row_stochastic(m.row(s), kStochasticTolerance,
                                         "transition slice (state " + std::to_string(s) + ", action " +
                                             std::to_string(a) + ")",
                                         v);
    }
    if (model.observation.rows != model.num_states || model.observation.cols != model.num_observations) {
        v.push_back("observation matrix has wrong shape");
    } else {
        for (int s = 0; s < model.observation.rows; ++s)
            detail::check_row_stochastic(model.observation.row(s), kStochasticTolerance,
                                         "observation row " + std::to_string(s), v);
    }
    if (static_cast<int>(model.initial.size()) != model.num_states)
        v.push_back("initial distribution has wrong length");
    else
        detail::check_row_stochastic(model.initial, kStochasticTolerance, "initial distribution", v);
    return v;
}

inline void require_valid(const PomdpModel& model) {
    const auto violations = validate_model(model);
    if (violations.empty()) return;
    std::string msg = "invalid POMDP model:";
    for (const auto& s : violations) msg += "\n  " + s;
    throw std::invalid_argument(msg);
}

inline int conditioning_support(const PomdpModel& model, Conditioning conditioning) {
    return conditioning == Conditioning::Observation ? model.num_observations : model.num_states;
}

// Policies are rejected, not repaired, when a row fails to normalize
// within kPolicyTolerance.
inline void require_policy_compatible(const PomdpModel& model, const PolicyTable& policy,
                                      Conditioning conditioning) {
    const int support = conditioning_support(model, conditioning);
    if (policy.num_symbols != support)
        throw std::invalid_argument("policy has " + std::to_string(policy.num_symbols) +
                                    " rows but the conditioning support is " + std::to_string(support));
    if (policy.num_actions != model.num_actions)
        throw std::invalid_argument("policy action count does not match the model");
    for (int symbol = 0; symbol < policy.num_symbols; ++symbol) {
        double sum = 0.0;
        for (double p : policy.row(symbol)) {
            if (!std::isfinite(p) || p < 0.0)
                throw std::invalid_argument("policy row " + std::to_string(symbol) +
                                            " has a negative or non-finite entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > kPolicyTolerance)
            throw std::invalid_argument("policy row " + std::to_string(symbol) +
                                        " does not normalize: sum = " + std::to_string(sum));
    }
}

// Samples one episode: s1 ~ mu, x_t ~ O(.|s_t), a_t ~ pi(.|symbol_t),
// s_{t+1} ~ P(.|s_t, a_t). Identical seeds give bit-identical episodes.
inline Trajectory sample_trajectory(const PomdpModel& model, const PolicyTable& policy,
                                    Conditioning conditioning, std::mt19937_64& rng) {
    require_policy_compatible(model, policy, conditioning);
    const int T = model.horizon;
    Trajectory traj;
    traj.states.reserve(T);
    traj.observations.reserve(T);
    traj.actions.reserve(T);

    int state = sample_categorical(model.initial, rng);
    for (int t = 0; t < T; ++t) {
        traj.states.push_back(state);
        const int obs = sample_categorical(model.observation.row(state), rng);
        traj.observations.push_back(obs);
        const int symbol = conditioning == Conditioning::Observation ? obs : state;
        const int action = sample_categorical(policy.row(symbol), rng);
        traj.actions.push_back(action);
        if (t + 1 < T) state = sample_categorical(model.transition[action].row(state), rng);
    }
    return traj;
}

namespace detail {

// pi_bar(a|s): per-state action distribution after averaging the policy
// over the emission at s (or the policy row itself for latent
// conditioning).
inline Matrix state_action_policy(const PomdpModel& model, const PolicyTable& policy,
                                  Conditioning conditioning) {
    Matrix pi_bar(model.num_states, model.num_actions, 0.0);
    if (conditioning == Conditioning::LatentState) {
        for (int s = 0; s < model.num_states; ++s)
            for (int a = 0; a < model.num_actions; ++a) pi_bar.at(s, a) = policy.row(s)[a];
        return pi_bar;
    }
    for (int s = 0; s < model.num_states; ++s) {
        auto obs_row = model.observation.row(s);
        for (int x = 0; x < model.num_observations; ++x) {
            const double w = obs_row[x];
            if (w <= 0.0) continue;
            auto pi_row = policy.row(x);
            for (int a = 0; a < model.num_actions; ++a) pi_bar.at(s, a) += w * pi_row[a];
        }
    }
    return pi_bar;
}

}  // namespace detail

// p_S: the time-averaged marginal over latent states, computed exactly by
// forward marginalization.
inline std::vector<double> exact_state_occupancy(const PomdpModel& model, const PolicyTable& policy,
                                                 Conditioning conditioning = Conditioning::Observation) {
    require_policy_compatible(model, policy, conditioning);
    const Matrix pi_bar = detail::state_action_policy(model, policy, conditioning);
    const int S = model.num_states;
    std::vector<double> current(model.initial.begin(), model.initial.end());
    std::vector<double> occupancy(S, 0.0);
    std::vector<double> next(S, 0.0);
    for (int t = 0; t < model.horizon; ++t) {
        for (int s = 0; s < S; ++s) occupancy[s] += current[s];
        if (t + 1 == model.horizon) break;
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s) {
            const double ps = current[s];
            if (ps <= 0.0) continue;
            for (int a = 0; a < model.num_actions; ++a) {
                const double w = ps * pi_bar.at(s, a);
                if (w <= 0.0) continue;
                auto row = model.transition[a].row(s);
                for (int s2 = 0; s2 < S; ++s2) next[s2] += w * row[s2];
            }
        }
        current.swap(next);
    }
    const double inv_T = 1.0 / model.horizon;
    for (double& v : occupancy) v *= inv_T;
    return occupancy;
}

// p_X = O^T p_S.
inline std::vector<double> exact_observation_occupancy(
    const PomdpModel& model, const PolicyTable& policy,
    Conditioning conditioning = Conditioning::Observation) {
    const auto p_states = exact_state_occupancy(model, policy, conditioning);
    return matvec_transposed(model.observation, p_states);
}

struct WeightedTrajectory {
    Trajectory trajectory;
    double probability = 0.0;
};

inline constexpr std::int64_t kDefaultEnumerationCap = 10'000'000;

// Brute-force expansion of the joint law over (state, observation, action)
// sequences. Zero-probability branches are pruned, so the returned
// probabilities sum to one over a possibly much smaller set than the
// worst-case (S*X*A)^T count that gates the call.
inline std::vector<WeightedTrajectory> enumerate_trajectories(
    const PomdpModel& model, const PolicyTable& policy,
    Conditioning conditioning = Conditioning::Observation,
    std::int64_t cap = kDefaultEnumerationCap) {
    require_policy_compatible(model, policy, conditioning);
    const double per_step = static_cast<double>(model.num_states) * model.num_observations *
                            model.num_actions;
    const double total = std::pow(per_step, model.horizon);
    if (total > static_cast<double>(cap)) {
        std::ostringstream os;
        os << "enumeration would expand " << std::setprecision(6) << total << " entries, above the cap of "
           << cap;
        throw std::length_error(os.str());
    }

    std::vector<WeightedTrajectory> out;
    Trajectory partial;
    const int T = model.horizon;

    auto expand = [&](auto&& self, int t, int prev_state, int prev_action, double prob) -> void {
        if (t == T) {
            out.push_back({partial, prob});
            return;
        }
        for (int s = 0; s < model.num_states; ++s) {
            const double ps = t == 0 ? model.initial[s] : model.transition[prev_action].at(prev_state, s);
            if (ps <= 0.0) continue;
            partial.states.push_back(s);
            for (int x = 0; x < model.num_observations; ++x) {
                const double px = model.observation.at(s, x);
                if (px <= 0.0) continue;
                partial.observations.push_back(x);
                const int symbol = conditioning == Conditioning::Observation ? x : s;
                for (int a = 0; a < model.num_actions; ++a) {
                    const double pa = policy.row(symbol)[a];
                    if (pa <= 0.0) continue;
                    partial.actions.push_back(a);
                    self(self, t + 1, s, a, prob * ps * px * pa);
                    partial.actions.pop_back();
                }
                partial.observations.pop_back();
            }
            partial.states.pop_back();
        }
    };
    expand(expand, 0, -1, -1, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Model text format: dimensions and horizon, then dense row-major blocks
// for mu, one transition block per action, and O. Values are written with
// 17 significant digits so write-then-read reproduces every entry
// bit-for-bit.

inline void save_model(const PomdpModel& model, std::ostream& os) {
    os << std::setprecision(17);
    os << "pomdp v1\n";
    os << "states " << model.num_states << "\n";
    os << "observations " << model.num_observations << "\n";
    os << "actions " << model.num_actions << "\n";
    os << "horizon " << model.horizon << "\n";
    os << "initial\n";
    for (int s = 0; s < model.num_states; ++s) os << model.initial[s] << (s + 1 < model.num_states ? ' ' : '\n');
    for (int a = 0; a < model.num_actions; ++a) {
        os << "transition " << a << "\n";
        for (int s = 0; s < model.num_states; ++s) {
            for (int s2 = 0; s2 < model.num_states; ++s2)
                os << model.transition[a].at(s, s2) << (s2 + 1 < model.num_states ? ' ' : '\n');
        }
    }
    os << "observation\n";
    for (int s = 0; s < model.num_states; ++s) {
        for (int x = 0; x < model.num_observations; ++x)
            os << model.observation.at(s, x) << (x + 1 < model.num_observations ? ' ' : '\n');
    }
    os << "end\n";
}

inline void save_model(const PomdpModel& model, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    save_model(model, os);
}

namespace detail {

inline void expect_token(std::istream& is, const std::string& expected) {
    std::string tok;
    if (!(is >> tok) || tok != expected)
        throw std::runtime_error("model parse error: expected '" + expected + "', got '" + tok + "'");
}

inline double read_double(std::istream& is, const char* what) {
    double v;
    if (!(is >> v)) throw std::runtime_error(std::string("model parse error: missing value for ") + what);
    return v;
}

inline int read_positive_int(std::istream& is, const char* what) {
    int v;
    if (!(is >> v) || v <= 0)
        throw std::runtime_error(std::string("model parse error: bad positive integer for ") + what);
    return v;
}

}  // namespace detail

inline PomdpModel load_model(std::istream& is) {
    detail::expect_token(is, "pomdp");
    detail::expect_token(is, "v1");
    PomdpModel model;
    detail::expect_token(is, "states");
    model.num_states = detail::read_positive_int(is, "states");
    detail::expect_token(is, "observations");
    model.num_observations = detail::read_positive_int(is, "observations");
    detail::expect_token(is, "actions");
    model.num_actions = detail::read_positive_int(is, "actions");
    detail::expect_token(is, "horizon");
    model.horizon = detail::read_positive_int(is, "horizon");
    detail::expect_token(is, "initial");
    model.initial.resize(model.num_states);
    for (double& v : model.initial) v = detail::read_double(is, "initial");
    model.transition.assign(model.num_actions, Matrix(model.num_states, model.num_states));
    for (int a = 0; a < model.num_actions; ++a) {
        detail::expect_token(is, "transition");
        int idx = -1;
        if (!(is >> idx) || idx != a)
            throw std::runtime_error("model parse error: transition blocks out of order");
        for (double& v : model.transition[a].data) v = detail::read_double(is, "transition");
    }
    detail::expect_token(is, "observation");
    model.observation = Matrix(model.num_states, model.num_observations);
    for (double& v : model.observation.data) v = detail::read_double(is, "observation");
    detail::expect_token(is, "end");
    return model;
}

inline PomdpModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return load_model(is);
}

}  // namespace moe
