#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "moe/matrix.hpp"

namespace moe {

// All entropies are in nats (natural logarithm).
// Probabilities below kZeroProbability are treated as exact zeros, which
// realizes the 0*ln(0) := 0 convention without branching on signed zeros.
inline constexpr double kZeroProbability = 1e-300;
inline constexpr double kDistributionTolerance = 1e-10;

inline bool is_distribution(std::span<const double> p, double tol = kDistributionTolerance) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

inline double shannon_entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > kZeroProbability) h -= v * std::log(v);
    }
    return h;
}

// Renyi entropy of order alpha. alpha = infinity gives the min-entropy
// -ln(max p). alpha == 1 is rejected; callers use shannon_entropy.
inline double renyi_entropy(std::span<const double> p, double alpha) {
    if (std::isinf(alpha) && alpha > 0) {
        double mx = 0.0;
        for (double v : p) mx = std::max(mx, v);
        if (mx <= 0.0) throw std::invalid_argument("renyi_entropy: distribution has no mass");
        return -std::log(mx);
    }
    if (!(alpha > 0.0)) throw std::invalid_argument("renyi_entropy: alpha must be > 0");
    if (alpha == 1.0) throw std::invalid_argument("renyi_entropy: alpha = 1 is Shannon entropy");
    double s = 0.0;
    for (double v : p) {
        if (v > kZeroProbability) s += std::pow(v, alpha);
    }
    return std::log(s) / (1.0 - alpha);
}

inline std::vector<double> empirical_distribution(std::span<const int> sequence, int support_size) {
    if (sequence.empty()) throw std::invalid_argument("empirical_distribution: empty sequence");
    if (support_size <= 0) throw std::invalid_argument("empirical_distribution: support_size must be positive");
    std::vector<double> counts(support_size, 0.0);
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        const int v = sequence[t];
        if (v < 0 || v >= support_size)
            throw std::out_of_range("empirical_distribution: index " + std::to_string(v) +
                                    " at position " + std::to_string(t) + " outside support [0, " +
                                    std::to_string(support_size) + ")");
        counts[v] += 1.0;
    }
    const double inv = 1.0 / static_cast<double>(sequence.size());
    for (double& c : counts) c *= inv;
    return counts;
}

// H(X|x): Shannon entropy of the empirical distribution of one sequence.
inline double trajectory_entropy(std::span<const int> sequence, int support_size) {
    return shannon_entropy(empirical_distribution(sequence, support_size));
}

// E[H(O)] = mean Shannon entropy of the observation rows; the scalar used
// to classify an observation matrix as well-behaved or challenging.
inline double mean_observation_function_entropy(const Matrix& observation) {
    if (observation.rows == 0) throw std::invalid_argument("mean_observation_function_entropy: empty matrix");
    double sum = 0.0;
    for (int s = 0; s < observation.rows; ++s) sum += shannon_entropy(observation.row(s));
    return sum / observation.rows;
}

// H(X|S) = sum_s p_S(s) H(O(.|s)).
inline double conditional_entropy_obs_given_state(const Matrix& observation,
                                                  std::span<const double> p_states) {
    if (static_cast<int>(p_states.size()) != observation.rows)
        throw std::invalid_argument("conditional_entropy_obs_given_state: dimension mismatch");
    double h = 0.0;
    for (int s = 0; s < observation.rows; ++s) {
        if (p_states[s] > kZeroProbability) h += p_states[s] * shannon_entropy(observation.row(s));
    }
    return h;
}

// Entropy of observation column x normalized to a distribution over states
// (the uniform-prior pseudo-posterior). A raw column of a row-stochastic
// matrix is not a distribution, so the normalization is part of the
// definition here; see the bounds module notes.
inline double column_state_entropy(const Matrix& observation, int x) {
    if (x < 0 || x >= observation.cols) throw std::out_of_range("column_state_entropy: column out of range");
    double total = 0.0;
    for (int s = 0; s < observation.rows; ++s) total += observation.at(s, x);
    if (total <= kZeroProbability)
        throw std::domain_error("column_state_entropy: observation " + std::to_string(x) +
                                " is unreachable from every state (all-zero column)");
    double h = 0.0;
    for (int s = 0; s < observation.rows; ++s) {
        const double v = observation.at(s, x) / total;
        if (v > kZeroProbability) h -= v * std::log(v);
    }
    return h;
}

}  // namespace moe
