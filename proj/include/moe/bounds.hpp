#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "moe/entropy.hpp"
#include "moe/matrix.hpp"
#include "moe/pomdp.hpp"

namespace moe {

// Entries at or below this threshold block the Hadamard inverse.
inline constexpr double kPositiveEntryThreshold = 1e-12;
inline constexpr double kConsistencyTolerance = 1e-9;

// Largest singular value via power iteration on V^T V (or V V^T,
// whichever is smaller), with a Rayleigh-quotient stopping rule. The
// implementation is validated against an independent Jacobi eigensolver
// in the test suite.
inline double max_singular_value(const Matrix& m) {
    if (m.rows <= 0 || m.cols <= 0) throw std::invalid_argument("max_singular_value: empty matrix");
    if (!m.all_finite()) throw std::invalid_argument("max_singular_value: non-finite entry");

    const bool tall = m.cols <= m.rows;  // iterate on the smaller Gram matrix
    const int n = tall ? m.cols : m.rows;

    std::mt19937_64 rng(0x5EEDF00Dull);  // fixed seed: deterministic result
    std::vector<double> v(n);
    for (double& x : v) x = 0.5 + uniform01(rng);
    const double nv = norm2(v);
    for (double& x : v) x /= nv;

    double rho = 0.0;
    constexpr int kMaxIterations = 100000;
    constexpr double kRelTol = 1e-12;
    std::vector<double> w;
    for (int it = 0; it < kMaxIterations; ++it) {
        if (tall) {
            w = matvec_transposed(m, matvec(m, v));  // (V^T V) v
        } else {
            w = matvec(m, matvec_transposed(m, v));  // (V V^T) v
        }
        const double rho_new = dot(v, w);  // Rayleigh quotient of the Gram matrix
        const double wn = norm2(w);
        if (wn == 0.0) return 0.0;
        for (int i = 0; i < n; ++i) v[i] = w[i] / wn;
        if (it > 0 && std::abs(rho_new - rho) <= kRelTol * std::max(std::abs(rho_new), 1e-30)) {
            rho = rho_new;
            break;
        }
        rho = rho_new;
    }
    return std::sqrt(std::max(rho, 0.0));
}

inline bool has_strictly_positive_entries(const Matrix& m, double threshold = kPositiveEntryThreshold) {
    for (double v : m.data)
        if (!(v > threshold)) return false;
    return true;
}

// Entrywise reciprocal. Zero entries are a hard error: callers must
// surface the dependent bound as undefined instead of substituting a
// value.
inline Matrix hadamard_inverse(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) {
            const double v = m.at(i, j);
            if (!(v > kPositiveEntryThreshold))
                throw std::domain_error("hadamard_inverse: entry (" + std::to_string(i) + ", " +
                                        std::to_string(j) + ") is zero");
            out.at(i, j) = 1.0 / v;
        }
    return out;
}

// The instance-independent cap on |H(S) - H(X)|.
inline double worst_case_gap(int num_states, int num_observations) {
    if (num_states < 1 || num_observations < 1)
        throw std::invalid_argument("worst_case_gap: sizes must be >= 1");
    return std::max(std::log(static_cast<double>(num_states)),
                    std::log(static_cast<double>(num_observations)));
}

struct SpectralBounds {
    std::optional<double> lower;  // undefined when O has zero entries
    double upper = 0.0;
};

// Spectral sandwich on the gap H(S) - H(X):
//   ln(1/sigma_max(O^(o-1)))  <=  gap  <=  2 ln(sigma_max(O)).
// The upper side follows the collision-entropy route: p_X = O^T p_S gives
// ||p_X||_2 <= sigma_max ||p_S||_2, and H_2(p) = -ln sum p^2 =
// 2 ln(1/||p||_2), so the sigma_max term enters squared. The lower side
// needs the Hadamard inverse and is reported undefined (vacuously true)
// when O contains zeros.
inline SpectralBounds spectral_bounds(const Matrix& observation) {
    SpectralBounds b;
    b.upper = 2.0 * std::log(max_singular_value(observation));
    if (has_strictly_positive_entries(observation))
        b.lower = -std::log(max_singular_value(hadamard_inverse(observation)));
    return b;
}

// Tightened form of the spectral upper bound: a certified lower bound on
// H(X) that uses the state occupancy itself,
//   H(X) >= H(S)/|p|_inf + ((|p|_inf - 1)/|p|_inf) ln((|S|-1)/(1 - |p|_inf)) - 2 ln(sigma_max(O)),
// obtained by chaining H(X) >= H_2(X) >= H_2(S) - 2 ln(sigma_max) with
// H_2 >= H_inf and the max-entropy expansion of H(S) around |p|_inf.
inline double tight_spectral_upper(const Matrix& observation, std::span<const double> p_states) {
    if (static_cast<int>(p_states.size()) != observation.rows)
        throw std::invalid_argument("tight_spectral_upper: dimension mismatch");
    double p_max = 0.0;
    for (double v : p_states) p_max = std::max(p_max, v);
    if (p_max >= 1.0 - 1e-12)
        throw std::domain_error("tight_spectral_upper: degenerate occupancy, |p_S|_inf ~ 1");
    const double n = static_cast<double>(observation.rows);
    const double h_states = shannon_entropy(p_states);
    return h_states / p_max + (p_max - 1.0) / p_max * std::log((n - 1.0) / (1.0 - p_max)) -
           2.0 * std::log(max_singular_value(observation));
}

// Information bound: H(S) >= H(X) - H(X|S). The right side only needs
// the occupancies and the observation rows.
inline double information_lower_bound(const Matrix& observation, std::span<const double> p_states,
                                      std::span<const double> p_obs) {
    if (static_cast<int>(p_states.size()) != observation.rows ||
        static_cast<int>(p_obs.size()) != observation.cols)
        throw std::invalid_argument("information_lower_bound: dimension mismatch");
    const auto image = matvec_transposed(observation, p_states);
    double residual = 0.0;
    for (int x = 0; x < observation.cols; ++x) residual = std::max(residual, std::abs(image[x] - p_obs[x]));
    if (residual > kConsistencyTolerance) {
        std::ostringstream os;
        os << "information_lower_bound: p_X is not O^T p_S, max residual " << std::setprecision(6)
           << residual;
        throw std::invalid_argument(os.str());
    }
    return shannon_entropy(p_obs) - conditional_entropy_obs_given_state(observation, p_states);
}

// Actionable bound: H(X) - sum_x p_X(x) H(colbar_x(O)) + ln(sigma_max(O)),
// where colbar_x is observation column x normalized over states. The
// column normalization is a definitional choice (a raw column is not a
// distribution); on strongly skewed occupancies the resulting value can
// exceed H(S), which the verification suite measures and reports.
inline double actionable_lower_bound(const Matrix& observation, std::span<const double> p_obs) {
    if (static_cast<int>(p_obs.size()) != observation.cols)
        throw std::invalid_argument("actionable_lower_bound: dimension mismatch");
    double penalty = 0.0;
    for (int x = 0; x < observation.cols; ++x) {
        if (p_obs[x] > kZeroProbability) penalty += p_obs[x] * column_state_entropy(observation, x);
    }
    return shannon_entropy(p_obs) - penalty + std::log(max_singular_value(observation));
}

// Every bound in one place, evaluated against the exact occupancies of a
// (model, policy) pair.
struct BoundsReport {
    double h_states = 0.0;
    double h_obs = 0.0;
    double gap = 0.0;
    double worst_case = 0.0;
    double sigma_max = 0.0;
    std::optional<double> sigma_max_hadamard_inverse;
    double spectral_upper = 0.0;
    std::optional<double> spectral_lower;
    std::optional<double> tight_spectral_bound;  // undefined for degenerate occupancies
    double info_lower = 0.0;
    double actionable_lower = 0.0;
};

inline BoundsReport bounds_report(const PomdpModel& model, const PolicyTable& policy,
                                  Conditioning conditioning = Conditioning::Observation) {
    require_valid(model);
    const auto p_states = exact_state_occupancy(model, policy, conditioning);
    const auto p_obs = matvec_transposed(model.observation, p_states);

    BoundsReport r;
    r.h_states = shannon_entropy(p_states);
    r.h_obs = shannon_entropy(p_obs);
    r.gap = r.h_states - r.h_obs;
    r.worst_case = worst_case_gap(model.num_states, model.num_observations);
    r.sigma_max = max_singular_value(model.observation);
    r.spectral_upper = 2.0 * std::log(r.sigma_max);
    if (has_strictly_positive_entries(model.observation)) {
        r.sigma_max_hadamard_inverse = max_singular_value(hadamard_inverse(model.observation));
        r.spectral_lower = -std::log(*r.sigma_max_hadamard_inverse);
    }
    double p_max = 0.0;
    for (double v : p_states) p_max = std::max(p_max, v);
    if (p_max < 1.0 - 1e-12) r.tight_spectral_bound = tight_spectral_upper(model.observation, p_states);
    r.info_lower = information_lower_bound(model.observation, p_states, p_obs);
    r.actionable_lower = actionable_lower_bound(model.observation, p_obs);
    return r;
}

inline void write_bounds_report(const BoundsReport& r, std::ostream& os) {
    os << std::setprecision(17);
    auto line = [&os](const char* key, const std::optional<double>& v) {
        os << key << ' ';
        if (v)
            os << *v << '\n';
        else
            os << "undefined\n";
    };
    os << "h_states " << r.h_states << '\n';
    os << "h_obs " << r.h_obs << '\n';
    os << "gap " << r.gap << '\n';
    os << "worst_case " << r.worst_case << '\n';
    os << "sigma_max " << r.sigma_max << '\n';
    line("sigma_max_hadamard_inverse", r.sigma_max_hadamard_inverse);
    os << "spectral_upper " << r.spectral_upper << '\n';
    line("spectral_lower", r.spectral_lower);
    line("tight_spectral_bound", r.tight_spectral_bound);
    os << "info_lower " << r.info_lower << '\n';
    os << "actionable_lower " << r.actionable_lower << '\n';
    os << "actionable_exceeds_h_states " << (r.actionable_lower > r.h_states + 1e-9 ? "true" : "false")
       << '\n';
}

}  // namespace moe
