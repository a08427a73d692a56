#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "moe/entropy.hpp"
#include "moe/gridworld.hpp"
#include "moe/pomdp.hpp"

using Catch::Approx;

TEST_CASE("build_model: 1x2 corridor without slip is a deterministic shuttle") {
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::Deterministic;
    const auto spec = moe::make_grid_spec({"S."}, 0.0, 4, obs);
    const auto model = moe::build_model(spec);

    REQUIRE(model.num_states == 2);
    REQUIRE(model.num_actions == 4);
    REQUIRE(moe::validate_model(model).empty());

    // Actions: 0 up, 1 down, 2 left, 3 right. Every transition row is
    // one-hot with p = 0 slip.
    for (int a = 0; a < 4; ++a)
        for (int s = 0; s < 2; ++s) {
            int ones = 0;
            for (int s2 = 0; s2 < 2; ++s2)
                if (model.transition[a].at(s, s2) == 1.0) ++ones;
            REQUIRE(ones == 1);
        }
    REQUIRE(model.transition[3].at(0, 1) == 1.0);  // right from the left cell
    REQUIRE(model.transition[2].at(1, 0) == 1.0);  // left from the right cell
    REQUIRE(model.transition[0].at(0, 0) == 1.0);  // bump up stays put
    REQUIRE(model.transition[1].at(1, 1) == 1.0);  // bump down stays put
}

TEST_CASE("canonical 44-cell layout has the stated sizes") {
    const auto env = moe::canonical_environment("well_behaved");
    REQUIRE(env.model.num_states == 44);
    REQUIRE(env.model.num_observations == 44);
    REQUIRE(env.model.num_actions == 4);
    REQUIRE(env.model.horizon == 55);
    REQUIRE(env.spec.start_cell == moe::GridCell{0, 0});
}

TEST_CASE("slip dynamics conserve probability and favor the intended target") {
    const auto env = moe::canonical_environment("challenging");
    const double slip = env.spec.slip_probability;
    const auto cells = moe::free_cells(env.spec.layout);
    for (int a = 0; a < 4; ++a) {
        for (int s = 0; s < env.model.num_states; ++s) {
            double sum = 0.0;
            double mx = 0.0;
            for (int s2 = 0; s2 < env.model.num_states; ++s2) {
                const double p = env.model.transition[a].at(s, s2);
                REQUIRE(p >= 0.0);
                sum += p;
                mx = std::max(mx, p);
            }
            REQUIRE(sum == Approx(1.0).margin(1e-12));
            REQUIRE(mx >= 1.0 - slip - 1e-12);  // the intended cell keeps at least 1 - slip
        }
    }
    REQUIRE(cells.size() == 44);
}

TEST_CASE("slip splits evenly over the distinct adjacent alternatives") {
    // Open 3x3 grid; the center cell has four free neighbors.
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::Deterministic;
    const auto spec = moe::make_grid_spec({"S..", "...", "..."}, 0.3, 5, obs);
    const auto model = moe::build_model(spec);
    const int center = 4;  // row-major free-cell index of (1,1)
    // Action up from the center: intended (0,1) = index 1; slip spreads
    // over the other three neighbors 3, 5, 7.
    REQUIRE(model.transition[0].at(center, 1) == Approx(0.7).margin(1e-12));
    for (int other : {3, 5, 7}) REQUIRE(model.transition[0].at(center, other) == Approx(0.1).margin(1e-12));

    // Bumping the top-left corner upward: intended = stay, slip spreads
    // over the two free neighbors.
    REQUIRE(model.transition[0].at(0, 0) == Approx(0.7).margin(1e-12));
    REQUIRE(model.transition[0].at(0, 1) == Approx(0.15).margin(1e-12));
    REQUIRE(model.transition[0].at(0, 3) == Approx(0.15).margin(1e-12));
}

TEST_CASE("slip with no distinct alternative stays in place") {
    // Single free cell: every action bumps and there is nowhere to slip.
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::Deterministic;
    const auto spec = moe::make_grid_spec({"S"}, 0.25, 3, obs);
    const auto model = moe::build_model(spec);
    for (int a = 0; a < 4; ++a) REQUIRE(model.transition[a].at(0, 0) == Approx(1.0).margin(1e-15));
}

TEST_CASE("gaussian_manhattan_observation") {
    SECTION("vanishing variance approaches the identity") {
        const auto layout = moe::four_rooms_layout(false);
        const auto obs = moe::gaussian_manhattan_observation(layout, 1e-6);
        for (int s = 0; s < obs.rows; ++s)
            for (int x = 0; x < obs.cols; ++x) {
                const double expected = s == x ? 1.0 : 0.0;
                REQUIRE(std::abs(obs.at(s, x) - expected) <= 1e-9);
            }
        REQUIRE(moe::mean_observation_function_entropy(obs) < 1e-6);
    }

    SECTION("single cell layout gives the trivial channel") {
        const auto obs = moe::gaussian_manhattan_observation({"S"}, 2.0);
        REQUIRE(obs.rows == 1);
        REQUIRE(obs.at(0, 0) == 1.0);
    }

    SECTION("mean row entropy is monotone in sigma2") {
        const auto layout = moe::four_rooms_layout(false);
        double previous = -1.0;
        for (double sigma2 : {0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 40.0}) {
            const double h =
                moe::mean_observation_function_entropy(moe::gaussian_manhattan_observation(layout, sigma2));
            REQUIRE(h >= previous - 1e-12);
            previous = h;
        }
    }

    SECTION("rows respect the reflection symmetry of an open square grid") {
        const std::vector<std::string> square = {"S..", "...", "..."};
        const auto obs = moe::gaussian_manhattan_observation(square, 1.3);
        const auto cells = moe::free_cells(square);
        auto mirror_index = [&cells](int i) {
            const moe::GridCell mirrored{cells[i].row, 2 - cells[i].col};
            for (std::size_t j = 0; j < cells.size(); ++j)
                if (cells[j] == mirrored) return static_cast<int>(j);
            return -1;
        };
        for (int s = 0; s < obs.rows; ++s)
            for (int x = 0; x < obs.cols; ++x)
                REQUIRE(obs.at(s, x) == Approx(obs.at(mirror_index(s), mirror_index(x))).margin(1e-15));
    }
}

TEST_CASE("apply_glasses doubles states and keeps the observation alphabet") {
    const auto env = moe::canonical_environment("structured");
    REQUIRE(env.model.num_states == 88);
    REQUIRE(env.model.num_observations == 44);
    REQUIRE(moe::validate_model(env.model).empty());
}

TEST_CASE("apply_glasses redirection and block structure") {
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::GaussianManhattan;
    obs.sigma2 = 1.0;
    auto spec = moe::make_grid_spec({"S..."}, 0.1, 6, obs);
    const auto base = moe::build_model(spec);
    const int glasses_state = 3;
    const auto doubled = moe::apply_glasses(base, glasses_state);
    const int n = base.num_states;

    for (int a = 0; a < base.num_actions; ++a) {
        for (int s = 0; s < n; ++s) {
            for (int s2 = 0; s2 < n; ++s2) {
                const double original = base.transition[a].at(s, s2);
                if (s2 == glasses_state) {
                    REQUIRE(doubled.transition[a].at(s, s2) == 0.0);
                    REQUIRE(doubled.transition[a].at(s, n + s2) == original);
                } else {
                    REQUIRE(doubled.transition[a].at(s, s2) == original);
                }
                // The glasses copy preserves the base dynamics exactly.
                REQUIRE(doubled.transition[a].at(n + s, n + s2) == original);
            }
        }
    }
    // Glasses-copy emissions are one-hot at the underlying cell.
    for (int s = 0; s < n; ++s)
        for (int x = 0; x < n; ++x)
            REQUIRE(doubled.observation.at(n + s, x) == (x == s ? 1.0 : 0.0));
}

TEST_CASE("a policy that cannot reach the glasses cell keeps all mass in the plain copy") {
    // 1x3 corridor, glasses on the right end, no slip, policy always left.
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::Deterministic;
    const auto spec = moe::make_grid_spec({"S.G"}, 0.0, 10, obs);
    const auto model = moe::build_model(spec);
    REQUIRE(model.num_states == 6);

    moe::PolicyTable always_left;
    always_left.num_symbols = 3;
    always_left.num_actions = 4;
    always_left.probs.assign(12, 0.0);
    for (int x = 0; x < 3; ++x) always_left.probs[4 * x + 2] = 1.0;

    const auto occupancy = moe::exact_state_occupancy(model, always_left);
    for (int s = 3; s < 6; ++s) REQUIRE(occupancy[s] == 0.0);
}

TEST_CASE("after entering the glasses copy, emissions equal the underlying cell") {
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::GaussianManhattan;
    obs.sigma2 = 5.0;  // noisy without glasses
    const auto spec = moe::make_grid_spec({"SG"}, 0.0, 12, obs);
    const auto model = moe::build_model(spec);
    const int n = 2;

    moe::PolicyTable always_right;
    always_right.num_symbols = 2;
    always_right.num_actions = 4;
    always_right.probs.assign(8, 0.0);
    for (int x = 0; x < 2; ++x) always_right.probs[4 * x + 3] = 1.0;

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const auto traj = moe::sample_trajectory(model, always_right, moe::Conditioning::Observation, rng);
        bool entered = false;
        for (int t = 0; t < traj.length(); ++t) {
            if (traj.states[t] >= n) {
                entered = true;
                REQUIRE(traj.observations[t] == traj.states[t] - n);
            }
        }
        REQUIRE(entered);  // moving right reaches the glasses cell at step 2
    }
}

TEST_CASE("canonical environments hit their observation-entropy windows") {
    const double wb =
        moe::mean_observation_function_entropy(moe::canonical_environment("well_behaved").model.observation);
    REQUIRE(wb >= 0.85);
    REQUIRE(wb <= 1.15);

    const double ch =
        moe::mean_observation_function_entropy(moe::canonical_environment("challenging").model.observation);
    REQUIRE(ch >= 2.05);
    REQUIRE(ch <= 2.35);

    const double st =
        moe::mean_observation_function_entropy(moe::canonical_environment("structured").model.observation);
    REQUIRE(st >= 1.70);
    REQUIRE(st <= 2.00);
}

TEST_CASE("red-room environment emits deterministically inside the tagged room") {
    const auto env = moe::canonical_environment("redroom");
    REQUIRE(env.model.horizon == 40);
    const auto cells = moe::free_cells(env.spec.layout);
    for (std::size_t s = 0; s < cells.size(); ++s) {
        const bool red = env.spec.layout[cells[s].row][cells[s].col] == 'R';
        const double diag = env.model.observation.at(static_cast<int>(s), static_cast<int>(s));
        if (red) {
            REQUIRE(diag == 1.0);
        } else {
            REQUIRE(diag < 1.0);
            REQUIRE(moe::shannon_entropy(env.model.observation.row(static_cast<int>(s))) > 0.1);
        }
    }
}

TEST_CASE("unknown canonical environment names are rejected") {
    REQUIRE_THROWS_AS(moe::canonical_environment("fourrooms"), std::invalid_argument);
}

TEST_CASE("grid spec serialization round-trips") {
    for (const char* name : {"well_behaved", "structured", "redroom"}) {
        const auto spec = moe::canonical_environment(name).spec;
        std::stringstream buffer;
        moe::save_grid_spec(spec, buffer);
        const auto loaded = moe::load_grid_spec(buffer);
        REQUIRE(loaded.layout == spec.layout);
        REQUIRE(loaded.slip_probability == spec.slip_probability);
        REQUIRE(loaded.horizon == spec.horizon);
        REQUIRE(loaded.start_cell == spec.start_cell);
        REQUIRE(loaded.glasses_cell == spec.glasses_cell);
        REQUIRE(loaded.observation.kind == spec.observation.kind);
        REQUIRE(loaded.observation.sigma2 == spec.observation.sigma2);
        REQUIRE(loaded.observation.regions.size() == spec.observation.regions.size());
    }
}

TEST_CASE("grid spec validation rejects broken inputs") {
    moe::ObservationSpec obs;
    obs.kind = moe::ObservationSpec::Kind::Deterministic;
    // Disconnected free cells.
    REQUIRE_THROWS_AS(moe::make_grid_spec({"S#."}, 0.1, 5, obs), std::invalid_argument);
    // No start marker.
    REQUIRE_THROWS_AS(moe::make_grid_spec({"..."}, 0.1, 5, obs), std::invalid_argument);
    // Ragged rows.
    REQUIRE_THROWS_AS(moe::make_grid_spec({"S..", ".."}, 0.1, 5, obs), std::invalid_argument);
    // Slip probability at 1 is not allowed.
    REQUIRE_THROWS_AS(moe::make_grid_spec({"S."}, 1.0, 5, obs), std::invalid_argument);
}
