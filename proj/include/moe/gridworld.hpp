#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "moe/pomdp.hpp"

namespace moe {

struct GridCell {
    int row = 0;
    int col = 0;
    bool operator==(const GridCell&) const = default;
};

struct RegionRule {
    bool deterministic = false;
    double sigma2 = 1.0;
};

// How observation rows are generated from the grid. PerRegion keys rules
// by the layout character of the emitting cell; untagged cells use the
// default sigma2.
struct ObservationSpec {
    enum class Kind { GaussianManhattan, Deterministic, PerRegion };
    Kind kind = Kind::GaussianManhattan;
    double sigma2 = 1.0;
    std::map<char, RegionRule> regions;
};

// Layout characters: '#' wall, 'S' start, 'G' glasses cell, anything else
// a free cell (letters tag observation regions).
struct GridSpec {
    std::vector<std::string> layout;
    double slip_probability = 0.1;
    int horizon = 55;
    GridCell start_cell;
    ObservationSpec observation;
    std::optional<GridCell> glasses_cell;
};

inline bool is_wall(char c) { return c == '#'; }

inline std::vector<GridCell> free_cells(const std::vector<std::string>& layout) {
    std::vector<GridCell> cells;
    for (int r = 0; r < static_cast<int>(layout.size()); ++r)
        for (int c = 0; c < static_cast<int>(layout[r].size()); ++c)
            if (!is_wall(layout[r][c])) cells.push_back({r, c});
    return cells;
}

inline void validate_grid_spec(const GridSpec& spec) {
    if (spec.layout.empty() || spec.layout.front().empty())
        throw std::invalid_argument("grid spec: empty layout");
    const std::size_t width = spec.layout.front().size();
    for (const auto& row : spec.layout)
        if (row.size() != width) throw std::invalid_argument("grid spec: layout is not rectangular");
    if (!(spec.slip_probability >= 0.0 && spec.slip_probability < 1.0))
        throw std::invalid_argument("grid spec: slip probability must be in [0, 1)");
    if (spec.horizon < 1) throw std::invalid_argument("grid spec: horizon must be >= 1");

    const auto cells = free_cells(spec.layout);
    if (cells.empty()) throw std::invalid_argument("grid spec: no free cells");

    auto cell_char = [&spec](GridCell c) { return spec.layout[c.row][c.col]; };
    if (cell_char(spec.start_cell) == '#' ||
        std::find(cells.begin(), cells.end(), spec.start_cell) == cells.end())
        throw std::invalid_argument("grid spec: start cell is not a free cell");
    if (spec.glasses_cell &&
        std::find(cells.begin(), cells.end(), *spec.glasses_cell) == cells.end())
        throw std::invalid_argument("grid spec: glasses cell is not a free cell");

    if (spec.observation.kind == ObservationSpec::Kind::GaussianManhattan &&
        !(spec.observation.sigma2 > 0.0))
        throw std::invalid_argument("grid spec: sigma2 must be > 0");
    if (spec.observation.kind == ObservationSpec::Kind::PerRegion) {
        if (!(spec.observation.sigma2 > 0.0))
            throw std::invalid_argument("grid spec: default sigma2 must be > 0");
        for (const auto& [tag, rule] : spec.observation.regions)
            if (!rule.deterministic && !(rule.sigma2 > 0.0))
                throw std::invalid_argument(std::string("grid spec: sigma2 for region '") + tag +
                                            "' must be > 0");
    }

    // Flood fill: the free-cell graph must be connected.
    std::map<std::pair<int, int>, bool> seen;
    std::deque<GridCell> queue{cells.front()};
    seen[{cells.front().row, cells.front().col}] = true;
    std::size_t reached = 0;
    while (!queue.empty()) {
        const GridCell c = queue.front();
        queue.pop_front();
        ++reached;
        const int dr[] = {-1, 1, 0, 0};
        const int dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const GridCell n{c.row + dr[k], c.col + dc[k]};
            if (n.row < 0 || n.row >= static_cast<int>(spec.layout.size()) || n.col < 0 ||
                n.col >= static_cast<int>(width))
                continue;
            if (is_wall(spec.layout[n.row][n.col])) continue;
            if (!seen[{n.row, n.col}]) {
                seen[{n.row, n.col}] = true;
                queue.push_back(n);
            }
        }
    }
    if (reached != cells.size()) throw std::invalid_argument("grid spec: free cells are not connected");
}

// Derives start/glasses cells from the 'S' and 'G' layout markers.
inline GridSpec make_grid_spec(std::vector<std::string> layout, double slip, int horizon,
                               ObservationSpec observation) {
    GridSpec spec;
    spec.layout = std::move(layout);
    spec.slip_probability = slip;
    spec.horizon = horizon;
    spec.observation = std::move(observation);
    int starts = 0, glasses = 0;
    for (int r = 0; r < static_cast<int>(spec.layout.size()); ++r)
        for (int c = 0; c < static_cast<int>(spec.layout[r].size()); ++c) {
            if (spec.layout[r][c] == 'S') {
                spec.start_cell = {r, c};
                ++starts;
            } else if (spec.layout[r][c] == 'G') {
                spec.glasses_cell = GridCell{r, c};
                ++glasses;
            }
        }
    if (starts != 1) throw std::invalid_argument("grid spec: layout must contain exactly one 'S'");
    if (glasses > 1) throw std::invalid_argument("grid spec: layout must contain at most one 'G'");
    validate_grid_spec(spec);
    return spec;
}

inline int manhattan_distance(GridCell a, GridCell b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

namespace detail {

inline std::vector<double> gaussian_row(const std::vector<GridCell>& cells, int s, double sigma2) {
    std::vector<double> row(cells.size(), 0.0);
    double z = 0.0;
    for (std::size_t x = 0; x < cells.size(); ++x) {
        const double d = static_cast<double>(manhattan_distance(cells[s], cells[x]));
        row[x] = std::exp(-d * d / (2.0 * sigma2));
        z += row[x];
    }
    for (double& v : row) v /= z;
    return row;
}

}  // namespace detail

// O(x|s) proportional to exp(-d(s,x)^2 / (2 sigma2)), with d the Manhattan
// distance between cell centers ignoring walls; one row per free cell.
inline Matrix gaussian_manhattan_observation(const std::vector<std::string>& layout, double sigma2) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("gaussian_manhattan_observation: sigma2 must be > 0");
    const auto cells = free_cells(layout);
    const int n = static_cast<int>(cells.size());
    Matrix obs(n, n);
    for (int s = 0; s < n; ++s) {
        const auto row = detail::gaussian_row(cells, s, sigma2);
        std::copy(row.begin(), row.end(), obs.row(s).begin());
    }
    return obs;
}

// Doubles the state space into a no-glasses copy and a glasses copy.
// Arrival at the glasses state flips the agent into the glasses copy for
// the rest of the episode, where emissions are one-hot at the underlying
// cell. The observation alphabet is unchanged, so the base model must
// have one observation per state.
inline PomdpModel apply_glasses(const PomdpModel& model, int glasses_state) {
    require_valid(model);
    if (glasses_state < 0 || glasses_state >= model.num_states)
        throw std::invalid_argument("apply_glasses: glasses state out of range");
    if (model.num_observations != model.num_states)
        throw std::invalid_argument("apply_glasses: model must have one observation symbol per state");

    const int n = model.num_states;
    PomdpModel out;
    out.num_states = 2 * n;
    out.num_observations = model.num_observations;
    out.num_actions = model.num_actions;
    out.horizon = model.horizon;

    out.transition.assign(model.num_actions, Matrix(2 * n, 2 * n));
    for (int a = 0; a < model.num_actions; ++a) {
        const Matrix& base = model.transition[a];
        Matrix& t = out.transition[a];
        for (int s = 0; s < n; ++s) {
            for (int s2 = 0; s2 < n; ++s2) {
                const double p = base.at(s, s2);
                if (p == 0.0) continue;
                t.at(s, s2 == glasses_state ? n + s2 : s2) += p;  // entry flips the flag
                t.at(n + s, n + s2) += p;                         // glasses copy is absorbing
            }
        }
    }

    out.observation = Matrix(2 * n, model.num_observations);
    for (int s = 0; s < n; ++s) {
        for (int x = 0; x < model.num_observations; ++x) out.observation.at(s, x) = model.observation.at(s, x);
        out.observation.at(n + s, s) = 1.0;
    }

    out.initial.assign(2 * n, 0.0);
    for (int s = 0; s < n; ++s) {
        if (s == glasses_state)
            out.initial[n + s] = model.initial[s];  // starting on the cell counts as arrival
        else
            out.initial[s] = model.initial[s];
    }

    if (!model.state_labels.empty()) {
        out.state_labels = model.state_labels;
        for (int s = 0; s < n; ++s) out.state_labels.push_back(model.state_labels[s] + "+glasses");
    }
    out.observation_labels = model.observation_labels;
    return out;
}

// Builds the tabular POMDP for a grid: states are free cells (doubled if
// a glasses cell is set), four move actions, slip dynamics, and the
// requested observation rows.
inline PomdpModel build_model(const GridSpec& spec) {
    validate_grid_spec(spec);
    const auto cells = free_cells(spec.layout);
    const int n = static_cast<int>(cells.size());
    auto index_of = [&cells](GridCell c) {
        return static_cast<int>(std::find(cells.begin(), cells.end(), c) - cells.begin());
    };
    auto free_at = [&spec](int r, int c) {
        return r >= 0 && r < static_cast<int>(spec.layout.size()) && c >= 0 &&
               c < static_cast<int>(spec.layout[r].size()) && !is_wall(spec.layout[r][c]);
    };

    PomdpModel model;
    model.num_states = n;
    model.num_observations = n;
    model.num_actions = 4;  // up, down, left, right
    model.horizon = spec.horizon;

    const int dr[] = {-1, 1, 0, 0};
    const int dc[] = {0, 0, -1, 1};

    model.transition.assign(4, Matrix(n, n));
    const double slip = spec.slip_probability;
    for (int s = 0; s < n; ++s) {
        const GridCell cell = cells[s];
        std::vector<int> adjacent;
        for (int k = 0; k < 4; ++k)
            if (free_at(cell.row + dr[k], cell.col + dc[k]))
                adjacent.push_back(index_of({cell.row + dr[k], cell.col + dc[k]}));
        for (int a = 0; a < 4; ++a) {
            // Bumping into a wall keeps the agent in place before slip.
            const int intended =
                free_at(cell.row + dr[a], cell.col + dc[a]) ? index_of({cell.row + dr[a], cell.col + dc[a]}) : s;
            Matrix& t = model.transition[a];
            t.at(s, intended) += 1.0 - slip;
            if (slip > 0.0) {
                std::vector<int> candidates;
                for (int c : adjacent)
                    if (c != intended) candidates.push_back(c);
                if (candidates.empty()) {
                    t.at(s, s) += slip;  // no distinct adjacent alternative: stay put
                } else {
                    const double share = slip / candidates.size();
                    for (int c : candidates) t.at(s, c) += share;
                }
            }
        }
    }

    switch (spec.observation.kind) {
        case ObservationSpec::Kind::Deterministic:
            model.observation = Matrix::identity(n);
            break;
        case ObservationSpec::Kind::GaussianManhattan:
            model.observation = gaussian_manhattan_observation(spec.layout, spec.observation.sigma2);
            break;
        case ObservationSpec::Kind::PerRegion: {
            model.observation = Matrix(n, n);
            for (int s = 0; s < n; ++s) {
                const char tag = spec.layout[cells[s].row][cells[s].col];
                RegionRule rule{false, spec.observation.sigma2};
                if (auto it = spec.observation.regions.find(tag); it != spec.observation.regions.end())
                    rule = it->second;
                if (rule.deterministic) {
                    model.observation.at(s, s) = 1.0;
                } else {
                    const auto row = detail::gaussian_row(cells, s, rule.sigma2);
                    std::copy(row.begin(), row.end(), model.observation.row(s).begin());
                }
            }
            break;
        }
    }

    model.initial.assign(n, 0.0);
    model.initial[index_of(spec.start_cell)] = 1.0;

    model.state_labels.reserve(n);
    for (const GridCell& c : cells)
        model.state_labels.push_back("r" + std::to_string(c.row) + "c" + std::to_string(c.col));
    model.observation_labels = model.state_labels;

    if (spec.glasses_cell) return apply_glasses(model, index_of(*spec.glasses_cell));
    return model;
}

// ---------------------------------------------------------------------------
// Canonical environments. The 44-cell four-room layout is frozen here;
// sigma2 values were calibrated once against the mean observation-row
// entropy targets (1.0 / 2.2 / 1.85) with the calibrate-sigma tool and
// are kept fixed.

inline constexpr double kWellBehavedSigma2 = 0.30;   // E[H(O)] ~ 1.0 over 44 states
inline constexpr double kChallengingSigma2 = 1.65;   // E[H(O)] ~ 2.2 over 44 states
inline constexpr double kStructuredSigma2 = 40.0;    // E[H(O)] ~ 1.85 over 88 states
inline constexpr double kRedRoomSigma2 = 1.0;
inline constexpr double kAblationSigma2Presets[] = {10.0, 1.0, 0.25};

inline std::vector<std::string> four_rooms_layout(bool with_glasses) {
    std::vector<std::string> layout = {
        "S....#.....",
        "...........",
        "##.#####.##",
        "...........",
        ".....#.....",
    };
    if (with_glasses) layout[4][0] = 'G';
    return layout;
}

// Same room topology with the bottom-left room emitting deterministically.
inline std::vector<std::string> red_room_layout() {
    return {
        "S....#.....",
        "...........",
        "##.#####.##",
        "RRRRR......",
        "RRRRR#.....",
    };
}

struct CanonicalEnv {
    GridSpec spec;
    PomdpModel model;
};

inline CanonicalEnv canonical_environment(std::string_view name) {
    GridSpec spec;
    if (name == "well_behaved") {
        ObservationSpec obs;
        obs.kind = ObservationSpec::Kind::GaussianManhattan;
        obs.sigma2 = kWellBehavedSigma2;
        spec = make_grid_spec(four_rooms_layout(false), 0.1, 55, obs);
    } else if (name == "challenging") {
        ObservationSpec obs;
        obs.kind = ObservationSpec::Kind::GaussianManhattan;
        obs.sigma2 = kChallengingSigma2;
        spec = make_grid_spec(four_rooms_layout(false), 0.1, 55, obs);
    } else if (name == "structured") {
        ObservationSpec obs;
        obs.kind = ObservationSpec::Kind::GaussianManhattan;
        obs.sigma2 = kStructuredSigma2;
        spec = make_grid_spec(four_rooms_layout(true), 0.1, 55, obs);
    } else if (name == "redroom") {
        ObservationSpec obs;
        obs.kind = ObservationSpec::Kind::PerRegion;
        obs.sigma2 = kRedRoomSigma2;
        obs.regions['R'] = RegionRule{true, 0.0};
        spec = make_grid_spec(red_room_layout(), 0.1, 40, obs);
    } else {
        throw std::invalid_argument("unknown canonical environment '" + std::string(name) +
                                    "' (expected well_behaved, challenging, structured or redroom)");
    }
    return {spec, build_model(spec)};
}

inline bool is_canonical_environment(std::string_view name) {
    return name == "well_behaved" || name == "challenging" || name == "structured" || name == "redroom";
}

// ---------------------------------------------------------------------------
// Grid spec text format: scalar fields, observation rule lines, then the
// layout block.

inline void save_grid_spec(const GridSpec& spec, std::ostream& os) {
    os << std::setprecision(17);
    os << "gridspec v1\n";
    os << "slip " << spec.slip_probability << "\n";
    os << "horizon " << spec.horizon << "\n";
    switch (spec.observation.kind) {
        case ObservationSpec::Kind::Deterministic:
            os << "observation deterministic\n";
            break;
        case ObservationSpec::Kind::GaussianManhattan:
            os << "observation gaussian_manhattan " << spec.observation.sigma2 << "\n";
            break;
        case ObservationSpec::Kind::PerRegion:
            os << "observation per_region " << spec.observation.sigma2 << "\n";
            for (const auto& [tag, rule] : spec.observation.regions) {
                if (rule.deterministic)
                    os << "region " << tag << " deterministic\n";
                else
                    os << "region " << tag << " gaussian " << rule.sigma2 << "\n";
            }
            break;
    }
    os << "layout " << spec.layout.size() << " " << spec.layout.front().size() << "\n";
    for (const auto& row : spec.layout) os << row << "\n";
    os << "end\n";
}

inline void save_grid_spec(const GridSpec& spec, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    save_grid_spec(spec, os);
}

inline GridSpec load_grid_spec(std::istream& is) {
    std::string tok;
    if (!(is >> tok) || tok != "gridspec") throw std::runtime_error("grid spec parse error: bad header");
    if (!(is >> tok) || tok != "v1") throw std::runtime_error("grid spec parse error: unknown version");

    double slip = 0.1;
    int horizon = 55;
    ObservationSpec obs;
    std::vector<std::string> layout;

    while (is >> tok) {
        if (tok == "slip") {
            if (!(is >> slip)) throw std::runtime_error("grid spec parse error: bad slip");
        } else if (tok == "horizon") {
            if (!(is >> horizon)) throw std::runtime_error("grid spec parse error: bad horizon");
        } else if (tok == "observation") {
            std::string kind;
            is >> kind;
            if (kind == "deterministic") {
                obs.kind = ObservationSpec::Kind::Deterministic;
            } else if (kind == "gaussian_manhattan") {
                obs.kind = ObservationSpec::Kind::GaussianManhattan;
                if (!(is >> obs.sigma2)) throw std::runtime_error("grid spec parse error: bad sigma2");
            } else if (kind == "per_region") {
                obs.kind = ObservationSpec::Kind::PerRegion;
                if (!(is >> obs.sigma2)) throw std::runtime_error("grid spec parse error: bad default sigma2");
            } else {
                throw std::runtime_error("grid spec parse error: unknown observation kind '" + kind + "'");
            }
        } else if (tok == "region") {
            char tag;
            std::string kind;
            if (!(is >> tag >> kind)) throw std::runtime_error("grid spec parse error: bad region line");
            RegionRule rule;
            if (kind == "deterministic") {
                rule.deterministic = true;
            } else if (kind == "gaussian") {
                if (!(is >> rule.sigma2)) throw std::runtime_error("grid spec parse error: bad region sigma2");
            } else {
                throw std::runtime_error("grid spec parse error: unknown region kind '" + kind + "'");
            }
            obs.regions[tag] = rule;
        } else if (tok == "layout") {
            int rows = 0, cols = 0;
            if (!(is >> rows >> cols)) throw std::runtime_error("grid spec parse error: bad layout size");
            std::string line;
            std::getline(is, line);  // consume end of the size line
            for (int r = 0; r < rows; ++r) {
                if (!std::getline(is, line)) throw std::runtime_error("grid spec parse error: missing layout row");
                if (static_cast<int>(line.size()) != cols)
                    throw std::runtime_error("grid spec parse error: layout row width mismatch");
                layout.push_back(line);
            }
        } else if (tok == "end") {
            return make_grid_spec(std::move(layout), slip, horizon, std::move(obs));
        } else {
            throw std::runtime_error("grid spec parse error: unknown field '" + tok + "'");
        }
    }
    throw std::runtime_error("grid spec parse error: missing 'end'");
}

inline GridSpec load_grid_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return load_grid_spec(is);
}

}  // namespace moe
