#include "cmdp/envs.hpp"

#include "cmdp/cmdp_io.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace cmdp::envs {

namespace {

constexpr std::array<Cell, kNumActions> kDelta{{{-1, 0}, {1, 0}, {0, 1}, {0, -1}}};

bool contains(const std::vector<Cell>& cells, Cell c) {
    return std::find(cells.begin(), cells.end(), c) != cells.end();
}

bool in_bounds(const GridSpec& spec, Cell c) {
    return c.row >= 0 && c.row < spec.height && c.col >= 0 && c.col < spec.width;
}

bool blocked(const GridSpec& spec, Cell c) { return !in_bounds(spec, c) || contains(spec.walls, c); }

Cell shifted(Cell c, int direction) {
    return {c.row + kDelta[direction].row, c.col + kDelta[direction].col};
}

std::array<int, 2> perpendicular(int action) {
    if (action == kUp || action == kDown) return {kRight, kLeft};
    return {kUp, kDown};
}

bool is_corner(const GridSpec& spec, Cell c) {
    int walls = 0;
    for (int d = 0; d < kNumActions; ++d) walls += blocked(spec, shifted(c, d)) ? 1 : 0;
    return walls >= 2;
}

// Direction outcomes of an action: (direction, probability).
std::vector<std::pair<int, double>> direction_outcomes(const GridSpec& spec, int action) {
    std::vector<std::pair<int, double>> out{{action, 1.0 - spec.slip}};
    if (spec.slip > 0.0)
        for (int d : perpendicular(action)) out.push_back({d, spec.slip / 2.0});
    return out;
}

}  // namespace

const char* action_name(int action) {
    static constexpr const char* names[] = {"up", "down", "right", "left"};
    return action >= 0 && action < kNumActions ? names[action] : "?";
}

std::vector<std::string> check(const GridSpec& spec) {
    std::vector<std::string> out;
    if (spec.width <= 0 || spec.height <= 0) {
        out.push_back("width and height must be positive");
        return out;
    }
    auto cell_ok = [&](Cell c, const char* what) {
        if (!in_bounds(spec, c)) out.push_back(std::string(what) + " outside the grid");
        else if (contains(spec.walls, c)) out.push_back(std::string(what) + " is a wall");
    };
    cell_ok(spec.start, "start");
    cell_ok(spec.goal, "goal");
    if (spec.start == spec.goal) out.push_back("start and goal coincide");
    if (!(spec.slip >= 0.0 && spec.slip < 1.0)) out.push_back("slip must lie in [0, 1)");
    if (!(spec.threshold >= 0.0 && spec.threshold <= 1.0)) out.push_back("threshold must lie in [0, 1]");
    if (spec.variant == Variant::Box) {
        cell_ok(spec.box_start, "box_start");
        if (spec.box_start == spec.start) out.push_back("box_start coincides with start");
        if (spec.box_start == spec.goal) out.push_back("box_start coincides with goal");
    } else {
        for (Cell c : spec.risky)
            if (!in_bounds(spec, c)) out.push_back("risky cell outside the grid");
    }
    return out;
}

StepCosts step_costs(const GridSpec& spec, const EnvState& state) {
    if (state.agent == spec.goal) return {0.0, 0.0};
    const double aux = spec.variant == Variant::Box ? (is_corner(spec, state.box) ? 1.0 : 0.0)
                                                    : (contains(spec.risky, state.agent) ? 1.0 : 0.0);
    return {1.0, aux};
}

EnvState move(const GridSpec& spec, const EnvState& state, int direction) {
    if (state.agent == spec.goal) return {spec.start, spec.variant == Variant::Box ? spec.box_start : Cell{-1, -1}};
    const Cell target = shifted(state.agent, direction);
    if (blocked(spec, target)) return state;
    if (spec.variant == Variant::Box && target == state.box) {
        // The goal tile also stops the box, so the goal stays reachable.
        const Cell pushed = shifted(state.box, direction);
        if (blocked(spec, pushed) || pushed == spec.goal) return state;
        return {target, pushed};
    }
    return {target, state.box};
}

StepResult env_step(const GridSpec& spec, const EnvState& state, int action, Rng& rng) {
    const StepCosts costs = step_costs(spec, state);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    int direction = action;
    if (u >= 1.0 - spec.slip) {
        const auto side = perpendicular(action);
        direction = u < 1.0 - spec.slip / 2.0 ? side[0] : side[1];
    }
    return {move(spec, state, direction), costs};
}

GridWorld::GridWorld(GridSpec spec) : spec_(std::move(spec)) {
    const auto problems = check(spec_);
    if (!problems.empty()) {
        std::string msg = "grid spec '" + spec_.name + "' is malformed";
        for (const auto& p : problems) msg += "\n  " + p;
        throw FormatError(msg);
    }
    const int cells = spec_.width * spec_.height;
    lookup_.assign(spec_.variant == Variant::Box ? size_t(cells) * cells : size_t(cells), -1);

    const EnvState init{spec_.start, spec_.variant == Variant::Box ? spec_.box_start : Cell{-1, -1}};
    std::deque<EnvState> queue{init};
    lookup_[key(init)] = 0;
    states_.push_back(init);
    while (!queue.empty()) {
        const EnvState s = queue.front();
        queue.pop_front();
        for (int a = 0; a < kNumActions; ++a)
            for (auto [d, p] : direction_outcomes(spec_, a)) {
                const EnvState next = move(spec_, s, d);
                if (lookup_[key(next)] >= 0) continue;
                lookup_[key(next)] = int(states_.size());
                states_.push_back(next);
                queue.push_back(next);
            }
    }

    const int S = n_states();
    model_.transitions = Kernel(S, kNumActions);
    model_.costs = CostTable(2, S, kNumActions);
    model_.thresholds = {spec_.threshold};
    model_.initial_state = 0;
    for (int s = 0; s < S; ++s) {
        if (states_[s].agent == spec_.goal && goal_index_ < 0) goal_index_ = s;
        const StepCosts c = step_costs(spec_, states_[s]);
        for (int a = 0; a < kNumActions; ++a) {
            model_.costs(0, s, a) = c[0];
            model_.costs(1, s, a) = c[1];
            if (states_[s].agent == spec_.goal) {
                model_.transitions(s, a, index_of(move(spec_, states_[s], a))) = 1.0;
                continue;
            }
            for (auto [d, p] : direction_outcomes(spec_, a))
                model_.transitions(s, a, index_of(move(spec_, states_[s], d))) += p;
        }
    }
}

int GridWorld::key(const EnvState& s) const {
    const int agent = s.agent.row * spec_.width + s.agent.col;
    if (spec_.variant != Variant::Box) return agent;
    return agent * spec_.width * spec_.height + s.box.row * spec_.width + s.box.col;
}

int GridWorld::index_of(const EnvState& state) const {
    if (!in_bounds(spec_, state.agent)) return -1;
    if (spec_.variant == Variant::Box && !in_bounds(spec_, state.box)) return -1;
    return lookup_[key(state)];
}

Cmdp compile(const GridSpec& spec) { return GridWorld(spec).model(); }

OracleSolution oracle_solution(const Cmdp& model) {
    const auto plan = solve_cmdp_lp(model);
    if (plan.status == PlanStatus::Infeasible)
        throw InfeasibleModelError("oracle_solution: constraints cannot be met (phase-1 optimum " +
                                   std::to_string(plan.phase1_objective) + ")");
    if (plan.status != PlanStatus::Optimal)
        throw std::runtime_error("oracle_solution: LP solver failed: " + plan.message);
    return {plan.objective, policy_from_occupancy(*plan.occupancy), *plan.occupancy};
}

OracleSolution oracle_solution(const GridSpec& spec) { return oracle_solution(compile(spec)); }

GridSpec parse_layout(std::string name, Variant variant, const std::vector<std::string>& rows,
                      double slip, double threshold) {
    GridSpec spec;
    spec.name = std::move(name);
    spec.variant = variant;
    spec.height = int(rows.size());
    spec.width = 0;
    for (const auto& r : rows) spec.width = std::max(spec.width, int(r.size()));
    spec.slip = slip;
    spec.threshold = threshold;
    bool has_start = false, has_goal = false, has_box = false;
    for (int r = 0; r < spec.height; ++r)
        for (int c = 0; c < spec.width; ++c) {
            const char ch = c < int(rows[r].size()) ? rows[r][c] : '#';
            const Cell cell{r, c};
            switch (ch) {
            case '#': spec.walls.push_back(cell); break;
            case 'S': spec.start = cell; has_start = true; break;
            case 'G': spec.goal = cell; has_goal = true; break;
            case 'R': spec.risky.push_back(cell); break;
            case 'B': spec.box_start = cell; has_box = true; break;
            case '.':
            case ' ': break;
            default: throw FormatError(std::string("layout: unknown tile '") + ch + "'");
            }
        }
    if (!has_start || !has_goal) throw FormatError("layout: needs one 'S' and one 'G'");
    if (variant == Variant::Box && !has_box) throw FormatError("layout: box variant needs a 'B'");
    return spec;
}

GridSpec default_spec(std::string_view name) {
    // A short route through risky tiles and a longer risk-free detour.
    if (name == "marsrover4x4")
        return parse_layout("marsrover4x4", Variant::Marsrover,
                            {".G..",
                             ".RR.",
                             ".RR.",
                             ".S.."},
                            0.1, 0.2);
    if (name == "marsrover8x8")
        return parse_layout("marsrover8x8", Variant::Marsrover,
                            {"...G....",
                             "........",
                             "..RRRR..",
                             ".#RRRR#.",
                             ".#RRRR#.",
                             "..RRRR..",
                             "........",
                             "...S...."},
                            0.1, 0.1);
    // Pushing the box down jams it in a corner; walking around to push it
    // right keeps it movable.
    if (name == "box6x6")
        return parse_layout("box6x6", Variant::Box,
                            {"######",
                             "# S###",
                             "# B  #",
                             "##   #",
                             "### G#",
                             "######"},
                            0.1, 0.6);
    throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

std::vector<std::string> default_spec_names() { return {"marsrover4x4", "marsrover8x8", "box6x6"}; }

namespace {

nlohmann::json cell_json(Cell c) { return nlohmann::json::array({c.row, c.col}); }

Cell json_cell(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw FormatError("grid spec: a cell is a [row, col] pair");
    return {j[0].get<int>(), j[1].get<int>()};
}

std::vector<Cell> json_cells(const nlohmann::json& j) {
    std::vector<Cell> out;
    for (const auto& c : j) out.push_back(json_cell(c));
    return out;
}

}  // namespace

nlohmann::json to_json(const GridSpec& spec) {
    nlohmann::json walls = nlohmann::json::array(), risky = nlohmann::json::array();
    for (Cell c : spec.walls) walls.push_back(cell_json(c));
    for (Cell c : spec.risky) risky.push_back(cell_json(c));
    nlohmann::json doc{{"name", spec.name},
                       {"variant", spec.variant == Variant::Box ? "box" : "marsrover"},
                       {"width", spec.width},
                       {"height", spec.height},
                       {"walls", walls},
                       {"start", cell_json(spec.start)},
                       {"goal", cell_json(spec.goal)},
                       {"slip", spec.slip},
                       {"threshold", spec.threshold}};
    if (spec.variant == Variant::Box) doc["box_start"] = cell_json(spec.box_start);
    else doc["risky"] = risky;
    return doc;
}

GridSpec grid_spec_from_json(const nlohmann::json& doc) {
    GridSpec spec;
    try {
        spec.name = doc.value("name", std::string("custom"));
        const std::string variant = doc.at("variant").get<std::string>();
        if (variant == "marsrover") spec.variant = Variant::Marsrover;
        else if (variant == "box") spec.variant = Variant::Box;
        else throw FormatError("grid spec: unknown variant '" + variant + "'");
        spec.width = doc.at("width").get<int>();
        spec.height = doc.at("height").get<int>();
        spec.walls = json_cells(doc.value("walls", nlohmann::json::array()));
        spec.start = json_cell(doc.at("start"));
        spec.goal = json_cell(doc.at("goal"));
        spec.risky = json_cells(doc.value("risky", nlohmann::json::array()));
        if (spec.variant == Variant::Box) spec.box_start = json_cell(doc.at("box_start"));
        spec.slip = doc.value("slip", 0.1);
        spec.threshold = doc.at("threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("grid spec: ") + e.what());
    }
    const auto problems = check(spec);
    if (!problems.empty()) throw FormatError("grid spec: " + problems.front());
    return spec;
}

GridSpec load_grid_spec(const std::filesystem::path& path) {
    return grid_spec_from_json(read_json_file(path));
}

}  // namespace cmdp::envs
