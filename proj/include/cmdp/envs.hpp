#pragma once

#include "cmdp/core.hpp"
#include "cmdp/planner.hpp"
#include "cmdp/random.hpp"

#include <json.hpp>

#include <array>
#include <compare>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmdp::envs {

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

enum class Variant { Marsrover, Box };

/// Actions in the order up, down, right, left.
enum Action : int { kUp = 0, kDown = 1, kRight = 2, kLeft = 3 };
inline constexpr int kNumActions = 4;

const char* action_name(int action);

struct GridSpec {
    std::string name;
    Variant variant = Variant::Marsrover;
    int width = 0;
    int height = 0;
    std::vector<Cell> walls;
    Cell start;
    Cell goal;
    std::vector<Cell> risky;  // Marsrover only
    Cell box_start;           // Box only
    double slip = 0.1;        // split evenly over the two perpendicular moves
    double threshold = 1.0;   // tau_1
};

/// Problems with the spec; empty when it can be compiled.
std::vector<std::string> check(const GridSpec& spec);

struct EnvState {
    Cell agent;
    Cell box{-1, -1};  // unused by Marsrover
    bool operator==(const EnvState&) const = default;
};

/// Cost vector (c_0, c_1) of one step.
using StepCosts = std::array<double, 2>;

struct StepResult {
    EnvState next;
    StepCosts costs;
};

/// Costs incurred by acting in `state`; they do not depend on the action.
StepCosts step_costs(const GridSpec& spec, const EnvState& state);

/// Deterministic effect of moving in `direction` (no slip).
EnvState move(const GridSpec& spec, const EnvState& state, int direction);

/// One simulator step: a single uniform draw picks the intended or a
/// perpendicular direction.
StepResult env_step(const GridSpec& spec, const EnvState& state, int action, Rng& rng);

/// Reachable states flattened to indices plus the exact tabular model.
class GridWorld {
public:
    explicit GridWorld(GridSpec spec);

    const GridSpec& spec() const { return spec_; }
    const Cmdp& model() const { return model_; }
    int n_states() const { return int(states_.size()); }

    EnvState initial_state() const { return states_.front(); }
    const EnvState& state(int index) const { return states_[index]; }
    /// -1 when the state is not reachable from the initial configuration.
    int index_of(const EnvState& state) const;

    int goal_index() const { return goal_index_; }

private:
    int key(const EnvState& s) const;

    GridSpec spec_;
    std::vector<EnvState> states_;
    std::vector<int> lookup_;
    int goal_index_ = -1;
    Cmdp model_;
};

Cmdp compile(const GridSpec& spec);

class InfeasibleModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OracleSolution {
    double loss = 0.0;  // J*
    StationaryPolicy policy;
    OccupancyMeasure occupancy;
};

/// Optimal constrained loss and policy of the compiled model.
OracleSolution oracle_solution(const GridSpec& spec);
OracleSolution oracle_solution(const Cmdp& model);

/// Shipped layouts: "marsrover4x4", "marsrover8x8", "box6x6".
GridSpec default_spec(std::string_view name);
std::vector<std::string> default_spec_names();

/// Builds a spec from a text picture: '#' wall, 'S' start, 'G' goal,
/// 'R' risky, 'B' box start, '.' or ' ' open floor.
GridSpec parse_layout(std::string name, Variant variant, const std::vector<std::string>& rows,
                      double slip, double threshold);

nlohmann::json to_json(const GridSpec& spec);
GridSpec grid_spec_from_json(const nlohmann::json& doc);
GridSpec load_grid_spec(const std::filesystem::path& path);

}  // namespace cmdp::envs
