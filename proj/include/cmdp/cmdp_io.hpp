#pragma once

#include "cmdp/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmdp {

/// Raised when a model or config file cannot be parsed or fails validation.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CMDP document layout:
///   { "n_states", "n_actions", "n_constraints",
///     "transitions": [s][a][s'], "costs": [i][s][a],
///     "thresholds": [i], "initial_state" }
nlohmann::json to_json(const Cmdp& model);
/// Parses and validates; any violation is reported as a FormatError.
Cmdp cmdp_from_json(const nlohmann::json& doc);

Cmdp load_cmdp(const std::filesystem::path& path);
void save_cmdp(const Cmdp& model, const std::filesystem::path& path);

nlohmann::json to_json(const StationaryPolicy& policy);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);

}  // namespace cmdp
