#include "cmdp/cmdp_io.hpp"

#include <fstream>

namespace cmdp {

using nlohmann::json;

json to_json(const Cmdp& model) {
    const int S = model.n_states();
    const int A = model.n_actions();
    json transitions = json::array();
    for (int s = 0; s < S; ++s) {
        json per_state = json::array();
        for (int a = 0; a < A; ++a) {
            const auto row = model.transitions.row(s, a);
            per_state.push_back(std::vector<double>(row.begin(), row.end()));
        }
        transitions.push_back(std::move(per_state));
    }
    json costs = json::array();
    for (int i = 0; i < model.costs.n_components(); ++i) {
        json table = json::array();
        for (int s = 0; s < S; ++s) {
            std::vector<double> row(A);
            for (int a = 0; a < A; ++a) row[a] = model.costs(i, s, a);
            table.push_back(row);
        }
        costs.push_back(std::move(table));
    }
    return {{"n_states", S},
            {"n_actions", A},
            {"n_constraints", model.n_constraints()},
            {"transitions", std::move(transitions)},
            {"costs", std::move(costs)},
            {"thresholds", model.thresholds},
            {"initial_state", model.initial_state}};
}

Cmdp cmdp_from_json(const json& doc) {
    Cmdp model;
    try {
        const int S = doc.at("n_states").get<int>();
        const int A = doc.at("n_actions").get<int>();
        const int m = doc.at("n_constraints").get<int>();
        if (S <= 0 || A <= 0 || m < 0) throw FormatError("cmdp: non-positive dimensions");

        const auto& tr = doc.at("transitions");
        if (tr.size() != size_t(S)) throw FormatError("cmdp: transitions must have n_states entries");
        model.transitions = Kernel(S, A);
        for (int s = 0; s < S; ++s) {
            if (tr[s].size() != size_t(A))
                throw FormatError("cmdp: transitions[" + std::to_string(s) + "] must have n_actions rows");
            for (int a = 0; a < A; ++a) {
                const auto row = tr[s][a].get<std::vector<double>>();
                if (row.size() != size_t(S))
                    throw FormatError("cmdp: transition row length must be n_states");
                std::copy(row.begin(), row.end(), model.transitions.row(s, a).begin());
            }
        }

        const auto& costs = doc.at("costs");
        if (costs.size() != size_t(m + 1))
            throw FormatError("cmdp: costs must have n_constraints + 1 components");
        model.costs = CostTable(m + 1, S, A);
        for (int i = 0; i <= m; ++i) {
            if (costs[i].size() != size_t(S)) throw FormatError("cmdp: cost table must have n_states rows");
            for (int s = 0; s < S; ++s) {
                const auto row = costs[i][s].get<std::vector<double>>();
                if (row.size() != size_t(A)) throw FormatError("cmdp: cost row length must be n_actions");
                for (int a = 0; a < A; ++a) model.costs(i, s, a) = row[a];
            }
        }

        model.thresholds = doc.value("thresholds", std::vector<double>{});
        model.initial_state = doc.value("initial_state", 0);
    } catch (const json::exception& e) {
        throw FormatError(std::string("cmdp: ") + e.what());
    }

    const auto violations = validate(model);
    if (!violations.empty()) {
        std::string msg = "cmdp: invalid model";
        for (const auto& v : violations) msg += "\n  " + describe(v);
        throw FormatError(msg);
    }
    return model;
}

json to_json(const StationaryPolicy& policy) {
    json rows = json::array();
    for (int s = 0; s < policy.n_states(); ++s) {
        const auto r = policy.row(s);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Cmdp load_cmdp(const std::filesystem::path& path) { return cmdp_from_json(read_json_file(path)); }

void save_cmdp(const Cmdp& model, const std::filesystem::path& path) {
    write_json_file(to_json(model), path);
}

}  // namespace cmdp
