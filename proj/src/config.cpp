#include "cmdp/cmdp_io.hpp"
#include "cmdp/harness.hpp"

#include <algorithm>

namespace cmdp::harness {

namespace {

const std::vector<std::string> kAgents = {"psconrl", "conrl", "cucrl", "ucrlcmdp", "oracle", "uniform"};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

template <class T>
void read_opt(const nlohmann::json& doc, const char* key, T& out) {
    if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

std::vector<std::string> check(const ExperimentConfig& c) {
    std::vector<std::string> out;
    if (c.env_name.empty() && c.env_file.empty()) out.push_back("environment: give a name or a file");
    if (!c.env_file.empty() && !std::filesystem::exists(c.env_file))
        out.push_back("environment file not found: " + c.env_file.string());
    if (c.env_file.empty() && !c.env_name.empty()) {
        const auto names = envs::default_spec_names();
        if (std::find(names.begin(), names.end(), c.env_name) == names.end())
            out.push_back("unknown environment '" + c.env_name + "'");
    }
    if (std::find(kAgents.begin(), kAgents.end(), c.agent.name) == kAgents.end())
        out.push_back("unknown agent '" + c.agent.name + "'");
    if (c.horizon < 0) out.push_back("horizon must be >= 0");
    if (c.runs < 1) out.push_back("runs must be >= 1");
    if (c.cadence < 1) out.push_back("cadence must be >= 1");
    if (c.threads < 1) out.push_back("threads must be >= 1");
    if (!(c.agent.prior > 0.0)) out.push_back("agent.prior must be > 0");
    if (c.agent.delta < 0.0 || c.agent.delta >= 1.0) out.push_back("agent.delta must lie in [0, 1)");
    if (c.agent.h < 1) out.push_back("agent.h must be >= 1");
    if (!(c.agent.alpha > 0.0 && c.agent.alpha <= 1.0)) out.push_back("agent.alpha must lie in (0, 1]");
    if (!(c.agent.bonus_scale >= 0.0)) out.push_back("agent.bonus_scale must be >= 0");
    return out;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    try {
        const auto& env = doc.at("environment");
        if (env.is_string()) {
            c.env_name = env.get<std::string>();
        } else {
            read_opt(env, "name", c.env_name);
            if (env.contains("file")) c.env_file = resolve(env.at("file").get<std::string>(), base_dir);
            if (env.contains("threshold")) c.threshold = env.at("threshold").get<double>();
            if (env.contains("slip")) c.slip = env.at("slip").get<double>();
        }
        if (doc.contains("agent")) {
            const auto& a = doc.at("agent");
            if (a.is_string()) {
                c.agent.name = a.get<std::string>();
            } else {
                read_opt(a, "name", c.agent.name);
                read_opt(a, "prior", c.agent.prior);
                read_opt(a, "delta", c.agent.delta);
                read_opt(a, "h", c.agent.h);
                read_opt(a, "alpha", c.agent.alpha);
                read_opt(a, "bonus_scale", c.agent.bonus_scale);
            }
        }
        read_opt(doc, "horizon", c.horizon);
        read_opt(doc, "runs", c.runs);
        read_opt(doc, "seed", c.seed);
        read_opt(doc, "cadence", c.cadence);
        if (doc.value("full_trace", false)) c.cadence = 1;
        read_opt(doc, "save_posterior", c.save_posterior);
        read_opt(doc, "threads", c.threads);
        if (doc.contains("output")) c.output = resolve(doc.at("output").get<std::string>(), base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("experiment config: ") + e.what());
    }
    if (const auto problems = check(c); !problems.empty()) {
        std::string msg = "experiment config:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw FormatError(msg);
    }
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return experiment_config_from_json(read_json_file(path), path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json env;
    if (!c.env_name.empty()) env["name"] = c.env_name;
    if (!c.env_file.empty()) env["file"] = c.env_file.string();
    if (c.threshold) env["threshold"] = *c.threshold;
    if (c.slip) env["slip"] = *c.slip;
    nlohmann::json doc = {
        {"environment", env},
        {"agent",
         {{"name", c.agent.name},
          {"prior", c.agent.prior},
          {"delta", c.agent.delta},
          {"h", c.agent.h},
          {"alpha", c.agent.alpha},
          {"bonus_scale", c.agent.bonus_scale}}},
        {"horizon", c.horizon},
        {"runs", c.runs},
        {"seed", c.seed},
        {"cadence", c.cadence},
        {"save_posterior", c.save_posterior},
        {"threads", c.threads}};
    if (!c.output.empty()) doc["output"] = c.output.string();
    return doc;
}

}  // namespace cmdp::harness
