#include "sve/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sve/errors.hpp"

namespace sve {

using nlohmann::json;

namespace {

template <typename T>
void read_into(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json kernel_to_json(const ExperimentConfig::Kernel& k) {
    json j;
    j["type"] = k.type;
    if (k.type == "constant") j["c"] = k.c;
    if (k.type == "fractional") {
        j["scale"] = k.scale;
        j["alpha"] = k.alpha;
    }
    if (k.type == "gamma") {
        j["alpha"] = k.alpha;
        j["beta"] = k.beta;
    }
    if (k.type == "exp_sum") {
        json terms = json::array();
        for (const auto& [c, theta] : k.terms) terms.push_back({{"c", c}, {"theta", theta}});
        j["terms"] = terms;
    }
    if (k.type == "lipschitz_convolution") {
        j["values"] = k.values;
        j["lipschitz_bound"] = k.lipschitz_bound;
    }
    if (k.type == "tabulated") {
        j["s_points"] = k.s_points;
        j["t_points"] = k.t_points;
        j["table"] = k.table;
    }
    return j;
}

ExperimentConfig::Kernel kernel_from_json(const json& j) {
    ExperimentConfig::Kernel k;
    k.type = j.at("type").get<std::string>();
    read_into(j, "c", k.c);
    read_into(j, "scale", k.scale);
    read_into(j, "alpha", k.alpha);
    read_into(j, "beta", k.beta);
    if (j.contains("terms")) {
        k.terms.clear();
        for (const auto& term : j.at("terms"))
            k.terms.emplace_back(term.at("c").get<double>(), term.at("theta").get<double>());
    }
    read_into(j, "values", k.values);
    read_into(j, "lipschitz_bound", k.lipschitz_bound);
    read_into(j, "s_points", k.s_points);
    read_into(j, "t_points", k.t_points);
    read_into(j, "table", k.table);
    return k;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("model")) {
            const json& m = j.at("model");
            read_into(m, "name", cfg.model.name);
            read_into(m, "theta", cfg.model.theta);
            read_into(m, "sigma0", cfg.model.sigma0);
            read_into(m, "beta", cfg.model.beta);
            read_into(m, "vol_a", cfg.model.vol_a);
            read_into(m, "vol_b", cfg.model.vol_b);
            read_into(m, "vol_trunc", cfg.model.vol_trunc);
            read_into(m, "dim", cfg.model.dim);
        }
        if (j.contains("kernel_b")) cfg.kernel_b = kernel_from_json(j.at("kernel_b"));
        if (j.contains("kernel_sigma")) cfg.kernel_sigma = kernel_from_json(j.at("kernel_sigma"));
        read_into(j, "horizon", cfg.horizon);
        if (j.contains("partition")) {
            const json& p = j.at("partition");
            if (p.contains("uniform")) {
                cfg.uniform_steps = p.at("uniform").get<std::size_t>();
                cfg.explicit_times.clear();
            } else if (p.contains("times")) {
                cfg.uniform_steps.reset();
                cfg.explicit_times = p.at("times").get<std::vector<double>>();
            }
        }
        read_into(j, "particles", cfg.particles);
        read_into(j, "seed", cfg.seed);
        read_into(j, "mode", cfg.mode);
        read_into(j, "eta", cfg.eta);
        if (j.contains("initial")) {
            const json& i = j.at("initial");
            read_into(i, "type", cfg.initial.type);
            read_into(i, "point", cfg.initial.point);
            read_into(i, "mean", cfg.initial.mean);
            read_into(i, "cov", cfg.initial.cov);
            read_into(i, "file", cfg.initial.file);
        }
        if (j.contains("certify")) {
            const json& c = j.at("certify");
            read_into(c, "epsilon_grid", cfg.certify.epsilon_grid);
            read_into(c, "gamma_grid", cfg.certify.gamma_grid);
            read_into(c, "blowup_threshold", cfg.certify.blowup_threshold);
        }
        if (j.contains("diagnostics")) {
            const json& d = j.at("diagnostics");
            read_into(d, "moments", cfg.diagnostics.moments);
            read_into(d, "q_list", cfg.diagnostics.q_list);
            read_into(d, "increments", cfg.diagnostics.increments);
            read_into(d, "p", cfg.diagnostics.p);
            read_into(d, "lags", cfg.diagnostics.lags);
            read_into(d, "holder", cfg.diagnostics.holder);
            read_into(d, "martingale", cfg.diagnostics.martingale);
            read_into(d, "martingale_functions", cfg.diagnostics.martingale_functions);
            read_into(d, "z_threshold", cfg.diagnostics.z_threshold);
            read_into(d, "mesh_ladder", cfg.diagnostics.mesh_ladder);
            read_into(d, "particle_ladder", cfg.diagnostics.particle_ladder);
            read_into(d, "mesh_particles", cfg.diagnostics.mesh_particles);
            read_into(d, "particle_mesh_steps", cfg.diagnostics.particle_mesh_steps);
        }
        if (j.contains("output")) {
            const json& o = j.at("output");
            read_into(o, "directory", cfg.output.directory);
            read_into(o, "formats", cfg.output.formats);
            read_into(o, "plot_data", cfg.output.plot_data);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }

    if (!(cfg.horizon > 0.0)) throw ConfigError("config: horizon must be positive");
    if (cfg.particles < 2) throw ConfigError("config: particles must be >= 2");
    if (!(cfg.eta >= 1.0)) throw ConfigError("config: eta must be >= 1");
    if (!cfg.uniform_steps && cfg.explicit_times.size() < 2)
        throw ConfigError("config: partition needs uniform steps or explicit times");
    for (const auto& fmt : cfg.output.formats)
        if (fmt != "csv" && fmt != "bin") throw ConfigError("config: unknown format " + fmt);
    sim_mode_from_string(cfg.mode); // validates
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json j;
    j["model"] = {{"name", cfg.model.name},     {"theta", cfg.model.theta},
                  {"sigma0", cfg.model.sigma0}, {"beta", cfg.model.beta},
                  {"vol_a", cfg.model.vol_a},   {"vol_b", cfg.model.vol_b},
                  {"vol_trunc", cfg.model.vol_trunc}, {"dim", cfg.model.dim}};
    j["kernel_b"] = kernel_to_json(cfg.kernel_b);
    j["kernel_sigma"] = kernel_to_json(cfg.kernel_sigma);
    j["horizon"] = cfg.horizon;
    if (cfg.uniform_steps)
        j["partition"] = {{"uniform", *cfg.uniform_steps}};
    else
        j["partition"] = {{"times", cfg.explicit_times}};
    j["particles"] = cfg.particles;
    j["seed"] = cfg.seed;
    j["mode"] = cfg.mode;
    j["eta"] = cfg.eta;
    j["initial"] = {{"type", cfg.initial.type},
                    {"point", cfg.initial.point},
                    {"mean", cfg.initial.mean},
                    {"cov", cfg.initial.cov},
                    {"file", cfg.initial.file}};
    j["certify"] = {{"epsilon_grid", cfg.certify.epsilon_grid},
                    {"gamma_grid", cfg.certify.gamma_grid},
                    {"blowup_threshold", cfg.certify.blowup_threshold}};
    j["diagnostics"] = {{"moments", cfg.diagnostics.moments},
                        {"q_list", cfg.diagnostics.q_list},
                        {"increments", cfg.diagnostics.increments},
                        {"p", cfg.diagnostics.p},
                        {"lags", cfg.diagnostics.lags},
                        {"holder", cfg.diagnostics.holder},
                        {"martingale", cfg.diagnostics.martingale},
                        {"martingale_functions", cfg.diagnostics.martingale_functions},
                        {"z_threshold", cfg.diagnostics.z_threshold},
                        {"mesh_ladder", cfg.diagnostics.mesh_ladder},
                        {"particle_ladder", cfg.diagnostics.particle_ladder},
                        {"mesh_particles", cfg.diagnostics.mesh_particles},
                        {"particle_mesh_steps", cfg.diagnostics.particle_mesh_steps}};
    j["output"] = {{"directory", cfg.output.directory},
                   {"formats", cfg.output.formats},
                   {"plot_data", cfg.output.plot_data}};
    return j.dump(2) + "\n";
}

CoefficientModel make_model(const ExperimentConfig& cfg) {
    const auto& m = cfg.model;
    if (m.name == "pure_noise") return pure_noise(m.sigma0, m.dim, cfg.eta);
    if (m.name == "mean_field_ou") return mean_field_ou(m.theta, m.sigma0, m.dim, cfg.eta);
    if (m.name == "scalar_interaction")
        return scalar_interaction(m.beta, m.vol_a, m.vol_b, m.vol_trunc, m.dim, cfg.eta);
    throw ConfigError("config: unknown catalog model " + m.name);
}

KernelSpec make_kernel(const ExperimentConfig::Kernel& k, double horizon) {
    if (k.type == "constant") return KernelSpec::constant(k.c, horizon);
    if (k.type == "fractional") return KernelSpec::fractional(k.scale, k.alpha, horizon);
    if (k.type == "gamma") return KernelSpec::gamma(k.alpha, k.beta, horizon);
    if (k.type == "exp_sum") return KernelSpec::exp_sum(k.terms, horizon);
    if (k.type == "lipschitz_convolution")
        return KernelSpec::lipschitz_convolution(k.values, k.lipschitz_bound, horizon);
    if (k.type == "tabulated")
        return KernelSpec::tabulated(k.s_points, k.t_points, k.table, horizon);
    throw ConfigError("config: unknown kernel type " + k.type);
}

Partition make_partition(const ExperimentConfig& cfg) {
    if (cfg.uniform_steps) return Partition::uniform(cfg.horizon, *cfg.uniform_steps);
    return Partition(cfg.explicit_times);
}

InitialCondition make_initial(const ExperimentConfig& cfg) {
    const auto& init = cfg.initial;
    const std::size_t d = cfg.model.dim;
    if (init.type == "point") {
        std::vector<double> p = init.point;
        if (p.size() == 1 && d > 1) p.assign(d, init.point[0]);
        if (p.size() != d) throw ConfigError("config: initial point has wrong dimension");
        return InitialCondition::point_mass(std::move(p));
    }
    if (init.type == "gaussian") {
        std::vector<double> mean = init.mean;
        if (mean.size() == 1 && d > 1) mean.assign(d, init.mean[0]);
        if (mean.size() != d) throw ConfigError("config: initial mean has wrong dimension");
        std::vector<double> cov = init.cov;
        if (cov.size() == 1 && d > 1) {
            cov.assign(d * d, 0.0);
            for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = init.cov[0];
        }
        if (cov.size() != d * d)
            throw ConfigError("config: initial covariance has wrong shape");
        return InitialCondition::gaussian(std::move(mean), std::move(cov));
    }
    if (init.type == "empirical") {
        std::ifstream in(init.file);
        if (!in) throw ConfigError("config: cannot open initial atom file " + init.file);
        std::vector<double> atoms;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            double v;
            std::size_t got = 0;
            while (ls >> v) {
                atoms.push_back(v);
                ++got;
                if (ls.peek() == ',') ls.ignore();
            }
            if (got != d) throw ConfigError("config: initial atom row has wrong dimension");
        }
        return InitialCondition::empirical(std::move(atoms), d);
    }
    throw ConfigError("config: unknown initial type " + init.type);
}

} // namespace sve
