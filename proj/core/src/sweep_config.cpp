#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nclasso/errors.hpp"
#include "nclasso/harness.hpp"

namespace nclasso {

namespace {

using nlohmann::json;

void require_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw InvalidArgument(std::string(where) + " must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const auto key : allowed) known = known || item.key() == key;
        if (!known) throw InvalidArgument("unknown key '" + item.key() + "' in " + std::string(where));
    }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(std::string("key '") + key + "' has the wrong type");
    }
}

std::string required_string(const json& obj, const char* key, std::string_view where) {
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string())
        throw InvalidArgument(std::string(where) + " needs a string '" + key + "'");
    return it->get<std::string>();
}

LinkKind parse_link(const std::string& s) {
    if (s == "logistic") return LinkKind::Logistic;
    if (s == "tanh") return LinkKind::Tanh;
    throw InvalidArgument("unknown link '" + s + "'");
}

LossVariant parse_model(const json& j) {
    const std::string kind = required_string(j, "kind", "model");
    if (kind == "robust") {
        require_keys(j, "model", {"kind", "t0"});
        return Robust{get_or(j, "t0", Robust{}.t0)};
    }
    if (kind == "binary") {
        require_keys(j, "model", {"kind", "link"});
        return Binary{parse_link(get_or<std::string>(j, "link", "logistic"))};
    }
    if (kind == "nls") {
        require_keys(j, "model", {"kind", "link", "noise_sd"});
        return Nls{parse_link(get_or<std::string>(j, "link", "tanh")), get_or(j, "noise_sd", Nls{}.noise_sd)};
    }
    throw InvalidArgument("unknown model kind '" + kind + "'");
}

DesignSpec parse_design(const json& j) {
    const std::string family = required_string(j, "family", "design");
    DesignSpec spec;
    if (family == "rademacher") {
        require_keys(j, "design", {"family", "scale", "n_mix"});
        spec.family = Rademacher{get_or(j, "scale", 1.0)};
    } else if (family == "uniform") {
        require_keys(j, "design", {"family", "half_width", "n_mix"});
        spec.family = UniformBox{get_or(j, "half_width", 1.0)};
    } else {
        throw InvalidArgument("unknown design family '" + family + "'");
    }
    spec.n_mix = get_or<std::size_t>(j, "n_mix", 1);
    return spec;
}

NoiseSpec parse_noise(const json& j) {
    const std::string family = required_string(j, "family", "noise");
    if (family == "gaussian") {
        require_keys(j, "noise", {"family", "sd"});
        return {Gaussian{get_or(j, "sd", 1.0)}};
    }
    if (family == "laplace") {
        require_keys(j, "noise", {"family", "scale"});
        return {Laplace{get_or(j, "scale", 1.0)}};
    }
    if (family == "student") {
        require_keys(j, "noise", {"family", "dof", "scale"});
        return {StudentT{get_or(j, "dof", StudentT{}.dof), get_or(j, "scale", 1.0)}};
    }
    if (family == "contam") {
        require_keys(j, "noise", {"family", "sd1", "sd2", "mix"});
        const ContaminatedGaussian def;
        return {ContaminatedGaussian{get_or(j, "sd1", def.sd1), get_or(j, "sd2", def.sd2), get_or(j, "mix", def.mix)}};
    }
    throw InvalidArgument("unknown noise family '" + family + "'");
}

LambdaPolicy parse_lambda(const json& j) {
    const std::string kind = required_string(j, "kind", "lambda");
    if (kind == "paper") {
        require_keys(j, "lambda", {"kind"});
        return {LambdaPolicyKind::Paper, 0.0};
    }
    require_keys(j, "lambda", {"kind", "value"});
    if (!j.contains("value")) throw InvalidArgument("lambda policy '" + kind + "' needs a value");
    const double value = get_or(j, "value", 0.0);
    if (kind == "manual") return {LambdaPolicyKind::Manual, value};
    if (kind == "nls_k") return {LambdaPolicyKind::NlsK, value};
    throw InvalidArgument("unknown lambda policy '" + kind + "'");
}

FitConfig parse_fit(const json& j) {
    require_keys(j, "fit",
                 {"max_iters", "tol_objective", "tol_prox_residual", "restarts", "init", "warm_ridge", "step"});
    FitConfig fit;
    fit.max_iters = get_or(j, "max_iters", fit.max_iters);
    fit.tol_objective = get_or(j, "tol_objective", fit.tol_objective);
    fit.tol_prox_residual = get_or(j, "tol_prox_residual", fit.tol_prox_residual);
    fit.restarts = get_or(j, "restarts", fit.restarts);
    fit.warm_ridge = get_or(j, "warm_ridge", fit.warm_ridge);
    const std::string init = get_or<std::string>(j, "init", "zero");
    if (init == "zero")
        fit.init = InitZero{};
    else if (init == "warm_ridge")
        fit.init = InitWarmRidge{fit.warm_ridge};
    else
        throw InvalidArgument("unknown init '" + init + "'");
    if (const auto it = j.find("step"); it != j.end()) {
        require_keys(*it, "fit.step", {"shrink", "grow", "init_step", "sufficient_decrease"});
        fit.step.shrink = get_or(*it, "shrink", fit.step.shrink);
        fit.step.grow = get_or(*it, "grow", fit.step.grow);
        fit.step.init_step = get_or(*it, "init_step", fit.step.init_step);
        fit.step.sufficient_decrease = get_or(*it, "sufficient_decrease", fit.step.sufficient_decrease);
    }
    return fit;
}

}  // namespace

void SweepConfig::validate() const {
    if (cells.empty()) throw InvalidArgument("sweep needs at least one cell");
    if (replicates == 0) throw InvalidArgument("replicates must be >= 1");
    if (jobs == 0) throw InvalidArgument("jobs must be >= 1");
    if (oracle_mc_n < 100) throw InvalidArgument("oracle_mc_n must be >= 100");
    for (const auto& c : cells) {
        if (c.n == 0 || c.d == 0) throw InvalidArgument("cell needs n, d >= 1");
        if (c.s0 == 0 || c.s0 > c.d) throw InvalidArgument("cell needs 1 <= s0 <= d");
        if (!(c.magnitude > 0.0)) throw InvalidArgument("cell magnitude must be positive");
    }
    DesignSpec probe_design = design;
    probe_design.d = cells.front().d;
    probe_design.validate();
    noise.validate();
    // a placeholder truth lets the model's own checks run
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(1);
    e1[0] = 1.0;
    ModelSpec{model, e1}.validate();
    if (const auto* nls = std::get_if<Nls>(&model)) {
        const auto* g = std::get_if<Gaussian>(&noise.family);
        if (g == nullptr || g->sd != nls->noise_sd)
            throw InvalidArgument("nls sweep needs gaussian noise with sd equal to noise_sd");
    }
    if (lambda.kind != LambdaPolicyKind::Paper && !(lambda.value > 0.0))
        throw InvalidArgument("lambda policy value must be positive");
    if (lambda.kind == LambdaPolicyKind::NlsK && !std::holds_alternative<Nls>(model))
        throw InvalidArgument("the nls_k lambda policy applies to the nls model only");
    fit.validate();
}

SweepConfig parse_sweep_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(j, "config",
                 {"model", "design", "noise", "cells", "replicates", "lambda", "fit", "master_seed", "output", "jobs",
                  "oracle_mc_n"});
    SweepConfig cfg;
    if (!j.contains("model")) throw InvalidArgument("config needs a model");
    cfg.model = parse_model(j.at("model"));
    if (j.contains("design")) cfg.design = parse_design(j.at("design"));
    if (j.contains("noise")) {
        cfg.noise = parse_noise(j.at("noise"));
    } else if (const auto* nls = std::get_if<Nls>(&cfg.model)) {
        cfg.noise = {Gaussian{nls->noise_sd}};
    }
    const auto cells = j.find("cells");
    if (cells == j.end() || !cells->is_array()) throw InvalidArgument("config needs a 'cells' array");
    for (const auto& c : *cells) {
        require_keys(c, "cell", {"n", "d", "s0", "magnitude"});
        if (!c.contains("n") || !c.contains("d") || !c.contains("s0"))
            throw InvalidArgument("every cell needs n, d and s0");
        cfg.cells.push_back({get_or<std::size_t>(c, "n", 0), get_or<std::size_t>(c, "d", 0),
                             get_or<std::size_t>(c, "s0", 0), get_or(c, "magnitude", 1.0)});
    }
    cfg.replicates = get_or(j, "replicates", cfg.replicates);
    if (j.contains("lambda")) cfg.lambda = parse_lambda(j.at("lambda"));
    if (j.contains("fit")) cfg.fit = parse_fit(j.at("fit"));
    cfg.master_seed = get_or(j, "master_seed", cfg.master_seed);
    cfg.output = get_or(j, "output", cfg.output);
    cfg.jobs = get_or(j, "jobs", cfg.jobs);
    cfg.oracle_mc_n = get_or(j, "oracle_mc_n", cfg.oracle_mc_n);
    cfg.validate();
    return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sweep_config(buf.str());
}

}  // namespace nclasso
