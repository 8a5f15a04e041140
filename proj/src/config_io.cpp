#include "mccir/config_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mccir {

namespace {

nlohmann::json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file: " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("invalid JSON in " + path + ": " + e.what());
    }
}

double get_or(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
    return j[key].get<double>();
}

}  // namespace

PhysicalParams default_physical_params() {
    PhysicalParams p;
    p.n_tx = 1e5;
    p.diffusion = 4.365e-10;     // m^2/s
    p.distance = 4e-7;           // m
    p.receiver_radius = 5e-8;    // m
    p.noise_fraction = 0.2;
    return p;
}

double default_second_tap() { return 11.76; }

CirConfig load_cir_config(const std::string& path) {
    const nlohmann::json j = parse_json_file(path);
    CirConfig cfg;
    const PhysicalParams d = default_physical_params();
    cfg.params.n_tx = get_or(j, "n_tx", d.n_tx);
    cfg.params.diffusion = get_or(j, "diffusion", d.diffusion);
    cfg.params.distance = get_or(j, "distance", d.distance);
    cfg.params.receiver_radius = get_or(j, "receiver_radius", d.receiver_radius);
    cfg.params.noise_fraction = get_or(j, "noise_fraction", d.noise_fraction);
    if (j.contains("memory")) {
        if (!j["memory"].is_number_unsigned() || j["memory"].get<std::size_t>() < 1)
            throw std::invalid_argument("memory must be a positive integer");
        cfg.memory = j["memory"].get<std::size_t>();
    }
    validate(cfg.params);
    if (j.contains("symbol_duration")) {
        const double t = get_or(j, "symbol_duration", 0.0);
        if (!(t > 0.0)) throw std::invalid_argument("symbol_duration must be positive");
        cfg.params.symbol_duration = t;
    } else {
        const double target = get_or(j, "target_tap2", default_second_tap());
        cfg.params.symbol_duration = calibrate_symbol_duration(cfg.params, target);
    }
    return cfg;
}

ChannelPrior load_prior(const std::string& path, std::size_t memory) {
    const nlohmann::json j = parse_json_file(path);
    ChannelPrior prior;
    const double sigma2 = get_or(j, "sigma2", 0.1);
    if (sigma2 < 0.0) throw std::invalid_argument("sigma2 must be non-negative");
    prior.sigma = std::sqrt(sigma2);
    if (j.contains("cir")) {
        if (!j["cir"].is_array() || j["cir"].size() != memory + 1)
            throw std::invalid_argument("cir must be an array of L+1 numbers");
        Vector v;
        for (const auto& x : j["cir"]) {
            if (!x.is_number()) throw std::invalid_argument("cir entries must be numbers");
            v.push_back(x.get<double>());
        }
        prior.default_cir = CirVector::from_vector(v);
    } else {
        PhysicalParams p = default_physical_params();
        p.symbol_duration = calibrate_symbol_duration(p, default_second_tap());
        prior.default_cir = physical_cir(p, memory);
    }
    return prior;
}

namespace {

std::vector<double> load_numbers(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open file: " + path);
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::istringstream is(line);
        std::string tok;
        if (!(is >> tok)) continue;  // blank line
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        std::string rest;
        if (pos != tok.size() || (is >> rest))
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected one number per line");
        out.push_back(v);
    }
    return out;
}

}  // namespace

TrainingSequence load_sequence(const std::string& path) {
    TrainingSequence seq;
    seq.symbols = load_numbers(path);
    if (seq.symbols.empty()) throw std::invalid_argument(path + ": empty sequence");
    return seq;
}

Observation load_observation(const std::string& path) {
    Observation obs;
    for (double v : load_numbers(path)) {
        if (v < 0 || v != std::floor(v))
            throw std::invalid_argument(path + ": counts must be non-negative integers");
        obs.counts.push_back(static_cast<std::int64_t>(v));
    }
    if (obs.counts.empty()) throw std::invalid_argument(path + ": empty observation");
    return obs;
}

}  // namespace mccir
