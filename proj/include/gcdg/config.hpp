// Experiment configuration: a flat `key = value` file covering every run
// setting, with unknown keys rejected outright so a typo cannot silently fall
// back to a default. The resolved configuration is echoed into every output
// file header, making results self-describing.
#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcdg/dcb.hpp"
#include "gcdg/hlc.hpp"
#include "gcdg/scb.hpp"

namespace gcdg {

enum class ClassifierKind { generative, linear, mlp };
enum class GammaMode { hard, soft };

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t iterations = 2000;
    double lr = 1e-3;
    std::size_t batch_per_domain = 32;
    std::size_t k = 2;  // mixture components per class
    double nll_weight = 1.0;
    ClassifierKind classifier_kind = ClassifierKind::generative;
    GammaMode gamma_mode = GammaMode::hard;
    PredictMode predict_mode = PredictMode::max_component;
    ScbConfig scb;
    DcbConfig dcb;
    std::size_t net_hidden = 16;
    std::size_t net_dim_d = 8;
    bool net_identity = false;
    std::size_t mlp_hidden = 0;  // 0 = auto-size to the generative budget
    std::string data_task;
    std::string data_spec_path;

    void validate() const {
        require(lr > 0.0, "config: lr must be positive");
        require(batch_per_domain >= 1, "config: batch_per_domain must be positive");
        require(k >= 1, "config: k must be positive");
        require(nll_weight >= 0.0, "config: nll_weight must be non-negative");
        require(scb.q > 0.0 && scb.q < 100.0, "config: scb.q must be in (0,100)");
        require(dcb.lambda > 0.0, "config: dcb.lambda must be positive");
        require(dcb.iterations >= 1, "config: dcb.iterations must be positive");
        require(net_dim_d >= 1, "config: net.dim_d must be positive");
        require(net_identity || net_hidden >= 1, "config: net.hidden must be positive");
    }
};

namespace detail {

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline const char* to_string(ClassifierKind kind) {
    switch (kind) {
        case ClassifierKind::generative: return "generative";
        case ClassifierKind::linear: return "linear";
        case ClassifierKind::mlp: return "mlp";
    }
    return "?";
}

inline const char* to_string(GammaMode mode) {
    return mode == GammaMode::hard ? "hard" : "soft";
}

inline const char* to_string(PredictMode mode) {
    return mode == PredictMode::max_component ? "max_component" : "marginal";
}

// Applies one key/value pair; throws on unknown keys or malformed values.
inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    bool known = true;
    try {
        if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "iterations") cfg.iterations = std::stoul(value);
        else if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "batch_per_domain") cfg.batch_per_domain = std::stoul(value);
        else if (key == "k") cfg.k = std::stoul(value);
        else if (key == "nll_weight") cfg.nll_weight = std::stod(value);
        else if (key == "classifier_kind") {
            if (value == "generative") cfg.classifier_kind = ClassifierKind::generative;
            else if (value == "linear") cfg.classifier_kind = ClassifierKind::linear;
            else if (value == "mlp") cfg.classifier_kind = ClassifierKind::mlp;
            else throw std::invalid_argument("expected generative|linear|mlp");
        } else if (key == "gamma_mode") {
            if (value == "hard") cfg.gamma_mode = GammaMode::hard;
            else if (value == "soft") cfg.gamma_mode = GammaMode::soft;
            else throw std::invalid_argument("expected hard|soft");
        } else if (key == "predict_mode") {
            if (value == "max_component") cfg.predict_mode = PredictMode::max_component;
            else if (value == "marginal") cfg.predict_mode = PredictMode::marginal;
            else throw std::invalid_argument("expected max_component|marginal");
        } else if (key == "scb.q") cfg.scb.q = std::stod(value);
        else if (key == "scb.enabled") cfg.scb.enabled = detail::parse_bool(value);
        else if (key == "dcb.lambda") cfg.dcb.lambda = std::stod(value);
        else if (key == "dcb.iterations") cfg.dcb.iterations = std::stoul(value);
        else if (key == "dcb.enabled") cfg.dcb.enabled = detail::parse_bool(value);
        else if (key == "net.hidden") cfg.net_hidden = std::stoul(value);
        else if (key == "net.dim_d") cfg.net_dim_d = std::stoul(value);
        else if (key == "net.identity") cfg.net_identity = detail::parse_bool(value);
        else if (key == "mlp.hidden") cfg.mlp_hidden = std::stoul(value);
        else if (key == "data.task") cfg.data_task = value;
        else if (key == "data.spec_path") cfg.data_spec_path = value;
        else known = false;
    } catch (const std::invalid_argument& e) {
        // enum parsers raise self-describing messages; numeric parses do not
        const std::string what = e.what();
        if (what.rfind("expected", 0) == 0 || what.rfind("sto", 0) == 0) {
            throw std::invalid_argument("malformed value '" + value + "' for key '" + key +
                                        "': " + what);
        }
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("malformed value '" + value + "' for key '" + key + "'");
    }
    if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
}

// `key=value` override as passed on a command line.
inline void config_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
    }
    config_set(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                        ": expected 'key = value'");
        }
        try {
            config_set(cfg, detail::trim(trimmed.substr(0, eq)),
                       detail::trim(trimmed.substr(eq + 1)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

// Fixed-order echo of the fully resolved configuration.
inline std::vector<std::string> echo_config(const RunConfig& cfg) {
    std::vector<std::string> lines;
    auto add = [&](const std::string& key, const std::string& value) {
        lines.push_back(key + " = " + value);
    };
    std::ostringstream num;
    num << std::setprecision(17);
    auto fmt = [&](double v) {
        num.str("");
        num << v;
        return num.str();
    };
    add("seed", std::to_string(cfg.seed));
    add("iterations", std::to_string(cfg.iterations));
    add("lr", fmt(cfg.lr));
    add("batch_per_domain", std::to_string(cfg.batch_per_domain));
    add("k", std::to_string(cfg.k));
    add("nll_weight", fmt(cfg.nll_weight));
    add("classifier_kind", to_string(cfg.classifier_kind));
    add("gamma_mode", to_string(cfg.gamma_mode));
    add("predict_mode", to_string(cfg.predict_mode));
    add("scb.q", fmt(cfg.scb.q));
    add("scb.enabled", cfg.scb.enabled ? "true" : "false");
    add("dcb.lambda", fmt(cfg.dcb.lambda));
    add("dcb.iterations", std::to_string(cfg.dcb.iterations));
    add("dcb.enabled", cfg.dcb.enabled ? "true" : "false");
    add("net.hidden", std::to_string(cfg.net_hidden));
    add("net.dim_d", std::to_string(cfg.net_dim_d));
    add("net.identity", cfg.net_identity ? "true" : "false");
    add("mlp.hidden", std::to_string(cfg.mlp_hidden));
    add("data.task", cfg.data_task);
    add("data.spec_path", cfg.data_spec_path);
    return lines;
}

}  // namespace gcdg
