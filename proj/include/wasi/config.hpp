#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wasi/train.hpp"

namespace wasi {

/// Flat key-value config: `key = value` lines grouped under `[section]`
/// headers; keys are stored as "section.key". `#` starts a comment.
struct ConfigMap {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : std::stod(it->second);
    }
    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : std::stoul(it->second);
    }
    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw std::invalid_argument("config: boolean expected for " + key + ", got " + v);
    }
    std::vector<std::size_t> get_size_list(const std::string& key,
                                           std::vector<std::size_t> fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::vector<std::size_t> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stoul(item));
        return out;
    }
    std::vector<double> get_double_list(const std::string& key,
                                        std::vector<double> fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
        return out;
    }
};

namespace detail {
inline std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
    ConfigMap cfg;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("config line " + std::to_string(lineno) +
                                         ": unterminated section header");
            section = detail::strip(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = detail::strip(line.substr(0, eq));
        const std::string value = detail::strip(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
        cfg.values[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
}

inline ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// TrainConfig from the [model] / [data] / [train] / [asi] sections.
inline TrainConfig train_config_from(const ConfigMap& c) {
    TrainConfig cfg;
    cfg.model.kind = c.get("model.kind", cfg.model.kind);
    cfg.model.tokens = c.get_size("model.tokens", cfg.model.tokens);
    cfg.model.height = c.get_size("model.height", cfg.model.height);
    cfg.model.width = c.get_size("model.width", cfg.model.width);
    cfg.model.features = c.get_size("model.features", cfg.model.features);
    cfg.model.hidden = c.get_size_list("model.hidden", cfg.model.hidden);
    cfg.model.classes = c.get_size("model.classes", cfg.model.classes);

    cfg.data_source = c.get("data.source", cfg.data_source);

    cfg.mode = parse_train_mode(c.get("train.mode", to_string(cfg.mode)));
    cfg.epsilon = c.get_double("train.epsilon", cfg.epsilon);
    const std::string order = c.get("train.wsi_order", "verbatim");
    if (order != "verbatim" && order != "refresh")
        throw std::invalid_argument("train.wsi_order must be verbatim or refresh");
    cfg.wsi_order = order == "refresh" ? WsiOrder::refresh : WsiOrder::verbatim;
    const std::string sign = c.get("train.update_sign", "descent");
    if (sign != "descent" && sign != "ascent")
        throw std::invalid_argument("train.update_sign must be descent or ascent");
    cfg.update_sign = sign == "ascent" ? UpdateSign::ascent : UpdateSign::descent;
    cfg.learning_rate = c.get_double("train.lr", cfg.learning_rate);
    cfg.momentum = c.get_double("train.momentum", cfg.momentum);
    cfg.weight_decay = c.get_double("train.weight_decay", cfg.weight_decay);
    cfg.clip_norm = c.get_double("train.clip_norm", cfg.clip_norm);
    cfg.epochs = c.get_size("train.epochs", cfg.epochs);
    cfg.batch_size = c.get_size("train.batch_size", cfg.batch_size);
    cfg.cosine_schedule = c.get_bool("train.cosine", cfg.cosine_schedule);
    cfg.seed = c.get_size("train.seed", cfg.seed);
    cfg.threads = c.get_size("train.threads", cfg.threads);

    cfg.plan = c.get("asi.plan", cfg.plan);
    cfg.plan_ranks = c.get_size_list("asi.ranks", cfg.plan_ranks);
    cfg.plan_budget = c.get_size("asi.budget", cfg.plan_budget);
    cfg.plan_target = c.get_double("asi.target", cfg.plan_target);
    cfg.thresholds = c.get_double_list("asi.thresholds", cfg.thresholds);
    cfg.compress_batch_mode = c.get_bool("asi.compress_batch", cfg.compress_batch_mode);
    cfg.asi_epoch_refresh = c.get_bool("asi.epoch_refresh", cfg.asi_epoch_refresh);
    return cfg;
}

}  // namespace wasi
