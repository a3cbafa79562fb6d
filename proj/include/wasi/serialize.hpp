#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wasi/model.hpp"
#include "wasi/rank_select.hpp"
#include "wasi/train.hpp"

namespace wasi {

using json = nlohmann::json;

// ---- raw little-endian float64 blobs ----

namespace detail {
inline void to_little_endian(std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (double& v : values) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            bits = __builtin_bswap64(bits);
            std::memcpy(&v, &bits, 8);
        }
    }
}
}  // namespace detail

inline void write_blob(const std::string& path, const double* data, std::size_t n) {
    std::vector<double> buf(data, data + n);
    detail::to_little_endian(buf);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write blob: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(8 * n));
}

inline std::vector<double> read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot read blob: " + path);
    const std::streamsize bytes = in.tellg();
    if (bytes % 8 != 0) throw std::runtime_error("blob size is not a multiple of 8: " + path);
    in.seekg(0);
    std::vector<double> buf(static_cast<std::size_t>(bytes) / 8);
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    detail::to_little_endian(buf);  // involutive swap
    return buf;
}

inline void write_matrix_blob(const std::string& path, const Matrix& m) {
    MatrixRowMajor rm = m;
    write_blob(path, rm.data(), static_cast<std::size_t>(rm.size()));
}

inline Matrix read_matrix_blob(const std::string& path, std::size_t rows, std::size_t cols) {
    std::vector<double> buf = read_blob(path);
    if (buf.size() != rows * cols)
        throw std::runtime_error("blob " + path + " holds " + std::to_string(buf.size()) +
                                 " values, expected " + std::to_string(rows * cols));
    return Eigen::Map<const MatrixRowMajor>(buf.data(), Eigen::Index(rows), Eigen::Index(cols));
}

// ---- config / record JSON ----

inline json to_json(const ModelSpec& s) {
    return json{{"kind", s.kind},       {"tokens", s.tokens},   {"height", s.height},
                {"width", s.width},     {"features", s.features}, {"hidden", s.hidden},
                {"classes", s.classes}};
}

inline json to_json(const TrainConfig& c) {
    return json{{"model", to_json(c.model)},
                {"data_source", c.data_source},
                {"mode", to_string(c.mode)},
                {"epsilon", c.epsilon},
                {"wsi_order", c.wsi_order == WsiOrder::refresh ? "refresh" : "verbatim"},
                {"update_sign", c.update_sign == UpdateSign::ascent ? "ascent" : "descent"},
                {"plan", c.plan},
                {"plan_ranks", c.plan_ranks},
                {"plan_budget", c.plan_budget},
                {"plan_target", c.plan_target},
                {"thresholds", c.thresholds},
                {"compress_batch_mode", c.compress_batch_mode},
                {"asi_epoch_refresh", c.asi_epoch_refresh},
                {"learning_rate", c.learning_rate},
                {"momentum", c.momentum},
                {"weight_decay", c.weight_decay},
                {"clip_norm", c.clip_norm},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"cosine_schedule", c.cosine_schedule},
                {"seed", c.seed},
                {"threads", c.threads}};
}

inline json to_json(const RunRecord& r, const TrainConfig& cfg, bool with_timestamp = true) {
    json epochs = json::array();
    for (const EpochRecord& e : r.epochs)
        epochs.push_back(json{{"epoch", e.epoch},
                              {"lr", e.lr},
                              {"train_loss", e.train_loss},
                              {"train_acc", e.train_acc},
                              {"val_acc", e.val_acc},
                              {"layer_ranks", e.layer_ranks},
                              {"muls", e.muls},
                              {"adds", e.adds}});
    json out{{"config", to_json(cfg)},
             {"mode", r.mode},
             {"seed", r.seed},
             {"epochs", epochs},
             {"step_losses", r.step_losses},
             {"weight_stored", r.weight_stored},
             {"activation_stored", r.activation_stored},
             {"total_muls", r.total_muls},
             {"total_adds", r.total_adds},
             {"peak_intermediate", r.peak_intermediate}};
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        out["written_at"] =
            std::chrono::duration_cast<std::chrono::seconds>(now).count();
    }
    return out;
}

/// One row per epoch; excluded from determinism comparisons is nothing: the
/// CSV carries no timestamp.
inline void write_run_record_csv(std::ostream& os, const RunRecord& r) {
    os << "epoch,lr,train_loss,train_acc,val_acc";
    const std::size_t layers = r.epochs.empty() ? 0 : r.epochs.front().layer_ranks.size();
    for (std::size_t l = 0; l < layers; ++l) os << ",k_" << l;
    os << ",muls,adds\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
    };
    for (const EpochRecord& e : r.epochs) {
        os << e.epoch << ',';
        num(e.lr);
        os << ',';
        num(e.train_loss);
        os << ',';
        num(e.train_acc);
        os << ',';
        num(e.val_acc);
        for (std::size_t l = 0; l < layers; ++l) os << ',' << e.layer_ranks[l];
        os << ',' << e.muls << ',' << e.adds << '\n';
    }
}

inline json to_json(const PerplexityTable& t) {
    return json{{"thresholds", t.thresholds},
                {"perplexity", t.perplexity},
                {"ranks", t.ranks},
                {"dims", t.dims}};
}

inline PerplexityTable perplexity_table_from_json(const json& j) {
    PerplexityTable t;
    t.thresholds = j.at("thresholds").get<std::vector<double>>();
    t.perplexity = j.at("perplexity").get<std::vector<std::vector<double>>>();
    t.ranks = j.at("ranks").get<std::vector<std::vector<std::vector<std::size_t>>>>();
    t.dims = j.at("dims").get<std::vector<std::vector<std::size_t>>>();
    return t;
}

inline json to_json(const RankPlan& p) {
    return json{{"threshold_index", p.threshold_index},
                {"ranks", p.ranks},
                {"total_memory", p.total_memory},
                {"total_perplexity", p.total_perplexity}};
}

inline RankPlan rank_plan_from_json(const json& j) {
    RankPlan p;
    p.threshold_index = j.at("threshold_index").get<std::vector<std::size_t>>();
    p.ranks = j.at("ranks").get<std::vector<std::vector<std::size_t>>>();
    p.total_memory = j.at("total_memory").get<std::size_t>();
    p.total_perplexity = j.at("total_perplexity").get<double>();
    return p;
}

// ---- checkpoints: JSON manifest + one blob per factor ----

inline json save_checkpoint(const std::string& dir, const Model& m, const TrainConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "wasi-checkpoint-v1";
    manifest["seed"] = cfg.seed;
    manifest["config"] = to_json(cfg);

    json layers = json::array();
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const WasiLinear& lin = m.layers[l];
        const std::string prefix = "layer" + std::to_string(l);
        json entry{{"index", l}, {"in", lin.in_dim}, {"out", lin.out_dim}};
        if (lin.weight_lowrank) {
            entry["weight"] = "lowrank";
            entry["rank"] = lin.lr.rank;
            entry["epsilon"] = lin.lr.epsilon;
            entry["iteration"] = lin.lr.iteration;
            write_matrix_blob(dir + "/" + prefix + ".L.bin", lin.lr.L);
            write_matrix_blob(dir + "/" + prefix + ".R.bin", lin.lr.R);
            entry["files"] = {{"L", prefix + ".L.bin"}, {"R", prefix + ".R.bin"}};
        } else {
            entry["weight"] = "dense";
            write_matrix_blob(dir + "/" + prefix + ".W.bin", lin.w_dense);
            entry["files"] = {{"W", prefix + ".W.bin"}};
        }
        if (lin.act_compress && lin.workers[0].asi) {
            const TuckerActivation& ta = *lin.workers[0].asi;
            json act{{"ranks", ta.ranks}, {"dims", ta.dims()}, {"epoch", ta.epoch}};
            write_blob(dir + "/" + prefix + ".core.bin", ta.core.data.data(),
                       ta.core.size());
            json files{{"core", prefix + ".core.bin"}};
            for (std::size_t u = 0; u < ta.factors.size(); ++u) {
                const std::string name = prefix + ".U" + std::to_string(u + 1) + ".bin";
                write_matrix_blob(dir + "/" + name, ta.factors[u]);
                files["U" + std::to_string(u + 1)] = name;
            }
            act["files"] = files;
            entry["activation"] = act;
        }
        layers.push_back(entry);
    }
    manifest["layers"] = layers;

    if (m.is_block()) {
        json dense = json::array();
        const std::pair<const char*, const DenseLinear*> named[] = {
            {"wq", &m.wq}, {"wk", &m.wk}, {"wv", &m.wv}, {"wo", &m.wo},
            {"classifier", &m.classifier}};
        for (const auto& [name, dl] : named) {
            const std::string file = std::string("dense.") + name + ".bin";
            write_matrix_blob(dir + "/" + file, dl->w);
            dense.push_back(json{{"name", name},
                                 {"rows", dl->w.rows()},
                                 {"cols", dl->w.cols()},
                                 {"file", file}});
        }
        manifest["dense"] = dense;
    }

    std::ofstream out(dir + "/manifest.json");
    out << manifest.dump(2) << '\n';
    return manifest;
}

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return json::parse(in);
}

}  // namespace wasi
