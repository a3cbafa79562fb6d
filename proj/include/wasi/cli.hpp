#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wasi/config.hpp"
#include "wasi/cost_model.hpp"
#include "wasi/dataset.hpp"
#include "wasi/serialize.hpp"
#include "wasi/train.hpp"

namespace wasi {

// exit codes: 0 success, 2 usage/input, 3 infeasible constraint, 4 numeric failure
enum ExitCode : int { kOk = 0, kUsage = 2, kInfeasible = 3, kNumeric = 4 };

namespace cli_detail {

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                                  const std::optional<std::uint64_t>& config_value) {
    if (flag) return *flag;
    if (config_value) return *config_value;
    if (const char* env = std::getenv("WASI_SEED")) return std::stoull(env);
    return 233;  // fixed default seed
}

inline std::vector<std::size_t> parse_shape(const std::string& s) {
    std::vector<std::size_t> shape;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, s.find('x') != std::string::npos ? 'x' : ','))
        shape.push_back(std::stoul(item));
    if (shape.empty()) throw std::invalid_argument("empty shape '" + s + "'");
    return shape;
}

struct DecomposeOptions {
    std::string matrix_path, tensor_path, synthetic, shape, out = ".";
    double eps = 0.9;
    std::size_t rows = 0, cols = 0;
    std::optional<std::uint64_t> seed;
};

inline int cmd_decompose(const DecomposeOptions& o) {
    namespace fs = std::filesystem;
    fs::create_directories(o.out);
    const std::uint64_t seed = resolve_seed(o.seed, std::nullopt);
    json manifest;
    manifest["epsilon"] = o.eps;

    const int sources = int(!o.matrix_path.empty()) + int(!o.tensor_path.empty()) +
                        int(!o.synthetic.empty());
    if (sources != 1) {
        std::cerr << "decompose: exactly one of --matrix, --tensor, --synthetic required\n";
        return kUsage;
    }

    std::optional<Tensor> tensor;
    std::optional<Matrix> matrix;
    if (!o.synthetic.empty()) {
        const auto shape = parse_shape(o.synthetic);
        std::mt19937_64 rng(seed);
        if (shape.size() == 2) {
            matrix = random_normal_matrix(shape[0], shape[1], rng);
        } else {
            tensor = random_normal_tensor(shape, rng);
        }
    } else if (!o.matrix_path.empty()) {
        if (o.rows == 0 || o.cols == 0) {
            std::cerr << "decompose: --matrix requires --rows and --cols\n";
            return kUsage;
        }
        matrix = read_matrix_blob(o.matrix_path, o.rows, o.cols);
    } else {
        const auto shape = parse_shape(o.shape);
        std::vector<double> data = read_blob(o.tensor_path);
        tensor = Tensor(shape, std::move(data));
    }

    if (matrix) {
        TruncatedSvd svd = truncated_svd(*matrix, o.eps);
        write_matrix_blob(o.out + "/layer0.L.bin", svd.L);
        write_matrix_blob(o.out + "/layer0.R.bin", svd.R);
        const double rel = (*matrix - svd.L * svd.R).norm() / matrix->norm();
        manifest["type"] = "matrix";
        manifest["rows"] = matrix->rows();
        manifest["cols"] = matrix->cols();
        manifest["rank"] = svd.rank;
        manifest["relative_error"] = rel;
        manifest["files"] = {{"L", "layer0.L.bin"}, {"R", "layer0.R.bin"}};
    } else {
        TuckerActivation ta = hosvd(*tensor, o.eps);
        write_blob(o.out + "/layer0.core.bin", ta.core.data.data(), ta.core.size());
        json files{{"core", "layer0.core.bin"}};
        for (std::size_t u = 0; u < ta.factors.size(); ++u) {
            const std::string name = "layer0.U" + std::to_string(u + 1) + ".bin";
            write_matrix_blob(o.out + "/" + name, ta.factors[u]);
            files["U" + std::to_string(u + 1)] = name;
        }
        Tensor recon = reconstruct_tucker(ta);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < recon.size(); ++i) {
            num += (recon.data[i] - tensor->data[i]) * (recon.data[i] - tensor->data[i]);
            den += tensor->data[i] * tensor->data[i];
        }
        manifest["type"] = "tensor";
        manifest["shape"] = tensor->shape;
        manifest["ranks"] = ta.ranks;
        manifest["relative_error"] = std::sqrt(num / den);
        manifest["files"] = files;
    }
    write_json_file(o.out + "/decompose.json", manifest);
    return kOk;
}

struct PlanOptions {
    std::string config_path, out = ".";
    std::optional<std::size_t> budget;
    std::optional<double> target;
    std::optional<std::uint64_t> seed;
};

inline int cmd_plan(const PlanOptions& o) {
    if (o.budget.has_value() == o.target.has_value()) {
        std::cerr << "plan: exactly one of --budget and --perplexity-target required\n";
        return kUsage;
    }
    ConfigMap file = parse_config_file(o.config_path);
    TrainConfig cfg = train_config_from(file);
    cfg.seed = resolve_seed(o.seed, file.has("train.seed")
                                        ? std::optional<std::uint64_t>(cfg.seed)
                                        : std::nullopt);
    cfg.plan = o.budget ? "budget" : "target";
    if (o.budget) cfg.plan_budget = *o.budget;
    if (o.target) cfg.plan_target = *o.target;
    cfg.validate();

    SplitDataset data = load_dataset(cfg.data_source, cfg.seed);
    Model dense = build_model(cfg.model, cfg.seed);

    const std::size_t n = std::min(cfg.batch_size, data.train.samples());
    Tensor x({n, data.train.dim()});
    std::vector<int> y(n);
    for (std::size_t s = 0; s < n; ++s) {
        y[s] = data.train.labels[s];
        for (std::size_t d = 0; d < data.train.dim(); ++d)
            x(s, d) = data.train.features(s, d);
    }
    PerplexityTable table = perplexity_scan(dense, x, y, cfg.thresholds);
    RankPlan plan = o.budget ? select_budget(table, *o.budget)
                             : select_perplexity_target(table, *o.target);

    std::filesystem::create_directories(o.out);
    write_json_file(o.out + "/perplexity_table.json", to_json(table));
    write_json_file(o.out + "/rank_plan.json", to_json(plan));
    return kOk;
}

struct CostOptions {
    std::size_t batch = 8, tokens = 16, height = 0, width = 0;
    std::vector<std::size_t> io, rank;
    std::vector<std::size_t> act_rank;
    std::string out = ".";
    bool svg = false;
};

inline void write_cost_svg(std::ostream& os,
                           const std::vector<std::pair<LayerShape, CostReport>>& rows) {
    const int w = 640, h = 400, margin = 48;
    double max_y = 1.0;
    for (const auto& [s, r] : rows)
        max_y = std::max({max_y, r.c_training, r.c_inference, r.s_training, r.s_inference});
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const char* colors[4] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
    const char* names[4] = {"C_training", "C_inference", "S_training", "S_inference"};
    for (int series = 0; series < 4; ++series) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[series] << "\" points=\"";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const CostReport& r = rows[i].second;
            const double v = series == 0   ? r.c_training
                             : series == 1 ? r.c_inference
                             : series == 2 ? r.s_training
                                           : r.s_inference;
            const double x = margin + double(i) / std::max<std::size_t>(rows.size() - 1, 1) *
                                          (w - 2 * margin);
            const double y = h - margin - v / max_y * (h - 2 * margin);
            os << x << ',' << y << ' ';
        }
        os << "\"/>\n<text x=\"" << (w - margin - 110) << "\" y=\""
           << (margin + 16 * series) << "\" fill=\"" << colors[series] << "\">"
           << names[series] << "</text>\n";
    }
    os << "<line x1=\"" << margin << "\" y1=\"" << (h - margin) << "\" x2=\"" << (w - margin)
       << "\" y2=\"" << (h - margin) << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
       << "\" y2=\"" << (h - margin) << "\" stroke=\"black\"/>\n</svg>\n";
}

inline int cmd_cost(const CostOptions& o) {
    if (o.io.empty() || o.rank.empty()) {
        std::cerr << "cost: --io and --rank must be non-empty\n";
        return kUsage;
    }
    std::vector<LayerShape> grid;
    for (std::size_t io : o.io)
        for (std::size_t k : o.rank) {
            LayerShape s;
            s.batch = o.batch;
            if (o.height > 0 && o.width > 0) s.spatial = {o.height, o.width};
            else s.spatial = {o.tokens};
            s.in_dim = io;
            s.out_dim = io;
            s.weight_rank = std::min(k, io);
            const auto dims = s.act_dims();
            std::size_t total = 1;
            for (std::size_t d : dims) total *= d;
            s.act_ranks.clear();
            for (std::size_t m = 0; m < dims.size(); ++m) {
                const std::size_t bound = std::min(dims[m], total / dims[m]);
                const std::size_t want = m < o.act_rank.size() ? o.act_rank[m] : k;
                s.act_ranks.push_back(std::min(std::max<std::size_t>(want, 1), bound));
            }
            grid.push_back(s);
        }
    auto rows = sweep(grid);
    std::filesystem::create_directories(o.out);
    std::ofstream csv(o.out + "/cost.csv");
    write_cost_csv(csv, rows);
    if (o.svg) {
        std::ofstream svg(o.out + "/cost.svg");
        write_cost_svg(svg, rows);
    }
    return kOk;
}

struct TrainOptions {
    std::string config_path, out = ".";
    std::optional<std::string> mode, data, wsi_order;
    std::optional<double> eps, lr, target;
    std::optional<std::size_t> epochs, batch, threads, budget;
    std::optional<std::uint64_t> seed;
    bool full_ranks = false;
};

inline int cmd_train(const TrainOptions& o) {
    ConfigMap file = parse_config_file(o.config_path);
    TrainConfig cfg = train_config_from(file);
    if (o.mode) cfg.mode = parse_train_mode(*o.mode);
    if (o.data) cfg.data_source = *o.data;
    if (o.eps) cfg.epsilon = *o.eps;
    if (o.lr) cfg.learning_rate = *o.lr;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.batch) cfg.batch_size = *o.batch;
    if (o.threads) cfg.threads = *o.threads;
    if (o.wsi_order)
        cfg.wsi_order = *o.wsi_order == "refresh" ? WsiOrder::refresh : WsiOrder::verbatim;
    if (o.full_ranks) cfg.plan = "full";
    if (o.budget) {
        cfg.plan = "budget";
        cfg.plan_budget = *o.budget;
    }
    if (o.target) {
        cfg.plan = "target";
        cfg.plan_target = *o.target;
    }
    cfg.seed = resolve_seed(o.seed, file.has("train.seed")
                                        ? std::optional<std::uint64_t>(cfg.seed)
                                        : std::nullopt);
    cfg.validate();

    SplitDataset data = load_dataset(cfg.data_source, cfg.seed);
    TrainResult result;
    Model model = prepare_model(cfg, data, &result);
    result.record = train(model, data, cfg);

    std::filesystem::create_directories(o.out);
    write_json_file(o.out + "/run.json", to_json(result.record, cfg));
    std::ofstream csv(o.out + "/run.csv");
    write_run_record_csv(csv, result.record);
    save_checkpoint(o.out + "/checkpoint", model, cfg);
    if (result.scan_table)
        write_json_file(o.out + "/perplexity_table.json", to_json(*result.scan_table));
    if (result.plan) write_json_file(o.out + "/rank_plan.json", to_json(*result.plan));

    std::cout << "final val accuracy " << result.record.epochs.back().val_acc << ", FLOPs "
              << result.record.total_muls + result.record.total_adds << "\n";
    return kOk;
}

}  // namespace cli_detail

inline int run_cli(std::vector<std::string> args) {
    CLI::App app{"training and inference in truncated weight/activation subspaces"};
    app.require_subcommand(1);

    cli_detail::DecomposeOptions dec;
    CLI::App* decompose = app.add_subcommand("decompose", "factor a matrix or tensor blob");
    decompose->add_option("--matrix", dec.matrix_path, "raw f64 matrix blob");
    decompose->add_option("--rows", dec.rows, "matrix rows");
    decompose->add_option("--cols", dec.cols, "matrix cols");
    decompose->add_option("--tensor", dec.tensor_path, "raw f64 tensor blob");
    decompose->add_option("--shape", dec.shape, "tensor shape, comma separated");
    decompose->add_option("--synthetic", dec.synthetic, "random input, e.g. 64x32 or 4x6x8");
    decompose->add_option("--eps", dec.eps, "explained-variance threshold");
    decompose->add_option("--out", dec.out, "output directory");
    std::uint64_t dec_seed = 0;
    CLI::Option* dec_seed_opt = decompose->add_option("--seed", dec_seed, "seed override");

    cli_detail::PlanOptions plan;
    CLI::App* plan_cmd = app.add_subcommand("plan", "perplexity scan and rank selection");
    plan_cmd->add_option("--config", plan.config_path, "run config file")->required();
    std::size_t plan_budget = 0;
    double plan_target = 0.0;
    CLI::Option* budget_opt =
        plan_cmd->add_option("--budget", plan_budget, "activation element budget");
    CLI::Option* target_opt = plan_cmd->add_option("--perplexity-target", plan_target,
                                                   "total perplexity target");
    plan_cmd->add_option("--out", plan.out, "output directory");
    std::uint64_t plan_seed = 0;
    CLI::Option* plan_seed_opt = plan_cmd->add_option("--seed", plan_seed, "seed override");

    cli_detail::CostOptions cost;
    CLI::App* cost_cmd = app.add_subcommand("cost", "analytic cost model sweep");
    cost_cmd->add_option("--batch", cost.batch, "batch size");
    cost_cmd->add_option("--tokens", cost.tokens, "token count");
    cost_cmd->add_option("--height", cost.height, "window height (4D layers)");
    cost_cmd->add_option("--width", cost.width, "window width (4D layers)");
    cost_cmd->add_option("--io", cost.io, "I=O sizes")->delimiter(',');
    cost_cmd->add_option("--rank", cost.rank, "weight ranks K")->delimiter(',');
    cost_cmd->add_option("--act-rank", cost.act_rank, "activation ranks per mode")
        ->delimiter(',');
    cost_cmd->add_option("--out", cost.out, "output directory");
    cost_cmd->add_flag("--svg", cost.svg, "also write a static chart");

    cli_detail::TrainOptions tr;
    CLI::App* train_cmd = app.add_subcommand("train", "run the training harness");
    train_cmd->add_option("--config", tr.config_path, "run config file")->required();
    std::string tr_mode, tr_data, tr_order;
    double tr_eps = 0, tr_lr = 0, tr_target = 0;
    std::size_t tr_epochs = 0, tr_batch = 0, tr_threads = 0, tr_budget = 0;
    std::uint64_t tr_seed = 0;
    CLI::Option* m_opt = train_cmd->add_option("--mode", tr_mode, "training mode");
    CLI::Option* d_opt = train_cmd->add_option("--data", tr_data, "dataset source");
    CLI::Option* e_opt = train_cmd->add_option("--eps", tr_eps, "weight threshold");
    CLI::Option* l_opt = train_cmd->add_option("--lr", tr_lr, "learning rate");
    CLI::Option* ep_opt = train_cmd->add_option("--epochs", tr_epochs, "epochs");
    CLI::Option* b_opt = train_cmd->add_option("--batch", tr_batch, "batch size");
    CLI::Option* th_opt = train_cmd->add_option("--threads", tr_threads, "worker count");
    CLI::Option* o_opt = train_cmd->add_option("--wsi-order", tr_order, "verbatim|refresh");
    CLI::Option* bu_opt = train_cmd->add_option("--budget", tr_budget, "activation budget");
    CLI::Option* ta_opt =
        train_cmd->add_option("--perplexity-target", tr_target, "perplexity target");
    CLI::Option* s_opt = train_cmd->add_option("--seed", tr_seed, "seed override");
    train_cmd->add_flag("--full-ranks", tr.full_ranks, "lossless activation ranks");
    train_cmd->add_option("--out", tr.out, "output directory");

    std::vector<const char*> argv;
    argv.push_back("wasi");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (decompose->parsed()) {
            if (dec_seed_opt->count() > 0) dec.seed = dec_seed;
            return cli_detail::cmd_decompose(dec);
        }
        if (plan_cmd->parsed()) {
            if (budget_opt->count() > 0) plan.budget = plan_budget;
            if (target_opt->count() > 0) plan.target = plan_target;
            if (plan_seed_opt->count() > 0) plan.seed = plan_seed;
            return cli_detail::cmd_plan(plan);
        }
        if (cost_cmd->parsed()) return cli_detail::cmd_cost(cost);
        if (train_cmd->parsed()) {
            if (m_opt->count()) tr.mode = tr_mode;
            if (d_opt->count()) tr.data = tr_data;
            if (e_opt->count()) tr.eps = tr_eps;
            if (l_opt->count()) tr.lr = tr_lr;
            if (ep_opt->count()) tr.epochs = tr_epochs;
            if (b_opt->count()) tr.batch = tr_batch;
            if (th_opt->count()) tr.threads = tr_threads;
            if (o_opt->count()) tr.wsi_order = tr_order;
            if (bu_opt->count()) tr.budget = tr_budget;
            if (ta_opt->count()) tr.target = tr_target;
            if (s_opt->count()) tr.seed = tr_seed;
            return cli_detail::cmd_train(tr);
        }
    } catch (const infeasible_error& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kInfeasible;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

}  // namespace wasi
