#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "wasi/dataset.hpp"
#include "wasi/model.hpp"
#include "wasi/rank_select.hpp"

namespace wasi {

struct numeric_error : std::runtime_error {
    std::size_t epoch = 0;
    std::size_t step = 0;
    numeric_error(const std::string& msg, std::size_t e, std::size_t s)
        : std::runtime_error(msg), epoch(e), step(s) {}
};

struct TrainConfig {
    ModelSpec model;
    std::string data_source = "synthetic:classes=2,dim=32,samples=512,sep=6";
    TrainMode mode = TrainMode::wasi;
    double epsilon = 0.9;
    WsiOrder wsi_order = WsiOrder::verbatim;
    UpdateSign update_sign = UpdateSign::descent;

    // activation-rank plan: full | explicit | budget | target
    std::string plan = "full";
    std::vector<std::size_t> plan_ranks;  // explicit, per mode
    std::size_t plan_budget = 0;
    double plan_target = 0.0;
    std::vector<double> thresholds = {0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    bool compress_batch_mode = true;  // false pins r_1 to the batch extent
    bool asi_epoch_refresh = false;   // reset warm starts at epoch boundaries

    double learning_rate = 0.05;
    double momentum = 0.0;
    double weight_decay = 1e-4;
    double clip_norm = 2.0;
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    bool cosine_schedule = true;
    std::uint64_t seed = 233;
    std::size_t threads = 1;

    void validate() const {
        model.validate();
        if (epsilon <= 0.0 || epsilon > 1.0)
            throw std::invalid_argument("epsilon must lie in (0, 1]");
        if (batch_size == 0 || epochs == 0)
            throw std::invalid_argument("batch size and epochs must be positive");
        if (threads == 0 || batch_size % threads != 0)
            throw std::invalid_argument("threads must divide the batch size");
        if (plan != "full" && plan != "explicit" && plan != "budget" && plan != "target")
            throw std::invalid_argument("plan must be full, explicit, budget or target");
        if (plan == "explicit" && plan_ranks.empty())
            throw std::invalid_argument("explicit plan requires ranks");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    std::vector<std::size_t> layer_ranks;
    std::uint64_t muls = 0;  // cumulative training multiplies
    std::uint64_t adds = 0;
};

struct RunRecord {
    std::string mode;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::vector<double> step_losses;
    std::vector<std::size_t> weight_stored;      // per designated layer, final
    std::vector<std::size_t> activation_stored;  // per designated layer, final
    std::uint64_t total_muls = 0;
    std::uint64_t total_adds = 0;
    std::uint64_t peak_intermediate = 0;
};

struct CounterSnapshot {
    std::vector<std::size_t> weight_elements;
    std::vector<std::size_t> activation_elements;
    FlopCounter flops;
};

inline CounterSnapshot instrument_counters(const Model& m) {
    CounterSnapshot s;
    for (const WasiLinear& l : m.layers) {
        s.weight_elements.push_back(l.weight_stored_elements());
        std::size_t a = 0;
        for (std::size_t w = 0; w < l.workers.size(); ++w)
            a += l.activation_stored_elements(w);
        s.activation_elements.push_back(a);
    }
    s.flops = flop_counter();
    return s;
}

inline double cosine_lr(double lr0, std::size_t epoch, std::size_t total) {
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * double(epoch) / double(total)));
}

inline std::vector<std::size_t> full_ranks_for(const std::vector<std::size_t>& dims) {
    std::size_t total = 1;
    for (std::size_t d : dims) total *= d;
    std::vector<std::size_t> r;
    for (std::size_t d : dims) r.push_back(std::min(d, total / d));
    return r;
}

/// Per-layer activation ranks for the configured plan source. Budget and
/// target plans run the perplexity scan on one fixed seeded batch from the
/// training split; the model must still be dense at that point.
inline std::vector<std::vector<std::size_t>> resolve_activation_ranks(
    Model& dense_model, const SplitDataset& data, const TrainConfig& cfg,
    std::optional<PerplexityTable>* table_out = nullptr,
    std::optional<RankPlan>* plan_out = nullptr) {
    const std::size_t shard_batch = cfg.batch_size / cfg.threads;
    const auto layer_dims = dense_model.wasi_input_dims(shard_batch);
    std::vector<std::vector<std::size_t>> ranks;

    if (cfg.plan == "full") {
        for (const auto& dims : layer_dims) ranks.push_back(full_ranks_for(dims));
    } else if (cfg.plan == "explicit") {
        for (const auto& dims : layer_dims) {
            std::vector<std::size_t> r = full_ranks_for(dims);
            for (std::size_t m = 0; m < dims.size() && m < cfg.plan_ranks.size(); ++m)
                r[m] = std::min(std::max<std::size_t>(cfg.plan_ranks[m], 1), r[m]);
            ranks.push_back(r);
        }
    } else {
        const std::size_t n = std::min(cfg.batch_size, data.train.samples());
        if (n == 0) throw std::invalid_argument("empty training split");
        Tensor x({n, data.train.dim()});
        std::vector<int> y(n);
        for (std::size_t s = 0; s < n; ++s) {
            y[s] = data.train.labels[s];
            for (std::size_t d = 0; d < data.train.dim(); ++d)
                x(s, d) = data.train.features(s, d);
        }
        PerplexityTable table = perplexity_scan(dense_model, x, y, cfg.thresholds);
        RankPlan plan = cfg.plan == "budget" ? select_budget(table, cfg.plan_budget)
                                             : select_perplexity_target(table, cfg.plan_target);
        ranks = plan.ranks;
        if (table_out) *table_out = std::move(table);
        if (plan_out) *plan_out = std::move(plan);
    }

    if (!cfg.compress_batch_mode)
        for (std::size_t l = 0; l < ranks.size(); ++l)
            ranks[l][0] = full_ranks_for(layer_dims[l])[0];
    return ranks;
}

/// Switches the designated layers of a dense model into the configured mode:
/// weight factors via the initial truncated SVD, activation ranks as planned.
inline void apply_compression(Model& m, const TrainConfig& cfg,
                              const std::vector<std::vector<std::size_t>>& act_ranks) {
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        WasiLinear& lin = m.layers[l];
        if (mode_compresses_weights(cfg.mode)) {
            lin.lr = wsi_init(lin.w_dense, cfg.epsilon);
            lin.weight_lowrank = true;
            lin.w_dense = Matrix();  // only the factors persist
        }
        if (mode_compresses_activations(cfg.mode)) {
            lin.act_compress = true;
            lin.act_ranks = act_ranks.at(l);
        }
        lin.asi_seed = cfg.seed + 0x100001b3ull * (l + 1);
        lin.asi_epoch_refresh = cfg.asi_epoch_refresh;
    }
    m.mode = cfg.mode;
    m.set_workers(cfg.threads);
}

struct TrainResult {
    RunRecord record;
    std::optional<PerplexityTable> scan_table;
    std::optional<RankPlan> plan;
};

/// Builds the model, resolves the activation plan, applies compression.
inline Model prepare_model(const TrainConfig& cfg, const SplitDataset& data,
                           TrainResult* result = nullptr) {
    cfg.validate();
    if (data.train.dim() != cfg.model.input_dim())
        throw std::invalid_argument("dataset dim " + std::to_string(data.train.dim()) +
                                    " does not match model input " +
                                    std::to_string(cfg.model.input_dim()));
    Model m = build_model(cfg.model, cfg.seed);
    std::vector<std::vector<std::size_t>> ranks;
    if (mode_compresses_activations(cfg.mode)) {
        ranks = resolve_activation_ranks(m, data, cfg,
                                         result ? &result->scan_table : nullptr,
                                         result ? &result->plan : nullptr);
    } else {
        ranks.assign(m.layers.size(), {});
    }
    apply_compression(m, cfg, ranks);
    return m;
}

namespace detail {

struct WorkerResult {
    Gradients grads;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    FlopCounter counter;
};

inline WorkerResult run_shard(Model& m, const Tensor& x, const std::vector<int>& y,
                              std::size_t worker, double inv_total) {
    const FlopCounter before = flop_counter();
    WorkerResult r;
    Tensor logits = m.forward(x, true, worker);
    Tensor dlogits;
    r.loss_sum = softmax_cross_entropy(logits, y, dlogits, inv_total);
    r.correct = count_correct(logits, y);
    m.backward(dlogits, worker, r.grads);
    r.counter.muls = flop_counter().muls - before.muls;
    r.counter.adds = flop_counter().adds - before.adds;
    r.counter.peak_intermediate = flop_counter().peak_intermediate;
    return r;
}

inline void sgd_param_update(Matrix& w, Matrix& mom, bool& mom_ready, const Matrix& grad,
                             double eta, double mu) {
    if (mu != 0.0) {
        if (!mom_ready) {
            mom = Matrix::Zero(w.rows(), w.cols());
            mom_ready = true;
        }
        mom = mu * mom + grad;
        w -= eta * mom;
    } else {
        w -= eta * grad;
    }
}

}  // namespace detail

inline double evaluate_accuracy(Model& m, const Dataset& ds, std::size_t batch) {
    if (ds.samples() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < ds.samples(); begin += batch) {
        const std::size_t end = std::min(begin + batch, ds.samples());
        Tensor x({end - begin, ds.dim()});
        std::vector<int> y(end - begin);
        for (std::size_t s = begin; s < end; ++s) {
            y[s - begin] = ds.labels[s];
            for (std::size_t d = 0; d < ds.dim(); ++d)
                x(s - begin, d) = ds.features(s, d);
        }
        Tensor logits = m.forward(x, false, 0);
        correct += count_correct(logits, y);
    }
    return double(correct) / double(ds.samples());
}

/// SGD with cosine annealing, global L2 gradient clipping, weight decay on
/// the (effective) linear weights, and the per-mode low-rank update path.
/// The flop counter accumulates only the training steps; validation passes
/// are excluded.
inline RunRecord train(Model& m, const SplitDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    RunRecord rec;
    rec.mode = to_string(cfg.mode);
    rec.seed = cfg.seed;

    const std::size_t n_train = data.train.samples();
    const std::size_t bsz = cfg.batch_size;
    const std::size_t steps = n_train / bsz;  // last incomplete batch dropped
    if (steps == 0) throw std::invalid_argument("batch size exceeds the training split");
    const std::size_t dim = data.train.dim();
    const std::size_t shard = bsz / cfg.threads;

    std::uint64_t train_muls = 0, train_adds = 0, peak = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double eta =
            cfg.cosine_schedule ? cosine_lr(cfg.learning_rate, epoch, cfg.epochs)
                                : cfg.learning_rate;
        if (cfg.asi_epoch_refresh)
            for (WasiLinear& l : m.layers) l.reset_asi_state();

        std::vector<std::size_t> order(n_train);
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ull + epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t step = 0; step < steps; ++step) {
            // assemble per-worker shards
            std::vector<Tensor> xs(cfg.threads);
            std::vector<std::vector<int>> ys(cfg.threads);
            for (std::size_t w = 0; w < cfg.threads; ++w) {
                xs[w] = Tensor({shard, dim});
                ys[w].resize(shard);
                for (std::size_t s = 0; s < shard; ++s) {
                    const std::size_t src = order[step * bsz + w * shard + s];
                    ys[w][s] = data.train.labels[src];
                    for (std::size_t d = 0; d < dim; ++d)
                        xs[w](s, d) = data.train.features(src, d);
                }
            }

            std::vector<detail::WorkerResult> results(cfg.threads);
            if (cfg.threads == 1) {
                results[0] = detail::run_shard(m, xs[0], ys[0], 0, 1.0 / double(bsz));
            } else {
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < cfg.threads; ++w)
                    pool.emplace_back([&, w] {
                        results[w] = detail::run_shard(m, xs[w], ys[w], w, 1.0 / double(bsz));
                    });
                for (std::thread& t : pool) t.join();
                // fold the worker counters into the main-thread counter
                for (std::size_t w = 0; w < cfg.threads; ++w) {
                    flop_counter().muls += results[w].counter.muls;
                    flop_counter().adds += results[w].counter.adds;
                    flop_counter().on_intermediate(results[w].counter.peak_intermediate);
                }
            }

            // merge in fixed worker order
            Gradients grads = std::move(results[0].grads);
            double step_loss = results[0].loss_sum;
            correct += results[0].correct;
            train_muls += results[0].counter.muls;
            train_adds += results[0].counter.adds;
            peak = std::max(peak, results[0].counter.peak_intermediate);
            for (std::size_t w = 1; w < cfg.threads; ++w) {
                grads.add(results[w].grads);
                step_loss += results[w].loss_sum;
                correct += results[w].correct;
                train_muls += results[w].counter.muls;
                train_adds += results[w].counter.adds;
                peak = std::max(peak, results[w].counter.peak_intermediate);
            }
            step_loss /= double(bsz);
            if (!std::isfinite(step_loss))
                throw numeric_error("non-finite loss at epoch " + std::to_string(epoch) +
                                        " step " + std::to_string(step),
                                    epoch, step);
            loss_sum += step_loss;
            rec.step_losses.push_back(step_loss);

            const FlopCounter before_update = flop_counter();

            // global L2 clip over every parameter gradient
            if (cfg.clip_norm > 0.0) {
                const double norm = std::sqrt(grads.squared_norm());
                if (norm > cfg.clip_norm) grads.scale(cfg.clip_norm / norm);
            }

            // weight decay folded into the linear-weight gradients
            if (cfg.weight_decay != 0.0) {
                for (std::size_t l = 0; l < m.layers.size(); ++l) {
                    WasiLinear& lin = m.layers[l];
                    if (lin.weight_lowrank) {
                        flop_counter().on_product(lin.out_dim, lin.in_dim, lin.lr.rank);
                        grads.wasi[l] += cfg.weight_decay * reconstruct(lin.lr);
                    } else {
                        grads.wasi[l] += cfg.weight_decay * lin.w_dense;
                    }
                }
                std::size_t di = 0;
                for (DenseLinear* dl : {&m.wq, &m.wk, &m.wv, &m.wo, &m.classifier}) {
                    if (di < grads.dense.size() && grads.dense[di].size() > 0)
                        grads.dense[di] += cfg.weight_decay * dl->w;
                    ++di;
                }
            }

            // parameter updates
            for (std::size_t l = 0; l < m.layers.size(); ++l) {
                WasiLinear& lin = m.layers[l];
                Matrix g = grads.wasi[l];
                if (cfg.momentum != 0.0) {
                    if (!lin.momentum_ready) {
                        lin.momentum = Matrix::Zero(g.rows(), g.cols());
                        lin.momentum_ready = true;
                    }
                    lin.momentum = cfg.momentum * lin.momentum + g;
                    g = lin.momentum;
                }
                if (lin.weight_lowrank) {
                    Matrix w_eff = apply_update(lin.lr, g, eta, cfg.update_sign);
                    if (cfg.mode == TrainMode::svd_every_step) {
                        const long it = lin.lr.iteration + 1;
                        lin.lr = wsi_init(w_eff, cfg.epsilon);
                        lin.lr.iteration = it;
                    } else {
                        lin.lr = wsi_step(w_eff, lin.lr, cfg.wsi_order);
                    }
                } else {
                    lin.w_dense -= eta * g;
                }
            }
            if (m.is_block()) {
                std::size_t di = 0;
                for (DenseLinear* dl : {&m.wq, &m.wk, &m.wv, &m.wo, &m.classifier}) {
                    detail::sgd_param_update(dl->w, dl->momentum, dl->momentum_ready,
                                             grads.dense[di], eta, cfg.momentum);
                    ++di;
                }
                m.ln1.gain -= eta * grads.ln[0];
                m.ln1.bias -= eta * grads.ln[1];
                m.ln2.gain -= eta * grads.ln[2];
                m.ln2.bias -= eta * grads.ln[3];
            }

            train_muls += flop_counter().muls - before_update.muls;
            train_adds += flop_counter().adds - before_update.adds;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.lr = eta;
        er.train_loss = loss_sum / double(steps);
        er.train_acc = double(correct) / double(steps * bsz);
        er.val_acc = evaluate_accuracy(m, data.val, bsz);
        for (const WasiLinear& l : m.layers)
            er.layer_ranks.push_back(l.weight_lowrank ? l.lr.rank
                                                      : std::min(l.in_dim, l.out_dim));
        er.muls = train_muls;
        er.adds = train_adds;
        rec.epochs.push_back(std::move(er));
    }

    rec.total_muls = train_muls;
    rec.total_adds = train_adds;
    rec.peak_intermediate = peak;
    for (const WasiLinear& l : m.layers) {
        rec.weight_stored.push_back(l.weight_stored_elements());
        std::size_t a = 0;
        for (std::size_t w = 0; w < l.workers.size(); ++w)
            a += l.activation_stored_elements(w);
        rec.activation_stored.push_back(a);
    }
    return rec;
}

/// One-call pipeline: load nothing, just build + train on the given data.
inline TrainResult run_training(const TrainConfig& cfg, const SplitDataset& data) {
    TrainResult result;
    Model m = prepare_model(cfg, data, &result);
    result.record = train(m, data, cfg);
    return result;
}

}  // namespace wasi
