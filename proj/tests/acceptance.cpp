// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit status is the number of
// failed criteria. `--criterion N` runs a single one.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wasi/cost_model.hpp"
#include "wasi/train.hpp"

using namespace wasi;

namespace {

double tensor_rel_err(const Tensor& got, const Tensor& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        num += (got.data[i] - want.data[i]) * (got.data[i] - want.data[i]);
        den += want.data[i] * want.data[i];
    }
    return std::sqrt(num) / (std::sqrt(den) + 1e-300);
}

TuckerActivation random_tucker(const std::vector<std::size_t>& dims,
                               const std::vector<std::size_t>& ranks, std::mt19937_64& rng) {
    TuckerActivation ta;
    ta.ranks = ranks;
    ta.core = random_normal_tensor(ranks, rng);
    for (std::size_t m = 0; m < dims.size(); ++m)
        ta.factors.push_back(orthogonalize(random_normal_matrix(dims[m], ranks[m], rng)));
    return ta;
}

TrainConfig toy_config() {
    TrainConfig cfg;
    cfg.model.kind = "mlp";
    cfg.model.tokens = 4;
    cfg.model.features = 8;
    cfg.model.hidden = {12};
    cfg.model.classes = 2;
    cfg.data_source = "synthetic:classes=2,dim=32,samples=200,sep=6,tile=8";
    cfg.batch_size = 20;
    cfg.seed = 233;
    return cfg;
}

// ---- criterion 1: low-rank ops match dense oracles on reconstructed operands ----
bool criterion1(std::string& detail) {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> ext(1, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const bool four_d = trial % 2 == 1;
        std::vector<std::size_t> dims;
        if (four_d) dims = {ext(rng), ext(rng), ext(rng), std::max<std::size_t>(ext(rng), 2)};
        else dims = {ext(rng), ext(rng), std::max<std::size_t>(ext(rng), 2)};
        const std::size_t i_dim = dims.back();
        const std::size_t o_dim = std::max<std::size_t>(ext(rng), 2);

        std::size_t total = 1;
        for (std::size_t d : dims) total *= d;
        std::vector<std::size_t> ranks;
        for (std::size_t d : dims) {
            const std::size_t bound = std::min(d, total / d);
            ranks.push_back(1 + rng() % bound);
        }
        const std::size_t k = 1 + rng() % std::min(i_dim, o_dim);

        LowRankWeight lr;
        lr.L = random_normal_matrix(o_dim, k, rng);
        lr.R = random_normal_matrix(k, i_dim, rng);
        lr.rank = k;
        const Matrix w = reconstruct(lr);

        Tensor a = random_normal_tensor(dims, rng);
        std::vector<std::size_t> dy_shape = dims;
        dy_shape.back() = o_dim;
        Tensor dy = random_normal_tensor(dy_shape, rng);
        TuckerActivation ta = random_tucker(dims, ranks, rng);
        Tensor recon = reconstruct_tucker(ta);

        worst = std::max(worst, tensor_rel_err(forward_lowrank(a, lr), forward_dense(a, w)));
        worst = std::max(worst,
                         tensor_rel_err(grad_input_lowrank(dy, lr), grad_input_dense(dy, w)));
        const Matrix gw = four_d ? grad_weight_lowrank_4d(ta, dy)
                                 : grad_weight_lowrank_3d(ta, dy);
        const Matrix gw_dense = grad_weight_dense_matrix(recon, dy);
        worst = std::max(worst, (gw - gw_dense).norm() / (gw_dense.norm() + 1e-300));
    }
    std::ostringstream os;
    os << "worst relative deviation " << worst << " over 200 shape combinations";
    detail = os.str();
    return worst <= 1e-10;
}

// ---- criterion 2: end-to-end finite-difference gradient check ----
bool criterion2(std::string& detail) {
    TrainConfig cfg;
    cfg.model.kind = "mlp";
    cfg.model.tokens = 3;
    cfg.model.features = 6;
    cfg.model.hidden = {5};
    cfg.model.classes = 3;
    cfg.data_source = "synthetic:classes=3,dim=18,samples=60,sep=4,tile=6";
    cfg.mode = TrainMode::wasi;
    cfg.epsilon = 0.8;
    cfg.plan = "full";  // lossless activation compression isolates the chain rule
    cfg.batch_size = 6;
    cfg.epochs = 1;
    cfg.seed = 233;
    SplitDataset data = load_dataset(cfg.data_source, cfg.seed);
    Model m = prepare_model(cfg, data);

    const std::size_t b = cfg.batch_size;
    Tensor x({b, data.train.dim()});
    std::vector<int> y(b);
    for (std::size_t s = 0; s < b; ++s) {
        y[s] = data.train.labels[s];
        for (std::size_t d = 0; d < data.train.dim(); ++d)
            x(s, d) = data.train.features(s, d);
    }

    Tensor logits = m.forward(x, true, 0);
    Tensor dlogits;
    softmax_cross_entropy(logits, y, dlogits, 1.0 / double(b));
    Gradients g;
    m.backward(dlogits, 0, g);

    // twin model with dense weights pinned to the reconstructed factors
    Model twin = build_model(cfg.model, cfg.seed);
    for (std::size_t l = 0; l < twin.layers.size(); ++l)
        twin.layers[l].w_dense = reconstruct(m.layers[l].lr);
    auto loss_at = [&]() {
        Tensor lg = twin.forward(x, false, 0);
        Tensor d;
        return softmax_cross_entropy(lg, y, d, 1.0) / double(b);
    };

    const double h = 1e-5;
    std::size_t entries = 0, ok = 0;
    double worst = 0.0, max_fd = 0.0;
    std::vector<std::vector<double>> fd_all(twin.layers.size());
    for (std::size_t l = 0; l < twin.layers.size(); ++l) {
        Matrix& w = twin.layers[l].w_dense;
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                const double saved = w(i, j);
                w(i, j) = saved + h;
                const double fp = loss_at();
                w(i, j) = saved - h;
                const double fm = loss_at();
                w(i, j) = saved;
                const double fd = (fp - fm) / (2 * h);
                fd_all[l].push_back(fd);
                max_fd = std::max(max_fd, std::abs(fd));
            }
    }
    const double floor = std::max(1e-6 * max_fd, 1e-12);
    for (std::size_t l = 0; l < twin.layers.size(); ++l) {
        std::size_t idx = 0;
        Matrix& w = twin.layers[l].w_dense;
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j, ++idx) {
                const double fd = fd_all[l][idx];
                const double an = g.wasi[l](i, j);
                const double rel = std::abs(an - fd) / std::max(std::abs(fd), floor);
                ++entries;
                if (rel <= 1e-4) ++ok;
                worst = std::max(worst, rel);
            }
    }
    std::ostringstream os;
    os << ok << "/" << entries << " entries within 1e-4, worst relative error " << worst;
    detail = os.str();
    return double(ok) / double(entries) >= 0.95 && worst <= 1e-3;
}

// ---- criterion 3: WSI convergence and WSI-vs-SVD training cost ----
bool criterion3(std::string& detail) {
    std::mt19937_64 rng(301);
    Matrix w = random_normal_matrix(64, 64, rng);
    auto svd10 = truncated_svd_rank(w, 10);
    const double residual_svd = (w - svd10.L * svd10.R).norm();
    LowRankWeight lr = wsi_init_rank(w, 10);
    double dev = 1e300;
    int reached_at = -1;
    for (int t = 0; t < 20; ++t) {
        lr = wsi_step(w, lr, WsiOrder::refresh);
        dev = std::abs((w - reconstruct(lr)).norm() - residual_svd);
        if (dev <= 1e-6 && reached_at < 0) reached_at = t + 1;
    }
    const bool static_ok = reached_at > 0 && dev <= 1e-6;

    TrainConfig base = toy_config();
    base.epsilon = 0.8;
    base.plan = "explicit";
    base.plan_ranks = {8, 3, 6};
    base.epochs = 10;
    SplitDataset data = load_dataset(base.data_source, base.seed);

    TrainConfig wasi_cfg = base;
    wasi_cfg.mode = TrainMode::wasi;
    RunRecord wasi_rec = run_training(wasi_cfg, data).record;

    TrainConfig svd_cfg = base;
    svd_cfg.mode = TrainMode::svd_every_step;
    RunRecord svd_rec = run_training(svd_cfg, data).record;

    const double acc_gap =
        std::abs(wasi_rec.epochs.back().val_acc - svd_rec.epochs.back().val_acc);
    const std::uint64_t wasi_flops = wasi_rec.total_muls + wasi_rec.total_adds;
    const std::uint64_t svd_flops = svd_rec.total_muls + svd_rec.total_adds;

    std::ostringstream os;
    os << "static residual deviation " << dev << " (reached at iteration " << reached_at
       << "); accuracy gap " << acc_gap << ", FLOPs " << wasi_flops << " vs " << svd_flops;
    detail = os.str();
    return static_ok && acc_gap <= 0.01 + 1e-12 && wasi_flops < svd_flops;
}

// ---- criterion 4: rank stability under per-step SVD ----
bool criterion4(std::string& detail) {
    TrainConfig cfg = toy_config();
    cfg.mode = TrainMode::svd_every_step;
    cfg.epsilon = 0.8;
    cfg.plan = "explicit";
    cfg.plan_ranks = {8, 3, 6};
    cfg.epochs = 20;
    SplitDataset data = load_dataset(cfg.data_source, cfg.seed);
    RunRecord rec = run_training(cfg, data).record;

    std::size_t max_jump = 0;
    for (std::size_t e = 3; e < rec.epochs.size(); ++e) {
        const auto& prev = rec.epochs[e - 1].layer_ranks;
        const auto& cur = rec.epochs[e].layer_ranks;
        for (std::size_t l = 0; l < cur.size(); ++l) {
            const std::size_t jump =
                cur[l] > prev[l] ? cur[l] - prev[l] : prev[l] - cur[l];
            max_jump = std::max(max_jump, jump);
        }
    }
    std::ostringstream os;
    os << "max per-layer rank change between consecutive epochs after epoch 2: "
       << max_jump;
    detail = os.str();
    return max_jump <= 1;
}

// ---- criterion 5: lossless degeneracy reproduces vanilla ----
bool criterion5(std::string& detail) {
    TrainConfig v = toy_config();
    v.mode = TrainMode::vanilla;
    v.epochs = 2;
    SplitDataset data = load_dataset(v.data_source, v.seed);
    RunRecord vanilla = run_training(v, data).record;

    TrainConfig w = toy_config();
    w.mode = TrainMode::wasi;
    w.epsilon = 1.0;
    w.plan = "full";
    w.wsi_order = WsiOrder::refresh;
    w.epochs = 2;
    RunRecord wasi_rec = run_training(w, data).record;

    double worst = 0.0;
    for (std::size_t s = 0; s < 10; ++s)
        worst = std::max(worst, std::abs(wasi_rec.step_losses[s] - vanilla.step_losses[s]));
    std::ostringstream os;
    os << "max per-step loss deviation over 10 steps: " << worst;
    detail = os.str();
    return worst <= 1e-6;
}

// ---- criterion 6: memory accounting ----
bool criterion6(std::string& detail) {
    TrainConfig cfg = toy_config();
    cfg.mode = TrainMode::wasi;
    cfg.epsilon = 0.9;
    cfg.plan = "explicit";
    cfg.plan_ranks = {6, 3, 5};
    cfg.epochs = 1;
    SplitDataset data = load_dataset(cfg.data_source, cfg.seed);
    Model m = prepare_model(cfg, data);
    train(m, data, cfg);
    CounterSnapshot snap = instrument_counters(m);

    bool ok = true;
    const auto dims = m.wasi_input_dims(cfg.batch_size);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        LayerShape s;
        s.batch = dims[l][0];
        s.spatial = {dims[l][1]};
        s.in_dim = dims[l][2];
        s.out_dim = m.layers[l].out_dim;
        s.weight_rank = m.layers[l].lr.rank;
        s.act_ranks = m.layers[l].workers[0].asi->ranks;
        MemoryCounts mc = memory_counts(s);
        ok = ok && snap.weight_elements[l] == mc.m_w_wasi;
        ok = ok && snap.activation_elements[l] == mc.m_a_wasi;
    }

    LayerShape big;
    big.batch = 1;
    big.spatial = {1};
    big.in_dim = 256;
    big.out_dim = 256;
    big.weight_rank = 8;
    big.act_ranks = {1, 1, 1};
    CostReport r = evaluate_cost(big);
    ok = ok && r.m_w_vanilla == 65536 && r.m_w_wasi == 4096 && r.c_inference == 16.0;

    std::ostringstream os;
    os << "counters equal formulas for " << m.layers.size()
       << " layers; C_inference(256,256,8) = " << r.c_inference;
    detail = os.str();
    return ok;
}

// ---- criterion 7: analytic vs measured FLOPs per training step ----
bool criterion7(std::string& detail) {
    struct Config {
        std::size_t b, n, h, w, i, o, k;
        std::vector<std::size_t> r;
    };
    std::vector<Config> configs = {
        {32, 8, 0, 0, 32, 32, 4, {2, 2, 4}},   {64, 8, 0, 0, 32, 32, 4, {2, 2, 4}},
        {32, 16, 0, 0, 32, 32, 8, {2, 4, 4}},  {64, 16, 0, 0, 64, 64, 8, {2, 4, 8}},
        {128, 8, 0, 0, 64, 64, 8, {2, 2, 8}},  {32, 8, 0, 0, 64, 32, 4, {1, 2, 4}},
        {64, 8, 0, 0, 32, 64, 4, {2, 2, 2}},   {128, 16, 0, 0, 32, 32, 4, {1, 2, 4}},
        {32, 32, 0, 0, 32, 32, 8, {2, 4, 4}},  {64, 32, 0, 0, 48, 48, 6, {2, 2, 4}},
        {96, 8, 0, 0, 48, 48, 8, {2, 2, 6}},   {48, 12, 0, 0, 40, 40, 6, {2, 2, 4}},
        {32, 8, 0, 0, 96, 96, 8, {1, 2, 8}},   {64, 8, 0, 0, 96, 48, 8, {2, 2, 6}},
        {128, 4, 0, 0, 64, 64, 4, {2, 2, 4}},  {64, 24, 0, 0, 32, 32, 6, {2, 4, 4}},
        {32, 0, 4, 4, 32, 32, 4, {2, 2, 2, 4}}, {64, 0, 4, 2, 32, 32, 4, {2, 2, 2, 4}},
        {32, 0, 8, 4, 48, 48, 6, {2, 2, 2, 6}}, {64, 0, 4, 4, 64, 64, 8, {2, 2, 2, 8}}};

    std::mt19937_64 rng(701);
    double worst = 0.0;
    std::size_t checked = 0;
    for (const Config& c : configs) {
        LayerShape s;
        s.batch = c.b;
        s.spatial = c.h > 0 ? std::vector<std::size_t>{c.h, c.w}
                            : std::vector<std::size_t>{c.n};
        s.in_dim = c.i;
        s.out_dim = c.o;
        s.weight_rank = c.k;
        s.act_ranks = c.r;
        WasiFlops f = flops_wasi(s);
        const std::uint64_t analytic = f.f_wasi + f.o_wsi + f.o_asi + f.b_wasi;

        const auto dims = s.act_dims();
        Matrix w0 = random_normal_matrix(c.o, c.i, rng);
        LowRankWeight lr = wsi_init_rank(w0, c.k);
        Tensor a = random_normal_tensor(dims, rng);
        std::vector<std::size_t> dy_shape = dims;
        dy_shape.back() = c.o;
        Tensor dy = random_normal_tensor(dy_shape, rng);

        TuckerActivation state = asi_step(a, c.r, nullptr, 7);  // cold start not measured

        flop_counter().reset();
        forward_lowrank(a, lr);
        state = asi_step(a, c.r, &state, 7);  // steady-state warm step
        grad_input_lowrank(dy, lr);
        Matrix gw = grad_weight_lowrank(state, dy);
        Matrix w_eff = apply_update(lr, gw, 0.05);
        lr = wsi_step(w_eff, lr, WsiOrder::verbatim);
        const std::uint64_t measured = flop_counter().total();

        const double rel = std::abs(double(measured) - double(analytic)) / double(analytic);
        worst = std::max(worst, rel);
        ++checked;
    }
    std::ostringstream os;
    os << "worst measured/analytic deviation " << worst * 100.0 << "% across " << checked
       << " shapes";
    detail = os.str();
    return worst <= 0.15;
}

// ---- criterion 8: rank-selection optimality and duality ----
bool criterion8(std::string& detail) {
    std::mt19937_64 rng(801);
    std::uniform_real_distribution<double> pd(0.0, 10.0);

    auto random_table = [&](bool monotone) {
        PerplexityTable t;
        for (std::size_t j = 0; j < 4; ++j) t.thresholds.push_back(0.4 + 0.2 * double(j));
        for (std::size_t i = 0; i < 4; ++i) {
            t.dims.push_back({4, 6, 8});
            t.perplexity.emplace_back();
            t.ranks.emplace_back();
            std::vector<std::size_t> r = {1, 1, 1};
            for (std::size_t j = 0; j < 4; ++j) {
                t.perplexity[i].push_back(pd(rng));
                if (monotone) {
                    for (std::size_t m = 0; m < 3; ++m)
                        r[m] = std::min(r[m] + (rng() % 2), t.dims[i][m]);
                } else {
                    r = {1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 4};
                }
                t.ranks[i].push_back(r);
            }
        }
        return t;
    };

    // exhaustive enumeration over all 4^4 assignments
    auto exhaustive = [](const PerplexityTable& t, bool budget_mode, double limit,
                         std::vector<std::size_t>& choice_out, double& p_out,
                         std::size_t& m_out) {
        bool found = false;
        std::vector<std::size_t> choice(4);
        for (std::size_t code = 0; code < 256; ++code) {
            std::size_t cc = code;
            for (std::size_t i = 0; i < 4; ++i) {
                choice[i] = cc % 4;
                cc /= 4;
            }
            double p = 0.0;
            std::size_t mem = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                p += t.perplexity[i][choice[i]];
                mem += t.memory_at(i, choice[i]);
            }
            const bool feasible =
                budget_mode ? double(mem) <= limit + 1e-12 : p <= limit + 1e-12;
            if (!feasible) continue;
            const double prim = budget_mode ? p : double(mem);
            const double best_prim = budget_mode ? p_out : double(m_out);
            if (!found || prim < best_prim - 1e-12) {
                found = true;
                choice_out = choice;
                p_out = p;
                m_out = mem;
            }
        }
        return found;
    };

    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        PerplexityTable t = random_table(trial % 2 == 0);
        std::size_t lo_m = 0, hi_m = 0;
        double lo_p = 0.0, hi_p = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            std::size_t mn = SIZE_MAX, mx = 0;
            double pn = 1e300, px = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                mn = std::min(mn, t.memory_at(i, j));
                mx = std::max(mx, t.memory_at(i, j));
                pn = std::min(pn, t.perplexity[i][j]);
                px = std::max(px, t.perplexity[i][j]);
            }
            lo_m += mn;
            hi_m += mx;
            lo_p += pn;
            hi_p += px;
        }
        const std::size_t budget = lo_m + (hi_m - lo_m) / 3;
        RankPlan pb = select_budget(t, budget);
        std::vector<std::size_t> oc;
        double op = 0.0;
        std::size_t om = 0;
        exhaustive(t, true, double(budget), oc, op, om);
        ok = ok && pb.total_memory <= budget && std::abs(pb.total_perplexity - op) <= 1e-9;

        const double tau = lo_p + (hi_p - lo_p) / 3.0;
        RankPlan pt = select_perplexity_target(t, tau);
        exhaustive(t, false, tau, oc, op, om);
        ok = ok && pt.total_perplexity <= tau + 1e-12 && pt.total_memory == om;

        // duality: the budget plan's perplexity, used as a target, fits the budget
        RankPlan dual = select_perplexity_target(t, pb.total_perplexity);
        ok = ok && dual.total_memory <= budget;
        if (!ok) break;
    }
    detail = ok ? "50 instances match exhaustive enumeration; duality holds on all"
                : "mismatch against exhaustive enumeration";
    return ok;
}

// ---- criterion 9: ASI quality vs HOSVD and warm-start benefit ----
bool criterion9(std::string& detail) {
    std::mt19937_64 rng(901);
    Tensor a = random_normal_tensor({6, 8, 10}, rng);
    const std::vector<std::size_t> ranks = {2, 3, 4};
    const double err_hosvd = tensor_rel_err(reconstruct_tucker(hosvd(a, ranks)), a);

    TuckerActivation state = asi_step(a, ranks, nullptr, 17);
    double err_asi = 1e300;
    int reached = -1;
    for (int t = 0; t < 30; ++t) {
        state = asi_step(a, ranks, &state, 17);
        err_asi = tensor_rel_err(reconstruct_tucker(state), a);
        if (std::abs(err_asi - err_hosvd) <= 0.05 * err_hosvd && reached < 0)
            reached = t + 1;
    }
    const bool static_ok = reached > 0 && std::abs(err_asi - err_hosvd) <= 0.05 * err_hosvd;

    Tensor drift = random_normal_tensor({6, 8, 10}, rng);
    TuckerActivation warm = asi_step(drift, ranks, nullptr, 41);
    double warm_sum = 0.0, cold_sum = 0.0;
    std::normal_distribution<double> noise(0.0, 0.02);
    std::uint64_t cold_seed = 1000;
    for (int t = 0; t < 50; ++t) {
        for (double& v : drift.data) v += noise(rng);
        warm = asi_step(drift, ranks, &warm, 41);
        warm_sum += tensor_rel_err(reconstruct_tucker(warm), drift);
        TuckerActivation cold = asi_step(drift, ranks, nullptr, cold_seed++);
        cold_sum += tensor_rel_err(reconstruct_tucker(cold), drift);
    }
    std::ostringstream os;
    os << "HOSVD error " << err_hosvd << ", warm ASI error " << err_asi << " (reached at step "
       << reached << "); drifting means warm " << warm_sum / 50 << " vs cold "
       << cold_sum / 50;
    detail = os.str();
    return static_ok && warm_sum <= cold_sum;
}

// ---- criterion 10: cost-model trends ----
bool criterion10(std::string& detail) {
    bool ok = true;
    double prev_c = 0.0, prev_s = 0.0;
    for (std::size_t io : {32u, 64u, 128u, 256u, 512u}) {
        LayerShape s;
        s.batch = 8;
        s.spatial = {16};
        s.in_dim = io;
        s.out_dim = io;
        s.weight_rank = 4;
        s.act_ranks = {2, 4, 4};
        CostReport r = evaluate_cost(s);
        ok = ok && r.c_inference > prev_c && r.s_inference > prev_s;
        prev_c = r.c_inference;
        prev_s = r.s_inference;
    }

    double worst_ratio = 0.0;
    for (std::size_t io : {16u, 32u, 64u}) {
        LayerShape s;
        s.batch = 8;
        s.spatial = {16};
        s.in_dim = io;
        s.out_dim = io;
        s.weight_rank = io;  // K -> min(I, O)
        const auto dims = std::vector<std::size_t>{8, 16, io};
        std::size_t total = 8 * 16 * io;
        s.act_ranks.clear();
        for (std::size_t d : dims) s.act_ranks.push_back(std::min(d, total / d));
        CostReport r = evaluate_cost(s);
        worst_ratio = std::max({worst_ratio, r.s_training, r.s_inference});
    }
    ok = ok && worst_ratio <= 1.2;

    std::ostringstream os;
    os << "C/S_inference strictly increasing in I=O; full-rank speedup ratios <= "
       << worst_ratio;
    detail = os.str();
    return ok;
}

// ---- criterion 11: training viability with real compression ----
bool criterion11(std::string& detail) {
    TrainConfig v = toy_config();
    v.mode = TrainMode::vanilla;
    v.epochs = 15;
    SplitDataset data = load_dataset(v.data_source, v.seed);
    RunRecord vanilla = run_training(v, data).record;

    TrainConfig w = toy_config();
    w.mode = TrainMode::wasi;
    w.epsilon = 0.9;
    w.plan = "explicit";
    w.plan_ranks = {8, 3, 6};
    w.epochs = 15;
    RunRecord wasi_rec = run_training(w, data).record;

    const double acc_gap =
        vanilla.epochs.back().val_acc - wasi_rec.epochs.back().val_acc;

    std::size_t mem_vanilla = 0, mem_wasi = 0;
    for (std::size_t l = 0; l < vanilla.weight_stored.size(); ++l) {
        mem_vanilla += vanilla.weight_stored[l] + vanilla.activation_stored[l];
        mem_wasi += wasi_rec.weight_stored[l] + wasi_rec.activation_stored[l];
    }
    const double reduction = double(mem_vanilla) / double(mem_wasi);

    std::ostringstream os;
    os << "accuracy " << wasi_rec.epochs.back().val_acc << " vs vanilla "
       << vanilla.epochs.back().val_acc << " (gap " << acc_gap << "); memory reduction "
       << reduction << "x";
    detail = os.str();
    return acc_gap <= 0.02 + 1e-12 && reduction >= 2.0;
}

struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> run;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0) only = std::atoi(argv[i + 1]);

    const std::vector<Criterion> criteria = {
        {1, "low-rank/dense equivalence", criterion1},
        {2, "end-to-end gradient correctness", criterion2},
        {3, "WSI convergence and WSI-vs-SVD cost", criterion3},
        {4, "rank stability across epochs", criterion4},
        {5, "lossless degeneracy matches vanilla", criterion5},
        {6, "memory accounting equals formulas", criterion6},
        {7, "measured FLOPs within 15% of analytic", criterion7},
        {8, "rank-selection optimality and duality", criterion8},
        {9, "ASI quality vs HOSVD", criterion9},
        {10, "cost trend reproduction", criterion10},
        {11, "training viability under compression", criterion11},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %2d: %s — %s (%.2fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name, detail.c_str(), secs);
        if (!ok) ++failures;
    }
    return failures;
}
