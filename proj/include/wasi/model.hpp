#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "wasi/activation_subspace.hpp"
#include "wasi/counters.hpp"
#include "wasi/lowrank_autodiff.hpp"
#include "wasi/rank_select.hpp"
#include "wasi/tensor.hpp"
#include "wasi/weight_subspace.hpp"

namespace wasi {

enum class TrainMode { vanilla, wsi_only, asi_only, wasi, svd_every_step };

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "vanilla") return TrainMode::vanilla;
    if (s == "wsi-only") return TrainMode::wsi_only;
    if (s == "asi-only") return TrainMode::asi_only;
    if (s == "wasi") return TrainMode::wasi;
    if (s == "svd-every-step") return TrainMode::svd_every_step;
    throw std::invalid_argument("unknown mode '" + s + "'");
}

inline std::string to_string(TrainMode m) {
    switch (m) {
        case TrainMode::vanilla: return "vanilla";
        case TrainMode::wsi_only: return "wsi-only";
        case TrainMode::asi_only: return "asi-only";
        case TrainMode::wasi: return "wasi";
        case TrainMode::svd_every_step: return "svd-every-step";
    }
    return "?";
}

inline bool mode_compresses_weights(TrainMode m) {
    return m == TrainMode::wsi_only || m == TrainMode::wasi || m == TrainMode::svd_every_step;
}
inline bool mode_compresses_activations(TrainMode m) {
    return m == TrainMode::asi_only || m == TrainMode::wasi || m == TrainMode::svd_every_step;
}

/// Toy classifier description. kind "mlp" stacks designated linear layers on
/// token activations; "block" is a transformer-style block whose MLP linears
/// are the designated layers; "block4d" reshapes tokens to height x width
/// before the MLP so those layers see 4D activations.
struct ModelSpec {
    std::string kind = "mlp";
    std::size_t tokens = 1;
    std::size_t height = 1, width = 1;  // block4d only; tokens = height * width
    std::size_t features = 16;
    std::vector<std::size_t> hidden = {16};
    std::size_t classes = 2;

    void validate() const {
        if (kind != "mlp" && kind != "block" && kind != "block4d")
            throw std::invalid_argument("model kind must be mlp, block or block4d");
        if (kind == "block4d" && tokens != height * width)
            throw std::invalid_argument("block4d: tokens must equal height * width");
        if ((kind == "block" || kind == "block4d") && hidden.size() != 1)
            throw std::invalid_argument(kind + ": exactly one hidden size expected");
        if (features == 0 || tokens == 0 || classes < 2 || hidden.empty())
            throw std::invalid_argument("degenerate model spec");
    }
    std::size_t input_dim() const { return tokens * features; }
};

inline Tensor relu(const Tensor& t) {
    Tensor out = t;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

// dx = dy where the pre-activation was positive
inline Tensor relu_backward(const Tensor& dy, const Tensor& pre) {
    Tensor out = dy;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (pre.data[i] <= 0.0) out.data[i] = 0.0;
    return out;
}

/// One designated linear layer. Weights live either densely or as (L, R)
/// factors; the input is cached densely or as a warm-started Tucker state,
/// according to the training mode.
struct WasiLinear {
    std::size_t in_dim = 0, out_dim = 0;
    bool weight_lowrank = false;
    bool act_compress = false;
    Matrix w_dense;
    LowRankWeight lr;
    std::vector<std::size_t> act_ranks;
    std::uint64_t asi_seed = 0;
    bool asi_epoch_refresh = false;

    struct WorkerState {
        std::optional<TuckerActivation> asi;
        std::optional<LayerTape> tape;
        Tensor cached_input;
        bool has_dense_cache = false;
    };
    std::vector<WorkerState> workers = std::vector<WorkerState>(1);

    Matrix momentum;
    bool momentum_ready = false;

    std::vector<std::size_t> clamp_ranks(const Tensor& a) const {
        std::vector<std::size_t> r(a.order());
        for (std::size_t m = 0; m < a.order(); ++m) {
            const std::size_t bound = std::min(a.extent(m), a.size() / a.extent(m));
            const std::size_t want = m < act_ranks.size() ? act_ranks[m] : bound;
            r[m] = std::min(std::max<std::size_t>(want, 1), bound);
        }
        return r;
    }

    Tensor forward(const Tensor& a, bool training, std::size_t worker) {
        Tensor y = weight_lowrank ? forward_lowrank(a, lr) : forward_dense(a, w_dense);
        if (training) {
            WorkerState& ws = workers.at(worker);
            if (act_compress) {
                const std::vector<std::size_t> r = clamp_ranks(a);
                const TuckerActivation* prev = nullptr;
                if (ws.asi && ws.asi->dims() == a.shape && ws.asi->ranks == r)
                    prev = &*ws.asi;
                ws.asi = asi_step(a, r, prev, asi_seed + 0x9e3779b9ull * worker);
                ws.tape = LayerTape{*ws.asi, weight_lowrank ? &lr : nullptr, a.shape};
            } else {
                ws.cached_input = a;
                ws.has_dense_cache = true;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy, Matrix& grad_w, std::size_t worker) {
        WorkerState& ws = workers.at(worker);
        if (act_compress) {
            if (!ws.tape) throw std::logic_error("backward before forward");
            grad_w = grad_weight_lowrank(ws.tape->tucker, dy);
        } else {
            if (!ws.has_dense_cache) throw std::logic_error("backward before forward");
            grad_w = grad_weight_dense_matrix(ws.cached_input, dy);
        }
        return weight_lowrank ? grad_input_lowrank(dy, lr) : grad_input_dense(dy, w_dense);
    }

    void reset_asi_state() {
        for (WorkerState& ws : workers) ws.asi.reset();
    }

    std::size_t weight_stored_elements() const {
        return weight_lowrank ? lr.stored_elements()
                              : static_cast<std::size_t>(w_dense.size());
    }
    std::size_t activation_stored_elements(std::size_t worker = 0) const {
        const WorkerState& ws = workers.at(worker);
        if (act_compress) return ws.asi ? ws.asi->stored_elements() : 0;
        return ws.has_dense_cache ? ws.cached_input.size() : 0;
    }
};

/// Dense trainable linear (no bias), used for attention projections and the
/// classifier head.
struct DenseLinear {
    Matrix w;
    Matrix momentum;
    bool momentum_ready = false;
    std::vector<Tensor> cached = std::vector<Tensor>(1);

    Tensor forward(const Tensor& a, bool training, std::size_t worker) {
        if (training) cached.at(worker) = a;
        return forward_dense(a, w);
    }
    Tensor backward(const Tensor& dy, Matrix& grad_w, std::size_t worker) {
        grad_w = grad_weight_dense_matrix(cached.at(worker), dy);
        return grad_input_dense(dy, w);
    }
};

struct LayerNorm {
    Vector gain, bias;
    Vector mom_gain, mom_bias;
    bool momentum_ready = false;
    static constexpr double kEps = 1e-5;

    struct Cache {
        Tensor normalized;          // x-hat
        std::vector<double> inv_std;  // per token
    };

    Tensor forward(const Tensor& x, Cache* cache) const {
        const std::size_t d = x.shape.back();
        const std::size_t tokens = x.size() / d;
        Tensor y(x.shape);
        if (cache) {
            cache->normalized = Tensor(x.shape);
            cache->inv_std.assign(tokens, 0.0);
        }
        for (std::size_t t = 0; t < tokens; ++t) {
            const double* xi = x.data.data() + t * d;
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += xi[j];
            mu /= double(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
            var /= double(d);
            const double inv = 1.0 / std::sqrt(var + kEps);
            for (std::size_t j = 0; j < d; ++j) {
                const double xh = (xi[j] - mu) * inv;
                if (cache) cache->normalized.data[t * d + j] = xh;
                y.data[t * d + j] = gain(Eigen::Index(j)) * xh + bias(Eigen::Index(j));
            }
            if (cache) cache->inv_std[t] = inv;
        }
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cache, Vector& dgain, Vector& dbias) const {
        const std::size_t d = dy.shape.back();
        const std::size_t tokens = dy.size() / d;
        dgain = Vector::Zero(Eigen::Index(d));
        dbias = Vector::Zero(Eigen::Index(d));
        Tensor dx(dy.shape);
        for (std::size_t t = 0; t < tokens; ++t) {
            const double* g = dy.data.data() + t * d;
            const double* xh = cache.normalized.data.data() + t * d;
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dgain(Eigen::Index(j)) += g[j] * xh[j];
                dbias(Eigen::Index(j)) += g[j];
                const double dxh = g[j] * gain(Eigen::Index(j));
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= double(d);
            mean_dxh_xh /= double(d);
            for (std::size_t j = 0; j < d; ++j) {
                const double dxh = g[j] * gain(Eigen::Index(j));
                dx.data[t * d + j] =
                    cache.inv_std[t] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
        return dx;
    }
};

/// Gradients of every trainable parameter group, merged across workers in a
/// fixed order.
struct Gradients {
    std::vector<Matrix> wasi;
    std::vector<Matrix> dense;  // wq, wk, wv, wo, classifier (block kinds); classifier-only size 0 for mlp
    std::vector<Vector> ln;     // gain1, bias1, gain2, bias2

    void add(const Gradients& o) {
        for (std::size_t i = 0; i < wasi.size(); ++i) wasi[i] += o.wasi[i];
        for (std::size_t i = 0; i < dense.size(); ++i) dense[i] += o.dense[i];
        for (std::size_t i = 0; i < ln.size(); ++i) ln[i] += o.ln[i];
    }
    void scale(double s) {
        for (Matrix& m : wasi) m *= s;
        for (Matrix& m : dense) m *= s;
        for (Vector& v : ln) v *= s;
    }
    double squared_norm() const {
        double n = 0.0;
        for (const Matrix& m : wasi) n += m.squaredNorm();
        for (const Matrix& m : dense) n += m.squaredNorm();
        for (const Vector& v : ln) n += v.squaredNorm();
        return n;
    }
};

struct Model {
    ModelSpec spec;
    TrainMode mode = TrainMode::vanilla;
    std::vector<WasiLinear> layers;  // designated layers, forward order

    // block kinds only
    DenseLinear wq, wk, wv, wo;
    DenseLinear classifier;
    LayerNorm ln1, ln2;

    bool is_block() const { return spec.kind != "mlp"; }
    bool is_4d() const { return spec.kind == "block4d"; }

    struct StepCache {
        // mlp
        std::vector<Tensor> pre;  // pre-activation output of each designated layer
        // block
        Tensor x, q, k, v;
        std::vector<Matrix> probs;  // per-sample attention rows
        Tensor attn_ctx;            // P V
        Tensor h;                   // LN1 output
        LayerNorm::Cache ln1c, ln2c;
        Tensor z;       // LN2 output
        Tensor pooled;  // (B, features)
    };
    std::vector<StepCache> caches = std::vector<StepCache>(1);

    void set_workers(std::size_t n) {
        caches.assign(n, StepCache{});
        for (WasiLinear& l : layers) l.workers.assign(n, WasiLinear::WorkerState{});
        for (DenseLinear* d : {&wq, &wk, &wv, &wo, &classifier}) d->cached.assign(n, Tensor{});
    }
    std::size_t worker_count() const { return caches.size(); }

    /// Input dims seen by each designated layer for a given batch size.
    std::vector<std::vector<std::size_t>> wasi_input_dims(std::size_t batch) const {
        std::vector<std::vector<std::size_t>> out;
        if (!is_block()) {
            std::size_t d = spec.features;
            for (const WasiLinear& l : layers) {
                out.push_back({batch, spec.tokens, d});
                d = l.out_dim;
            }
        } else if (is_4d()) {
            out.push_back({batch, spec.height, spec.width, spec.features});
            out.push_back({batch, spec.height, spec.width, spec.hidden[0]});
        } else {
            out.push_back({batch, spec.tokens, spec.features});
            out.push_back({batch, spec.tokens, spec.hidden[0]});
        }
        return out;
    }

    Tensor reshape_tokens(const Tensor& x2d) const {
        const std::size_t b = x2d.extent(0);
        if (x2d.extent(1) != spec.input_dim())
            throw std::invalid_argument("input dim " + std::to_string(x2d.extent(1)) +
                                        " does not match tokens*features " +
                                        std::to_string(spec.input_dim()));
        return Tensor({b, spec.tokens, spec.features}, x2d.data);
    }

    Tensor forward(const Tensor& x2d, bool training, std::size_t worker = 0) {
        StepCache& c = caches.at(worker);
        Tensor tokens = reshape_tokens(x2d);
        if (!is_block()) return forward_mlp(tokens, training, worker, c);
        return forward_block(tokens, training, worker, c);
    }

    /// Backward from dlogits; fills Gradients; when dy_capture is non-null the
    /// output gradient arriving at each designated layer is stored there.
    Tensor backward(const Tensor& dlogits, std::size_t worker, Gradients& g,
                    std::vector<Tensor>* dy_capture = nullptr) {
        StepCache& c = caches.at(worker);
        g.wasi.resize(layers.size());
        if (is_block()) {
            g.dense.resize(5);
            g.ln.resize(4);
        }
        if (dy_capture) dy_capture->resize(layers.size());
        return is_block() ? backward_block(dlogits, worker, g, c, dy_capture)
                          : backward_mlp(dlogits, worker, g, c, dy_capture);
    }

    /// Dense forward/backward on a held-out batch capturing, per designated
    /// layer, the input activation and the output gradient (the layers must
    /// still hold dense weights).
    std::vector<LayerScanContext> collect_scan_contexts(const Tensor& x2d,
                                                        const std::vector<int>& labels);

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const WasiLinear& l : layers) n += l.weight_stored_elements();
        if (is_block()) {
            for (const DenseLinear* d : {&wq, &wk, &wv, &wo, &classifier})
                n += static_cast<std::size_t>(d->w.size());
            n += static_cast<std::size_t>(ln1.gain.size() + ln1.bias.size() +
                                          ln2.gain.size() + ln2.bias.size());
        }
        return n;
    }

private:
    Tensor mean_pool(const Tensor& t, StepCache& c) const {
        const std::size_t b = t.extent(0), n = t.extent(1), d = t.extent(2);
        Tensor pooled({b, d});
        for (std::size_t bb = 0; bb < b; ++bb)
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t t2 = 0; t2 < n; ++t2) s += t(bb, t2, j);
                pooled(bb, j) = s / double(n);
            }
        c.pooled = pooled;
        return pooled;
    }

    Tensor mean_pool_backward(const Tensor& dpooled, std::size_t n) const {
        const std::size_t b = dpooled.extent(0), d = dpooled.extent(1);
        Tensor dy({b, n, d});
        for (std::size_t bb = 0; bb < b; ++bb)
            for (std::size_t t2 = 0; t2 < n; ++t2)
                for (std::size_t j = 0; j < d; ++j)
                    dy(bb, t2, j) = dpooled(bb, j) / double(n);
        return dy;
    }

    Tensor forward_mlp(const Tensor& tokens, bool training, std::size_t worker, StepCache& c) {
        c.pre.assign(layers.size(), Tensor{});
        Tensor a = tokens;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Tensor y = layers[l].forward(a, training, worker);
            c.pre[l] = y;
            a = (l + 1 < layers.size()) ? relu(y) : y;
        }
        return mean_pool(a, c);
    }

    Tensor backward_mlp(const Tensor& dlogits, std::size_t worker, Gradients& g, StepCache& c,
                        std::vector<Tensor>* dy_capture) {
        Tensor dy = mean_pool_backward(dlogits, spec.tokens);
        for (std::size_t l = layers.size(); l-- > 0;) {
            if (dy_capture) (*dy_capture)[l] = dy;
            Tensor dx = layers[l].backward(dy, g.wasi[l], worker);
            if (l > 0) dy = relu_backward(dx, c.pre[l - 1]);
            else dy = dx;
        }
        return dy;
    }

    Tensor attention(const Tensor& x, bool training, std::size_t worker, StepCache& c) {
        const std::size_t b = x.extent(0), n = x.extent(1), d = x.extent(2);
        c.q = wq.forward(x, training, worker);
        c.k = wk.forward(x, training, worker);
        c.v = wv.forward(x, training, worker);
        const double scale = 1.0 / std::sqrt(double(d));
        c.probs.assign(b, Matrix());
        c.attn_ctx = Tensor({b, n, d});
        for (std::size_t bb = 0; bb < b; ++bb) {
            Eigen::Map<const MatrixRowMajor> qb(c.q.data.data() + bb * n * d, n, d);
            Eigen::Map<const MatrixRowMajor> kb(c.k.data.data() + bb * n * d, n, d);
            Eigen::Map<const MatrixRowMajor> vb(c.v.data.data() + bb * n * d, n, d);
            Matrix scores = scale * (qb * kb.transpose());
            flop_counter().on_product(n, n, d);
            Matrix p(n, n);
            for (std::size_t r = 0; r < n; ++r) {
                const double mx = scores.row(r).maxCoeff();
                double z = 0.0;
                for (std::size_t cc = 0; cc < n; ++cc) {
                    p(r, cc) = std::exp(scores(r, cc) - mx);
                    z += p(r, cc);
                }
                p.row(Eigen::Index(r)) /= z;
            }
            c.probs[bb] = p;
            Eigen::Map<MatrixRowMajor> ctx(c.attn_ctx.data.data() + bb * n * d, n, d);
            ctx = p * vb;
            flop_counter().on_product(n, d, n);
        }
        return wo.forward(c.attn_ctx, training, worker);
    }

    Tensor attention_backward(const Tensor& dout, std::size_t worker, Gradients& g,
                              StepCache& c) {
        const std::size_t b = c.q.extent(0), n = c.q.extent(1), d = c.q.extent(2);
        const double scale = 1.0 / std::sqrt(double(d));
        Tensor dctx = wo.backward(dout, g.dense[3], worker);

        Tensor dq({b, n, d}), dk({b, n, d}), dv({b, n, d});
        for (std::size_t bb = 0; bb < b; ++bb) {
            Eigen::Map<const MatrixRowMajor> qb(c.q.data.data() + bb * n * d, n, d);
            Eigen::Map<const MatrixRowMajor> kb(c.k.data.data() + bb * n * d, n, d);
            Eigen::Map<const MatrixRowMajor> vb(c.v.data.data() + bb * n * d, n, d);
            Eigen::Map<const MatrixRowMajor> dc(dctx.data.data() + bb * n * d, n, d);
            const Matrix& p = c.probs[bb];

            Matrix dp = dc * vb.transpose();
            Matrix dvb = p.transpose() * dc;
            Matrix ds(n, n);
            for (std::size_t r = 0; r < n; ++r) {
                const double dot = dp.row(r).dot(p.row(r));
                for (std::size_t cc = 0; cc < n; ++cc)
                    ds(r, cc) = p(r, cc) * (dp(r, cc) - dot);
            }
            ds *= scale;
            Eigen::Map<MatrixRowMajor>(dq.data.data() + bb * n * d, n, d) = ds * kb;
            Eigen::Map<MatrixRowMajor>(dk.data.data() + bb * n * d, n, d) =
                ds.transpose() * qb;
            Eigen::Map<MatrixRowMajor>(dv.data.data() + bb * n * d, n, d) = dvb;
            flop_counter().on_product(n, n, d);  // dp
            flop_counter().on_product(n, d, n);  // dv
            flop_counter().on_product(n, d, n);  // dq
            flop_counter().on_product(n, d, n);  // dk
        }
        Tensor dx = wq.backward(dq, g.dense[0], worker);
        Tensor dxk = wk.backward(dk, g.dense[1], worker);
        Tensor dxv = wv.backward(dv, g.dense[2], worker);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dxk.data[i] + dxv.data[i];
        return dx;
    }

    Tensor to_4d(const Tensor& t) const {
        return Tensor({t.extent(0), spec.height, spec.width, t.shape.back()}, t.data);
    }
    Tensor to_3d(const Tensor& t) const {
        return Tensor({t.extent(0), spec.tokens, t.shape.back()}, t.data);
    }

    Tensor forward_block(const Tensor& tokens, bool training, std::size_t worker,
                         StepCache& c) {
        c.x = tokens;
        Tensor attn_out = attention(tokens, training, worker, c);
        Tensor sum1 = tokens;
        for (std::size_t i = 0; i < sum1.size(); ++i) sum1.data[i] += attn_out.data[i];
        c.h = ln1.forward(sum1, training ? &c.ln1c : nullptr);

        Tensor mlp_in = is_4d() ? to_4d(c.h) : c.h;
        Tensor pre = layers[0].forward(mlp_in, training, worker);
        c.pre.assign(1, pre);
        Tensor hidden = relu(pre);
        Tensor mlp_out = layers[1].forward(hidden, training, worker);
        if (is_4d()) mlp_out = to_3d(mlp_out);

        Tensor sum2 = c.h;
        for (std::size_t i = 0; i < sum2.size(); ++i) sum2.data[i] += mlp_out.data[i];
        c.z = ln2.forward(sum2, training ? &c.ln2c : nullptr);

        Tensor pooled = mean_pool(c.z, c);
        return classifier.forward(pooled, training, worker);
    }

    Tensor backward_block(const Tensor& dlogits, std::size_t worker, Gradients& g,
                          StepCache& c, std::vector<Tensor>* dy_capture) {
        Tensor dpooled = classifier.backward(dlogits, g.dense[4], worker);
        Tensor dz = mean_pool_backward(dpooled, spec.tokens);
        Tensor dsum2 = ln2.backward(dz, c.ln2c, g.ln[2], g.ln[3]);

        Tensor dmlp_out = is_4d() ? to_4d(dsum2) : dsum2;
        if (dy_capture) (*dy_capture)[1] = dmlp_out;
        Tensor dhidden = layers[1].backward(dmlp_out, g.wasi[1], worker);
        Tensor dpre = relu_backward(dhidden, c.pre[0]);
        if (dy_capture) (*dy_capture)[0] = dpre;
        Tensor dmlp_in = layers[0].backward(dpre, g.wasi[0], worker);
        if (is_4d()) dmlp_in = to_3d(dmlp_in);

        Tensor dh = dsum2;  // residual branch
        for (std::size_t i = 0; i < dh.size(); ++i) dh.data[i] += dmlp_in.data[i];
        Tensor dsum1 = ln1.backward(dh, c.ln1c, g.ln[0], g.ln[1]);
        Tensor dattn = attention_backward(dsum1, worker, g, c);
        for (std::size_t i = 0; i < dsum1.size(); ++i) dsum1.data[i] += dattn.data[i];
        return dsum1;
    }
};

/// Softmax cross-entropy, mean over the batch. Returns the loss and fills
/// dlogits.
inline double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                                    Tensor& dlogits, double inv_total) {
    const std::size_t b = logits.extent(0), cdim = logits.extent(1);
    if (labels.size() != b) throw std::invalid_argument("labels do not match batch");
    dlogits = Tensor({b, cdim});
    double loss = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
        const double* z = logits.data.data() + s * cdim;
        const int y = labels[s];
        if (y < 0 || std::size_t(y) >= cdim)
            throw std::invalid_argument("label out of range");
        double mx = z[0];
        for (std::size_t j = 1; j < cdim; ++j) mx = std::max(mx, z[j]);
        double lse = 0.0;
        for (std::size_t j = 0; j < cdim; ++j) lse += std::exp(z[j] - mx);
        lse = mx + std::log(lse);
        loss += lse - z[y];
        for (std::size_t j = 0; j < cdim; ++j) {
            const double p = std::exp(z[j] - lse);
            dlogits(s, j) = (p - (int(j) == y ? 1.0 : 0.0)) * inv_total;
        }
    }
    return loss;
}

inline std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t b = logits.extent(0), cdim = logits.extent(1);
    std::size_t correct = 0;
    for (std::size_t s = 0; s < b; ++s) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < cdim; ++j)
            if (logits(s, j) > logits(s, arg)) arg = j;
        if (int(arg) == labels[s]) ++correct;
    }
    return correct;
}

inline std::vector<LayerScanContext> Model::collect_scan_contexts(
    const Tensor& x2d, const std::vector<int>& labels) {
    for (const WasiLinear& l : layers)
        if (l.weight_lowrank || l.act_compress)
            throw std::logic_error("scan requires a dense (uncompressed) model");
    Tensor logits = forward(x2d, true, 0);
    Tensor dlogits;
    softmax_cross_entropy(logits, labels, dlogits, 1.0 / double(x2d.extent(0)));
    Gradients g;
    std::vector<Tensor> dy;
    backward(dlogits, 0, g, &dy);
    std::vector<LayerScanContext> out;
    for (std::size_t l = 0; l < layers.size(); ++l)
        out.push_back({layers[l].workers[0].cached_input, dy[l]});
    return out;
}

/// Deterministic seeded construction with dense weights; compression is
/// applied afterwards by the harness once activation ranks are known.
inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Model m;
    m.spec = spec;
    std::mt19937_64 rng(seed);

    auto init = [&rng](std::size_t out, std::size_t in, double gain) {
        Matrix w = random_normal_matrix(out, in, rng);
        return Matrix(w * (gain / std::sqrt(double(in))));
    };

    if (spec.kind == "mlp") {
        std::size_t d = spec.features;
        for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
            WasiLinear lin;
            lin.in_dim = d;
            lin.out_dim = spec.hidden[l];
            lin.w_dense = init(lin.out_dim, lin.in_dim, std::sqrt(2.0));
            m.layers.push_back(std::move(lin));
            d = spec.hidden[l];
        }
        WasiLinear lin;
        lin.in_dim = d;
        lin.out_dim = spec.classes;
        lin.w_dense = init(lin.out_dim, lin.in_dim, 1.0);
        m.layers.push_back(std::move(lin));
    } else {
        const std::size_t d = spec.features;
        m.wq.w = init(d, d, 1.0);
        m.wk.w = init(d, d, 1.0);
        m.wv.w = init(d, d, 1.0);
        m.wo.w = init(d, d, 1.0);
        WasiLinear lin1;
        lin1.in_dim = d;
        lin1.out_dim = spec.hidden[0];
        lin1.w_dense = init(lin1.out_dim, d, std::sqrt(2.0));
        m.layers.push_back(std::move(lin1));
        WasiLinear lin2;
        lin2.in_dim = spec.hidden[0];
        lin2.out_dim = d;
        lin2.w_dense = init(d, spec.hidden[0], 1.0);
        m.layers.push_back(std::move(lin2));
        m.classifier.w = init(spec.classes, d, 1.0);
        m.ln1.gain = Vector::Ones(Eigen::Index(d));
        m.ln1.bias = Vector::Zero(Eigen::Index(d));
        m.ln2.gain = Vector::Ones(Eigen::Index(d));
        m.ln2.bias = Vector::Zero(Eigen::Index(d));
    }
    return m;
}

}  // namespace wasi
