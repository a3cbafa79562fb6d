#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "wasi/tensor.hpp"

namespace wasi {

/// Shape of one linear layer together with its compression ranks. spatial is
/// {N} for token activations or {H, W} for windowed ones; the activation
/// dimensions are {B, spatial..., I}.
struct LayerShape {
    std::size_t batch = 1;
    std::vector<std::size_t> spatial = {1};
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    std::size_t weight_rank = 1;
    std::vector<std::size_t> act_ranks = {1, 1, 1};

    std::size_t tokens() const {
        std::size_t n = 1;
        for (std::size_t s : spatial) n *= s;
        return n;
    }
    std::vector<std::size_t> act_dims() const {
        std::vector<std::size_t> d;
        d.push_back(batch);
        d.insert(d.end(), spatial.begin(), spatial.end());
        d.push_back(in_dim);
        return d;
    }
    void validate() const {
        if (batch == 0 || in_dim == 0 || out_dim == 0 || weight_rank == 0)
            throw std::invalid_argument("layer shape: extents must be >= 1");
        if (weight_rank > std::min(in_dim, out_dim))
            throw std::invalid_argument("layer shape: weight rank exceeds min(I, O)");
        const auto dims = act_dims();
        if (act_ranks.size() != dims.size())
            throw std::invalid_argument("layer shape: activation rank arity mismatch");
        std::size_t total = 1;
        for (std::size_t d : dims) total *= d;
        for (std::size_t m = 0; m < dims.size(); ++m)
            if (act_ranks[m] == 0 || act_ranks[m] > std::min(dims[m], total / dims[m]))
                throw std::invalid_argument("layer shape: activation rank out of bounds");
    }
};

struct CostReport {
    std::uint64_t f_vanilla = 0;
    std::uint64_t b_vanilla = 0;
    std::uint64_t f_wasi = 0;
    std::uint64_t o_wsi = 0;
    std::uint64_t o_asi = 0;
    std::uint64_t b_wasi = 0;
    std::uint64_t m_w_vanilla = 0;
    std::uint64_t m_a_vanilla = 0;
    std::uint64_t m_w_wasi = 0;
    std::uint64_t m_a_wasi = 0;
    double c_training = 0.0;
    double c_inference = 0.0;
    double s_training = 0.0;
    double s_inference = 0.0;
};

/// (forward, backward) FLOPs of the dense layer: 2BNIO and 4BNIO.
inline std::pair<std::uint64_t, std::uint64_t> flops_vanilla(const LayerShape& s) {
    s.validate();
    const std::uint64_t base =
        static_cast<std::uint64_t>(s.batch) * s.tokens() * s.in_dim * s.out_dim;
    return {2 * base, 4 * base};
}

struct WasiFlops {
    std::uint64_t f_wasi = 0;
    std::uint64_t o_wsi = 0;
    std::uint64_t o_asi = 0;
    std::uint64_t b_wasi = 0;
};

inline WasiFlops flops_wasi(const LayerShape& s) {
    s.validate();
    const std::uint64_t b = s.batch, n = s.tokens(), i = s.in_dim, o = s.out_dim,
                        k = s.weight_rank;
    WasiFlops f;
    f.f_wasi = 2 * b * n * k * (i + o);
    f.o_wsi = 4 * i * o * k + 2 * o * k * k;

    const auto dims = s.act_dims();
    std::uint64_t total = 1;
    for (std::size_t d : dims) total *= d;
    for (std::size_t m = 0; m < dims.size(); ++m) {
        const std::uint64_t d = dims[m];
        const std::uint64_t dprime = total / d;  // product of the remaining extents
        const std::uint64_t r = s.act_ranks[m];
        f.o_asi += 4 * d * dprime * r + 2 * d * r * r;
    }

    // input-gradient product plus the staged weight-gradient contractions
    f.b_wasi = 2 * b * n * k * (i + o);
    if (dims.size() == 3) {
        const std::uint64_t r1 = s.act_ranks[0], r2 = s.act_ranks[1], r3 = s.act_ranks[2];
        f.b_wasi += b * n * o * r1;
        f.b_wasi += r1 * r2 * r3 * n;
        f.b_wasi += r1 * r3 * i * n;
        f.b_wasi += r1 * i * o * n;
    } else {
        const std::uint64_t h = s.spatial[0], w = s.spatial[1];
        const std::uint64_t r1 = s.act_ranks[0], r2 = s.act_ranks[1], r3 = s.act_ranks[2],
                            r4 = s.act_ranks[3];
        f.b_wasi += b * h * w * o * r1;
        f.b_wasi += r1 * r2 * r3 * r4 * h;
        f.b_wasi += r1 * h * w * r3 * o;
        f.b_wasi += r1 * h * r3 * r4 * i;
        f.b_wasi += h * r1 * r3 * o * i;
    }
    return f;
}

struct MemoryCounts {
    std::uint64_t m_w_vanilla = 0;
    std::uint64_t m_a_vanilla = 0;
    std::uint64_t m_w_wasi = 0;
    std::uint64_t m_a_wasi = 0;
};

inline MemoryCounts memory_counts(const LayerShape& s) {
    s.validate();
    MemoryCounts m;
    m.m_w_vanilla = static_cast<std::uint64_t>(s.in_dim) * s.out_dim;
    m.m_a_vanilla = static_cast<std::uint64_t>(s.batch) * s.tokens() * s.in_dim;
    m.m_w_wasi = static_cast<std::uint64_t>(s.weight_rank) * (s.in_dim + s.out_dim);
    const auto dims = s.act_dims();
    std::uint64_t core = 1, factors = 0;
    for (std::size_t mm = 0; mm < dims.size(); ++mm) {
        core *= s.act_ranks[mm];
        factors += dims[mm] * s.act_ranks[mm];
    }
    m.m_a_wasi = core + factors;
    return m;
}

inline void compute_ratios(CostReport& r) {
    const std::uint64_t mem_den = r.m_w_wasi + r.m_a_wasi;
    const std::uint64_t flop_den = r.f_wasi + r.o_wsi + r.o_asi + r.b_wasi;
    if (r.m_w_wasi == 0 || mem_den == 0 || r.f_wasi == 0 || flop_den == 0)
        throw std::invalid_argument("ratios: zero denominator");
    r.c_training = double(r.m_w_vanilla + r.m_a_vanilla) / double(mem_den);
    r.c_inference = double(r.m_w_vanilla) / double(r.m_w_wasi);
    r.s_training = double(r.f_vanilla + r.b_vanilla) / double(flop_den);
    r.s_inference = double(r.f_vanilla) / double(r.f_wasi);
}

inline CostReport evaluate_cost(const LayerShape& s) {
    CostReport r;
    auto [fv, bv] = flops_vanilla(s);
    r.f_vanilla = fv;
    r.b_vanilla = bv;
    WasiFlops w = flops_wasi(s);
    r.f_wasi = w.f_wasi;
    r.o_wsi = w.o_wsi;
    r.o_asi = w.o_asi;
    r.b_wasi = w.b_wasi;
    MemoryCounts m = memory_counts(s);
    r.m_w_vanilla = m.m_w_vanilla;
    r.m_a_vanilla = m.m_a_vanilla;
    r.m_w_wasi = m.m_w_wasi;
    r.m_a_wasi = m.m_a_wasi;
    compute_ratios(r);
    return r;
}

inline std::vector<std::pair<LayerShape, CostReport>> sweep(const std::vector<LayerShape>& grid) {
    if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
    std::vector<std::pair<LayerShape, CostReport>> out;
    out.reserve(grid.size());
    for (const LayerShape& s : grid) out.emplace_back(s, evaluate_cost(s));
    return out;
}

/// CSV schema used by the cost subcommand: one row per grid point, header
/// mandatory, ratios with 6 significant digits.
inline void write_cost_csv(std::ostream& os,
                           const std::vector<std::pair<LayerShape, CostReport>>& rows) {
    os << "B,N,H,W,I,O,K,r1,r2,r3,r4,"
          "f_vanilla,b_vanilla,f_wasi,o_wsi,o_asi,b_wasi,"
          "m_w_vanilla,m_a_vanilla,m_w_wasi,m_a_wasi,"
          "c_training,c_inference,s_training,s_inference\n";
    char buf[64];
    for (const auto& [s, r] : rows) {
        const bool four = s.spatial.size() == 2;
        os << s.batch << ',' << s.tokens() << ',' << (four ? s.spatial[0] : 0) << ','
           << (four ? s.spatial[1] : 0) << ',' << s.in_dim << ',' << s.out_dim << ','
           << s.weight_rank;
        for (std::size_t m = 0; m < 4; ++m)
            os << ',' << (m < s.act_ranks.size() ? s.act_ranks[m] : 0);
        os << ',' << r.f_vanilla << ',' << r.b_vanilla << ',' << r.f_wasi << ',' << r.o_wsi
           << ',' << r.o_asi << ',' << r.b_wasi << ',' << r.m_w_vanilla << ','
           << r.m_a_vanilla << ',' << r.m_w_wasi << ',' << r.m_a_wasi;
        for (double v : {r.c_training, r.c_inference, r.s_training, r.s_inference}) {
            std::snprintf(buf, sizeof(buf), "%.6g", v);
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace wasi
