#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wasi/tensor.hpp"

namespace wasi {

struct Dataset {
    Tensor features;  // (samples, dim)
    std::vector<int> labels;
    std::size_t classes = 0;

    std::size_t samples() const { return features.extent(0); }
    std::size_t dim() const { return features.extent(1); }
};

struct SplitDataset {
    Dataset train;
    Dataset val;
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> parse_kv_list(const std::string& s) {
    std::vector<std::pair<std::string, std::string>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("synthetic spec: expected key=value, got '" + item + "'");
        out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
    return out;
}

inline std::uint32_t read_be32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Seeded Gaussian clusters. Spec keys: classes, dim, samples, sep (cluster
/// separation, default 4), noise (default 1), tile (repeat the mean pattern
/// every `tile` features, so token slices of that width share the class
/// signal; 0 = no tiling).
inline Dataset generate_synthetic(const std::string& spec, std::uint64_t seed) {
    std::size_t classes = 2, dim = 16, samples = 256, tile = 0;
    double sep = 4.0, noise = 1.0;
    for (const auto& [k, v] : detail::parse_kv_list(spec)) {
        if (k == "classes") classes = std::stoul(v);
        else if (k == "dim") dim = std::stoul(v);
        else if (k == "samples") samples = std::stoul(v);
        else if (k == "sep") sep = std::stod(v);
        else if (k == "noise") noise = std::stod(v);
        else if (k == "tile") tile = std::stoul(v);
        else throw std::invalid_argument("synthetic spec: unknown key '" + k + "'");
    }
    if (classes < 2 || dim == 0 || samples < classes)
        throw std::invalid_argument("synthetic spec: degenerate sizes");
    if (tile != 0 && dim % tile != 0)
        throw std::invalid_argument("synthetic spec: tile must divide dim");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);

    std::vector<Vector> means;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t base_dim = tile == 0 ? dim : tile;
        Vector base(base_dim);
        for (std::size_t d = 0; d < base_dim; ++d)
            base(static_cast<Eigen::Index>(d)) = dist(rng);
        base *= sep / base.norm();
        Vector m(dim);
        for (std::size_t d = 0; d < dim; ++d)
            m(static_cast<Eigen::Index>(d)) = base(static_cast<Eigen::Index>(d % base_dim));
        means.push_back(m);
    }

    Dataset ds;
    ds.classes = classes;
    ds.features = Tensor({samples, dim});
    ds.labels.resize(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t c = s % classes;
        ds.labels[s] = static_cast<int>(c);
        for (std::size_t d = 0; d < dim; ++d)
            ds.features(s, d) = means[c](static_cast<Eigen::Index>(d)) + noise * dist(rng);
    }
    return ds;
}

/// CSV rows "label,f1,f2,...". Malformed rows raise with the 1-based line number.
inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool first = true;
        int label = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                if (first) {
                    label = static_cast<int>(v);
                    if (v != double(label) || label < 0)
                        throw std::invalid_argument(cell);
                    first = false;
                } else {
                    row.push_back(v);
                }
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": malformed value '" + cell + "'");
            }
        }
        if (first || row.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty row");
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(rows.front().size() + 1) +
                                     " columns, got " + std::to_string(row.size() + 1));
        rows.push_back(std::move(row));
        labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    if (rows.empty()) throw std::runtime_error(path + ": no data rows");

    Dataset ds;
    ds.classes = static_cast<std::size_t>(max_label) + 1;
    ds.labels = std::move(labels);
    ds.features = Tensor({rows.size(), rows.front().size()});
    for (std::size_t s = 0; s < rows.size(); ++s)
        for (std::size_t d = 0; d < rows.front().size(); ++d) ds.features(s, d) = rows[s][d];
    return ds;
}

/// IDX image/label file pair (big-endian headers, bytes scaled to [0, 1]).
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open dataset file: " + images_path);
    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw std::runtime_error("cannot open dataset file: " + labels_path);

    if (detail::read_be32(img) != 0x00000803u)
        throw std::runtime_error(images_path + ": bad IDX image magic");
    const std::uint32_t n = detail::read_be32(img);
    const std::uint32_t h = detail::read_be32(img);
    const std::uint32_t w = detail::read_be32(img);
    if (detail::read_be32(lbl) != 0x00000801u)
        throw std::runtime_error(labels_path + ": bad IDX label magic");
    if (detail::read_be32(lbl) != n)
        throw std::runtime_error(labels_path + ": label count differs from image count");

    Dataset ds;
    ds.features = Tensor({n, std::size_t(h) * w});
    ds.labels.resize(n);
    std::vector<unsigned char> buf(std::size_t(h) * w);
    int max_label = 0;
    for (std::uint32_t s = 0; s < n; ++s) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) throw std::runtime_error(images_path + ": truncated image data");
        for (std::size_t d = 0; d < buf.size(); ++d)
            ds.features(std::size_t(s), d) = double(buf[d]) / 255.0;
        unsigned char l = 0;
        lbl.read(reinterpret_cast<char*>(&l), 1);
        if (!lbl) throw std::runtime_error(labels_path + ": truncated label data");
        ds.labels[s] = int(l);
        max_label = std::max(max_label, int(l));
    }
    ds.classes = static_cast<std::size_t>(max_label) + 1;
    return ds;
}

/// Feature standardization (zero mean, unit variance per column; constant
/// columns are left centered).
inline void standardize(Dataset& ds) {
    const std::size_t n = ds.samples(), d = ds.dim();
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t s = 0; s < n; ++s) mean += ds.features(s, j);
        mean /= double(n);
        double var = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double c = ds.features(s, j) - mean;
            var += c * c;
        }
        var /= double(n);
        const double scale = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
        for (std::size_t s = 0; s < n; ++s)
            ds.features(s, j) = (ds.features(s, j) - mean) * scale;
    }
}

/// Loads "synthetic:<spec>", a CSV path, or an IDX pair "<images>,<labels>".
/// Features are standardized; the seeded shuffle fixes the 80/20 split.
inline SplitDataset load_dataset(const std::string& source, std::uint64_t seed) {
    Dataset full;
    if (source.rfind("synthetic:", 0) == 0) {
        full = generate_synthetic(source.substr(10), seed);
    } else if (source.find(',') != std::string::npos) {
        const auto comma = source.find(',');
        full = load_idx(source.substr(0, comma), source.substr(comma + 1));
    } else {
        full = load_csv(source);
    }
    standardize(full);
    if (full.samples() < 5)
        throw std::runtime_error("dataset too small for an 80/20 split");

    std::vector<std::size_t> order(full.samples());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed ^ 0x51b7155eULL);
    std::shuffle(order.begin(), order.end(), rng);

    const std::size_t train_n = (full.samples() * 8) / 10;
    SplitDataset split;
    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset part;
        part.classes = full.classes;
        part.features = Tensor({end - begin, full.dim()});
        part.labels.resize(end - begin);
        for (std::size_t s = begin; s < end; ++s) {
            const std::size_t src = order[s];
            part.labels[s - begin] = full.labels[src];
            for (std::size_t d = 0; d < full.dim(); ++d)
                part.features(s - begin, d) = full.features(src, d);
        }
        return part;
    };
    split.train = take(0, train_n);
    split.val = take(train_n, full.samples());
    return split;
}

}  // namespace wasi
