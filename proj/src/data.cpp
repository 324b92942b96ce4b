#include "hypergt/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hypergt/rng.hpp"

namespace hypergt {

namespace {
constexpr uint64_t kSplitSalt = 0x73706c6974ULL;

[[noreturn]] void loc_error(const std::filesystem::path& path, int line_no,
                            const std::string& what) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
}
}  // namespace

Dataset generate_planted(const PlantedConfig& cfg, uint64_t seed) {
    if (cfg.classes < 2 || cfg.n < cfg.classes)
        throw std::invalid_argument("generate_planted: need n >= classes >= 2");
    if (cfg.m < 1) throw std::invalid_argument("generate_planted: need m >= 1");
    if (cfg.d_in < 1) throw std::invalid_argument("generate_planted: need d_in >= 1");

    // Contiguous, equal-size (within rounding) community blocks.
    std::vector<int> labels(static_cast<size_t>(cfg.n));
    std::vector<std::vector<int>> communities(static_cast<size_t>(cfg.classes));
    for (int v = 0; v < cfg.n; ++v) {
        const int k = static_cast<int>((static_cast<int64_t>(v) * cfg.classes) / cfg.n);
        labels[static_cast<size_t>(v)] = k;
        communities[static_cast<size_t>(k)].push_back(v);
    }
    for (int k = 0; k < cfg.classes; ++k)
        if (communities[static_cast<size_t>(k)].size() < 2)
            throw std::invalid_argument("generate_planted: community " + std::to_string(k) +
                                        " has fewer than 2 nodes");

    Rng rng(seed);

    Matrix class_means(cfg.classes, cfg.d_in);
    for (int k = 0; k < cfg.classes; ++k)
        for (int j = 0; j < cfg.d_in; ++j) class_means(k, j) = rng.normal();

    Hypergraph hg(cfg.n, cfg.m);
    std::vector<int> pool;
    for (int e = 0; e < cfg.m; ++e) {
        const int home = rng.uniform_int(cfg.classes);
        const auto& comm = communities[static_cast<size_t>(home)];
        const int max_size = std::min<int>(6, static_cast<int>(comm.size()));
        const int k = 2 + rng.uniform_int(max_size - 1);  // size in [2, max_size]
        pool = comm;
        for (int i = 0; i < k; ++i) {
            const int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
            std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
        }
        for (int i = 0; i < k; ++i) {
            int member = pool[static_cast<size_t>(i)];
            if (rng.bernoulli(cfg.p_inter)) member = rng.uniform_int(cfg.n);
            hg.incidence(member, e) = 1.0;
        }
    }

    Matrix x_v(cfg.n, cfg.d_in);
    for (int v = 0; v < cfg.n; ++v) {
        const int y = labels[static_cast<size_t>(v)];
        for (int j = 0; j < cfg.d_in; ++j)
            x_v(v, j) = cfg.mean_scale * class_means(y, j) + cfg.feature_std * rng.normal();
    }

    Dataset d;
    d.hg = std::move(hg);
    d.x_v = std::move(x_v);
    d.labels = std::move(labels);
    d.classes = cfg.classes;
    return d;
}

SplitSpec make_splits(int n, uint64_t seed) {
    if (n < 4) throw std::invalid_argument("make_splits: need n >= 4");
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed ^ kSplitSalt);
    rng.shuffle(perm);

    const int n_train = n / 2;
    const int n_val = n / 4;
    SplitSpec s;
    s.seed = seed;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    s.test.assign(perm.begin() + n_train + n_val, perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Matrix load_features_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open features file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            while (used < cell.size() && (cell[used] == ' ' || cell[used] == '\r')) ++used;
            if (used != cell.size())
                loc_error(path, line_no,
                          "non-numeric cell '" + cell + "' in column " + std::to_string(col));
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
            loc_error(path, line_no, "row has " + std::to_string(row.size()) + " cells, expected " +
                                         std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path.string() + ": no feature rows");
    Matrix out(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            out(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return out;
}

std::vector<int> load_labels_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open labels file: " + path.string());
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        const size_t b = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(a, b - a + 1);
        size_t used = 0;
        long v = 0;
        try {
            v = std::stol(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) loc_error(path, line_no, "non-integer label '" + tok + "'");
        labels.push_back(static_cast<int>(v));
    }
    if (labels.empty()) throw std::runtime_error(path.string() + ": no labels");
    return labels;
}

void save_features_csv(const Matrix& features, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write features file: " + path.string());
    char buf[64];
    for (int i = 0; i < features.rows(); ++i) {
        for (int j = 0; j < features.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", features(i, j));
            if (j) f << ",";
            f << buf;
        }
        f << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write labels file: " + path.string());
    for (int v : labels) f << v << "\n";
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& hypergraph_path,
                     const std::filesystem::path& features_csv,
                     const std::filesystem::path& labels_csv, int expected_classes) {
    Dataset d;
    d.hg = load_hypergraph(hypergraph_path);
    d.x_v = load_features_csv(features_csv);
    d.labels = load_labels_csv(labels_csv);

    if (d.x_v.rows() != d.hg.n)
        throw std::runtime_error(features_csv.string() + ": " + std::to_string(d.x_v.rows()) +
                                 " feature rows for n=" + std::to_string(d.hg.n) + " nodes");
    if (static_cast<int>(d.labels.size()) != d.hg.n)
        throw std::runtime_error(labels_csv.string() + ": " + std::to_string(d.labels.size()) +
                                 " labels for n=" + std::to_string(d.hg.n) + " nodes");

    int max_label = 0;
    for (size_t i = 0; i < d.labels.size(); ++i) {
        const int v = d.labels[i];
        if (v < 0)
            throw std::runtime_error(labels_csv.string() + ": negative label at row " +
                                     std::to_string(i + 1));
        max_label = std::max(max_label, v);
    }
    d.classes = expected_classes > 0 ? expected_classes : max_label + 1;
    if (max_label >= d.classes)
        throw std::runtime_error(labels_csv.string() + ": label " + std::to_string(max_label) +
                                 " out of range for " + std::to_string(d.classes) + " classes");
    if (d.classes < 2) d.classes = 2;
    return d;
}

}  // namespace hypergt
