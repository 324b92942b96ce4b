#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hypergt/hypergraph.hpp"
#include "hypergt/matrix.hpp"

namespace hypergt {

struct Dataset {
    Hypergraph hg;
    Matrix x_v;                  // n x d_in node features
    std::optional<Matrix> x_e;   // optional m x d_in hyperedge features
    std::vector<int> labels;     // length n, values in [0, classes)
    int classes = 0;
};

struct SplitSpec {
    std::vector<int> train, val, test;
    uint64_t seed = 0;
};

struct PlantedConfig {
    int n = 300;
    int m = 320;
    int classes = 2;
    int d_in = 100;
    double mean_scale = 1.0;
    double feature_std = 1.0;
    double p_inter = 0.0;
};

// Planted-community hypergraph with label-dependent Gaussian features:
// nodes are split into equal-size communities (the labels); each hyperedge
// picks a home community and samples 2..6 members from it, each member
// independently rerouted to a uniform random node with probability p_inter;
// features are mean_scale * mu_label + N(0, feature_std^2) with class means
// mu_k ~ N(0, I) drawn once. Bit-reproducible for a fixed seed.
Dataset generate_planted(const PlantedConfig& cfg, uint64_t seed);

// Random 50/25/25 split: train = floor(n/2), val = floor(n/4), test = rest.
SplitSpec make_splits(int n, uint64_t seed);

// CSV loaders; every error message carries a file location.
Matrix load_features_csv(const std::filesystem::path& path);
std::vector<int> load_labels_csv(const std::filesystem::path& path);
void save_features_csv(const Matrix& features, const std::filesystem::path& path);
void save_labels_csv(const std::vector<int>& labels, const std::filesystem::path& path);

// Assembles a Dataset from the three on-disk pieces. X_E stays absent (the
// model derives hyperedge features). expected_classes = 0 infers the class
// count as max label + 1; otherwise out-of-range labels are an error.
Dataset load_dataset(const std::filesystem::path& hypergraph_path,
                     const std::filesystem::path& features_csv,
                     const std::filesystem::path& labels_csv, int expected_classes = 0);

}  // namespace hypergt
