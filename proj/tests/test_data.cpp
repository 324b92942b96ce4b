#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "hypergt/data.hpp"
#include "hypergt/rng.hpp"

using namespace hypergt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    const auto dir = fs::temp_directory_path() / "hypergt_test";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

PlantedConfig small_config() {
    PlantedConfig cfg;
    cfg.n = 60;
    cfg.m = 40;
    cfg.classes = 3;
    cfg.d_in = 7;
    cfg.mean_scale = 1.0;
    cfg.feature_std = 1.0;
    cfg.p_inter = 0.1;
    return cfg;
}

}  // namespace

TEST_CASE("planted generator basic shape and validity") {
    const Dataset d = generate_planted(small_config(), 0);
    CHECK(d.hg.n == 60);
    CHECK(d.hg.m == 40);
    CHECK(d.x_v.rows() == 60);
    CHECK(d.x_v.cols() == 7);
    CHECK(d.labels.size() == 60);
    CHECK(d.classes == 3);
    CHECK_FALSE(d.x_e.has_value());
    CHECK(validate(d.hg).empty());

    // Hyperedge sizes always land in [1, 6]; at least 2 before rerouting.
    for (int e = 0; e < d.hg.m; ++e) {
        const int s = d.hg.hyperedge_size(e);
        CHECK(s >= 1);
        CHECK(s <= 6);
    }

    // Labels form equal-size contiguous communities.
    int counts[3] = {0, 0, 0};
    for (int v = 0; v < 60; ++v) ++counts[d.labels[static_cast<size_t>(v)]];
    CHECK(counts[0] == 20);
    CHECK(counts[1] == 20);
    CHECK(counts[2] == 20);
}

TEST_CASE("p_inter zero keeps every hyperedge inside one community") {
    PlantedConfig cfg = small_config();
    cfg.p_inter = 0.0;
    const Dataset d = generate_planted(cfg, 3);
    for (int e = 0; e < d.hg.m; ++e) {
        const auto members = d.hg.hyperedge_members(e);
        REQUIRE_FALSE(members.empty());
        const int label = d.labels[static_cast<size_t>(members[0])];
        for (int v : members) CHECK(d.labels[static_cast<size_t>(v)] == label);
        CHECK(members.size() >= 2);  // no rerouting, no collapse below 2
    }
}

TEST_CASE("planted generator is bit-reproducible per seed") {
    const PlantedConfig cfg = small_config();
    const Dataset a = generate_planted(cfg, 17);
    const Dataset b = generate_planted(cfg, 17);
    CHECK(max_abs_diff(a.hg.incidence, b.hg.incidence) == 0.0);
    CHECK(max_abs_diff(a.x_v, b.x_v) == 0.0);
    CHECK(a.labels == b.labels);

    const Dataset c = generate_planted(cfg, 18);
    CHECK(max_abs_diff(a.x_v, c.x_v) > 0.0);
}

TEST_CASE("mean_scale zero leaves pure noise features") {
    PlantedConfig cfg = small_config();
    cfg.mean_scale = 0.0;
    const Dataset a = generate_planted(cfg, 5);
    cfg.mean_scale = 10.0;
    const Dataset b = generate_planted(cfg, 5);
    // Labels and structure are untouched by the scale.
    CHECK(a.labels == b.labels);
    CHECK(max_abs_diff(a.hg.incidence, b.hg.incidence) == 0.0);
    // At scale 0 the class means drop out: per-class feature means stay near 0.
    for (int k = 0; k < cfg.classes; ++k) {
        double mean = 0.0;
        int count = 0;
        for (int v = 0; v < cfg.n; ++v) {
            if (a.labels[static_cast<size_t>(v)] != k) continue;
            for (int j = 0; j < cfg.d_in; ++j) mean += a.x_v(v, j);
            count += cfg.d_in;
        }
        CHECK(std::abs(mean / count) < 0.3);
    }
}

TEST_CASE("generator rejects undersized communities") {
    PlantedConfig cfg = small_config();
    cfg.n = 3;
    cfg.classes = 2;  // communities of size 2 and 1
    CHECK_THROWS_AS(generate_planted(cfg, 0), std::invalid_argument);
    cfg.n = 1;
    CHECK_THROWS_AS(generate_planted(cfg, 0), std::invalid_argument);
}

TEST_CASE("splits have the stated sizes") {
    const SplitSpec s8 = make_splits(8, 0);
    CHECK(s8.train.size() == 4);
    CHECK(s8.val.size() == 2);
    CHECK(s8.test.size() == 2);

    const SplitSpec s10 = make_splits(10, 0);
    CHECK(s10.train.size() == 5);
    CHECK(s10.val.size() == 2);
    CHECK(s10.test.size() == 3);

    CHECK_THROWS_AS(make_splits(3, 0), std::invalid_argument);
}

TEST_CASE("splits are deterministic, disjoint and cover all nodes") {
    for (uint64_t seed = 0; seed < 100; ++seed) {
        const SplitSpec a = make_splits(53, seed);
        const SplitSpec b = make_splits(53, seed);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);

        std::set<int> seen;
        for (int v : a.train) seen.insert(v);
        for (int v : a.val) seen.insert(v);
        for (int v : a.test) seen.insert(v);
        CHECK(seen.size() == 53);
        CHECK(a.train.size() + a.val.size() + a.test.size() == 53);
        CHECK(*seen.begin() == 0);
        CHECK(*seen.rbegin() == 52);
    }
    // Different seeds give different shuffles (with overwhelming probability).
    CHECK(make_splits(53, 1).train != make_splits(53, 2).train);
}

TEST_CASE("feature csv round trip") {
    Rng rng(61);
    Matrix f(5, 3);
    for (int64_t i = 0; i < f.size(); ++i) f.data()[i] = rng.normal() * 1e3;
    const auto p = temp_file("features.csv");
    save_features_csv(f, p);
    const Matrix back = load_features_csv(p);
    CHECK(max_abs_diff(back, f) == 0.0);
}

TEST_CASE("label csv round trip") {
    const std::vector<int> labels{0, 1, 2, 1, 0, 3};
    const auto p = temp_file("labels.csv");
    save_labels_csv(labels, p);
    CHECK(load_labels_csv(p) == labels);
}

TEST_CASE("csv loader errors carry locations") {
    const auto p = temp_file("bad_features.csv");
    write_file(p, "1.0,2.0\n3.0,oops\n");
    CHECK_THROWS_WITH_AS(load_features_csv(p), doctest::Contains(":2:"), std::runtime_error);

    const auto q = temp_file("ragged.csv");
    write_file(q, "1.0,2.0\n3.0\n");
    CHECK_THROWS_AS(load_features_csv(q), std::runtime_error);

    const auto r = temp_file("bad_labels.csv");
    write_file(r, "0\nx\n");
    CHECK_THROWS_WITH_AS(load_labels_csv(r), doctest::Contains(":2:"), std::runtime_error);
}

TEST_CASE("load_dataset assembles the worked example") {
    const auto hgr = temp_file("ds.hgr");
    const auto feats = temp_file("ds_features.csv");
    const auto labels = temp_file("ds_labels.csv");
    write_file(hgr, "2 3\n1 2\n2 3\n");
    write_file(feats, "1.0,0.5\n-1.0,0.25\n0.0,2.0\n");
    write_file(labels, "0\n1\n0\n");

    const Dataset d = load_dataset(hgr, feats, labels);
    CHECK(d.hg.n == 3);
    CHECK(d.hg.m == 2);
    CHECK(d.classes == 2);
    CHECK_FALSE(d.x_e.has_value());
    CHECK(d.x_v(2, 1) == 2.0);
}

TEST_CASE("load_dataset rejects inconsistent files") {
    const auto hgr = temp_file("ds2.hgr");
    write_file(hgr, "1 3\n1 2\n");

    const auto too_many = temp_file("ds2_features.csv");
    write_file(too_many, "1\n2\n3\n4\n");
    const auto labels = temp_file("ds2_labels.csv");
    write_file(labels, "0\n1\n0\n");
    CHECK_THROWS_AS(load_dataset(hgr, too_many, labels), std::runtime_error);

    const auto feats = temp_file("ds3_features.csv");
    write_file(feats, "1\n2\n3\n");
    const auto out_of_range = temp_file("ds3_labels.csv");
    write_file(out_of_range, "0\n7\n1\n");
    CHECK_THROWS_AS(load_dataset(hgr, feats, out_of_range, 2), std::runtime_error);
}
