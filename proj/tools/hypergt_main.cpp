#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hypergt/data.hpp"
#include "hypergt/training.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace hypergt;

namespace {

// Seed list syntax: "7", "0,3,9" or "0..9" (inclusive range).
std::vector<uint64_t> parse_seeds(const std::string& spec) {
    std::vector<uint64_t> seeds;
    const auto parse_one = [](const std::string& tok) -> uint64_t {
        size_t used = 0;
        const unsigned long long v = std::stoull(tok, &used);
        if (used != tok.size()) throw std::invalid_argument("bad seed token '" + tok + "'");
        return v;
    };
    const auto range_pos = spec.find("..");
    if (range_pos != std::string::npos) {
        const uint64_t lo = parse_one(spec.substr(0, range_pos));
        const uint64_t hi = parse_one(spec.substr(range_pos + 2));
        if (hi < lo) throw std::invalid_argument("seed range is empty: " + spec);
        for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(parse_one(tok));
    if (seeds.empty()) throw std::invalid_argument("no seeds in '" + spec + "'");
    return seeds;
}

struct DataSource {
    // Either a synthetic generator config or three file paths.
    bool synthetic = false;
    PlantedConfig planted;
    uint64_t base_seed = 0;
    std::string hypergraph_path, features_path, labels_path;
    int classes_override = 0;

    void use_data_dir(const std::string& dir_str) {
        const fs::path dir = dir_str;
        hypergraph_path = (dir / "hypergraph.hgr").string();
        features_path = (dir / "features.csv").string();
        labels_path = (dir / "labels.csv").string();
        const fs::path manifest = dir / "manifest.json";
        if (fs::exists(manifest)) {
            std::ifstream f(manifest);
            ordered_json j;
            f >> j;
            if (j.contains("generator") && j["generator"].contains("classes"))
                classes_override = j["generator"]["classes"].get<int>();
        }
    }

    std::function<Dataset(uint64_t)> loader() const {
        if (synthetic) {
            PlantedConfig cfg = planted;
            return [cfg](uint64_t seed) { return generate_planted(cfg, seed); };
        }
        // Load once; splits still vary per seed.
        auto data = std::make_shared<Dataset>(
            load_dataset(hypergraph_path, features_path, labels_path, classes_override));
        return [data](uint64_t) { return *data; };
    }

    ordered_json describe() const {
        ordered_json j;
        if (synthetic) {
            j["source"] = "synthetic";
            j["n"] = planted.n;
            j["m"] = planted.m;
            j["classes"] = planted.classes;
            j["d_in"] = planted.d_in;
            j["mean_scale"] = planted.mean_scale;
            j["feature_std"] = planted.feature_std;
            j["p_inter"] = planted.p_inter;
        } else {
            j["source"] = "files";
            j["hypergraph"] = hypergraph_path;
            j["features"] = features_path;
            j["labels"] = labels_path;
        }
        return j;
    }
};

struct CliOptions {
    TrainConfig train;
    DataSource data;
    std::string seeds_spec = "0";
    std::string out_path;
    std::string config_path;
    bool stable_json = false;
};

std::string trimmed(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& value) {
    size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size())
        throw CLI::ValidationError("--config", "bad number '" + value + "' for key " + key);
    return v;
}

int to_int(const std::string& key, const std::string& value) {
    size_t used = 0;
    long v = 0;
    try {
        v = std::stol(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size())
        throw CLI::ValidationError("--config", "bad integer '" + value + "' for key " + key);
    return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw CLI::ValidationError("--config", "bad boolean '" + value + "' for key " + key);
}

// Keys mirror the long option names. Returns false for unknown keys.
bool apply_config_key(const std::string& key, const std::string& value, CliOptions& opt) {
    TrainConfig& t = opt.train;
    DataSource& d = opt.data;
    if (key == "lr") t.lr = to_double(key, value);
    else if (key == "weight-decay") t.weight_decay = to_double(key, value);
    else if (key == "epochs") t.epochs = to_int(key, value);
    else if (key == "patience") t.patience = to_int(key, value);
    else if (key == "lambda") t.lambda = to_double(key, value);
    else if (key == "d") t.model.d = to_int(key, value);
    else if (key == "layers") t.model.layers = to_int(key, value);
    else if (key == "heads") t.model.heads = to_int(key, value);
    else if (key == "ffn-hidden") t.model.ffn_hidden = to_int(key, value);
    else if (key == "dropout") t.model.dropout_rate = to_double(key, value);
    else if (key == "node-pe") t.model.use_node_pe = to_bool(key, value);
    else if (key == "edge-pe") t.model.use_edge_pe = to_bool(key, value);
    else if (key == "seeds") opt.seeds_spec = value;
    else if (key == "synthetic") d.synthetic = to_bool(key, value);
    else if (key == "n") d.planted.n = to_int(key, value);
    else if (key == "m") d.planted.m = to_int(key, value);
    else if (key == "c") d.planted.classes = to_int(key, value);
    else if (key == "d-in") d.planted.d_in = to_int(key, value);
    else if (key == "mean-scale") d.planted.mean_scale = to_double(key, value);
    else if (key == "feature-std") d.planted.feature_std = to_double(key, value);
    else if (key == "p-inter") d.planted.p_inter = to_double(key, value);
    else if (key == "hypergraph") d.hypergraph_path = value;
    else if (key == "features") d.features_path = value;
    else if (key == "labels") d.labels_path = value;
    else if (key == "data-dir") d.use_data_dir(value);
    else if (key == "out" || key == "json-out") opt.out_path = value;
    else if (key == "stable-json") opt.stable_json = to_bool(key, value);
    else return false;
    return true;
}

// Flat key=value config file; explicit CLI flags take precedence, unknown
// keys are usage errors. '#' and '%' start comment lines.
void apply_flat_config(const CLI::App* cmd, CliOptions& opt) {
    if (opt.config_path.empty()) return;
    std::ifstream f(opt.config_path);
    if (!f) throw CLI::ValidationError("--config", "cannot open " + opt.config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        const std::string text = trimmed(line);
        if (text.empty() || text[0] == '#' || text[0] == '%') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--config", opt.config_path + ":" +
                                                       std::to_string(line_no) +
                                                       ": expected key=value");
        const std::string key = trimmed(text.substr(0, eq));
        const std::string value = trimmed(text.substr(eq + 1));
        if (key.empty())
            throw CLI::ValidationError("--config", opt.config_path + ":" +
                                                       std::to_string(line_no) + ": empty key");
        const CLI::Option* flag = cmd->get_option_no_throw("--" + key);
        if (flag != nullptr && flag->count() > 0) continue;  // explicit flag wins
        if (!apply_config_key(key, value, opt))
            throw CLI::ValidationError("--config", opt.config_path + ":" +
                                                       std::to_string(line_no) +
                                                       ": unknown key '" + key + "'");
    }
}

void add_model_flags(CLI::App* cmd, TrainConfig& cfg) {
    cmd->add_option("--lr", cfg.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--epochs", cfg.epochs, "epoch budget")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "early-stop patience on validation accuracy")
        ->check(CLI::Range(1, 1000000))
        ->capture_default_str();
    cmd->add_option("--lambda", cfg.lambda, "structure-regularization weight")
        ->capture_default_str();
    cmd->add_option("--d", cfg.model.d, "embedding width")->capture_default_str();
    cmd->add_option("--layers", cfg.model.layers, "attention layers")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    cmd->add_option("--heads", cfg.model.heads, "attention heads")
        ->check(CLI::Range(1, 64))
        ->capture_default_str();
    cmd->add_option("--ffn-hidden", cfg.model.ffn_hidden, "FFN hidden width (default 2*d)");
    cmd->add_option("--dropout", cfg.model.dropout_rate, "dropout rate")
        ->check(CLI::Range(0.0, 0.999))
        ->capture_default_str();
    cmd->add_flag("--node-pe,!--no-node-pe", cfg.model.use_node_pe,
                  "node positional encoding (default on)");
    cmd->add_flag("--edge-pe,!--no-edge-pe", cfg.model.use_edge_pe,
                  "hyperedge positional encoding (default on)");
}

void add_data_flags(CLI::App* cmd, DataSource& src) {
    cmd->add_flag("--synthetic", src.synthetic, "generate a planted-partition dataset per seed");
    cmd->add_option("--n", src.planted.n, "synthetic node count")->capture_default_str();
    cmd->add_option("--m", src.planted.m, "synthetic hyperedge count")->capture_default_str();
    cmd->add_option("--c", src.planted.classes, "class count")
        ->check(CLI::Range(2, 4096))
        ->capture_default_str();
    cmd->add_option("--d-in", src.planted.d_in, "synthetic feature width")->capture_default_str();
    cmd->add_option("--mean-scale", src.planted.mean_scale, "class-mean scale")
        ->capture_default_str();
    cmd->add_option("--feature-std", src.planted.feature_std, "feature noise std")
        ->capture_default_str();
    cmd->add_option("--p-inter", src.planted.p_inter, "membership rerouting probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--hypergraph", src.hypergraph_path, "hMETIS-style hypergraph file");
    cmd->add_option("--features", src.features_path, "node feature CSV");
    cmd->add_option("--labels", src.labels_path, "node label CSV");
    cmd->add_option("--data-dir", [&src](const std::vector<std::string>& vals) {
        src.use_data_dir(vals.front());
        return true;
    }, "directory produced by `hypergt generate`");
}

void finalize_config(TrainConfig& cfg, const DataSource& src) {
    if (cfg.model.d % cfg.model.heads != 0)
        throw CLI::ValidationError("--d must be divisible by --heads");
    cfg.model.d_k = cfg.model.d / cfg.model.heads;
    if (cfg.model.ffn_hidden <= 0) cfg.model.ffn_hidden = 2 * cfg.model.d;
    if (!src.synthetic && src.hypergraph_path.empty())
        throw CLI::RequiredError("a dataset (--synthetic, --data-dir or --hypergraph/...)");
}

ordered_json config_json(const CliOptions& opt, const std::vector<uint64_t>& seeds) {
    ordered_json j;
    j["data"] = opt.data.describe();
    j["seeds"] = seeds;
    j["lr"] = opt.train.lr;
    j["weight_decay"] = opt.train.weight_decay;
    j["epochs"] = opt.train.epochs;
    j["patience"] = opt.train.patience;
    j["lambda"] = opt.train.lambda;
    j["d"] = opt.train.model.d;
    j["layers"] = opt.train.model.layers;
    j["heads"] = opt.train.model.heads;
    j["d_k"] = opt.train.model.d_k;
    j["ffn_hidden"] = opt.train.model.ffn_hidden;
    j["dropout"] = opt.train.model.dropout_rate;
    j["node_pe"] = opt.train.model.use_node_pe;
    j["edge_pe"] = opt.train.model.use_edge_pe;
    return j;
}

void emit_json(const ordered_json& j, const std::string& out_path) {
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!out_path.empty()) {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + out_path);
        f << text;
    }
}

int cmd_generate(const DataSource& src, uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const Dataset data = generate_planted(src.planted, seed);
    const fs::path dir(out_dir);
    save_hypergraph(data.hg, dir / "hypergraph.hgr");
    save_features_csv(data.x_v, dir / "features.csv");
    save_labels_csv(data.labels, dir / "labels.csv");

    ordered_json manifest;
    manifest["generator"] = {{"n", src.planted.n},
                             {"m", src.planted.m},
                             {"classes", src.planted.classes},
                             {"d_in", src.planted.d_in},
                             {"mean_scale", src.planted.mean_scale},
                             {"feature_std", src.planted.feature_std},
                             {"p_inter", src.planted.p_inter},
                             {"seed", seed}};
    manifest["files"] = {{"hypergraph", "hypergraph.hgr"},
                         {"features", "features.csv"},
                         {"labels", "labels.csv"}};
    std::ofstream f(dir / "manifest.json", std::ios::binary);
    f << manifest.dump(2) << "\n";
    std::cerr << "wrote " << out_dir << " (n=" << data.hg.n << ", m=" << data.hg.m << ")\n";
    return 0;
}

int cmd_train(CliOptions& opt) {
    const auto seeds = parse_seeds(opt.seeds_spec);
    finalize_config(opt.train, opt.data);
    const auto loader = opt.data.loader();
    const RunResult result = multi_seed_run(loader, opt.train, seeds, ModelKind::kHyperGT);

    ordered_json j;
    j["config"] = config_json(opt, seeds);
    j["per_seed_test_acc"] = result.per_seed_test_acc;
    j["mean"] = result.mean;
    j["std"] = result.std_dev;
    j["l_c_final"] = result.l_c_final;
    j["l_s_final"] = result.l_s_final;
    j["wall_time"] = opt.stable_json ? 0.0 : result.wall_time;
    emit_json(j, opt.out_path);
    return 0;
}

int cmd_ablate(CliOptions& opt) {
    const auto seeds = parse_seeds(opt.seeds_spec);
    finalize_config(opt.train, opt.data);
    const auto loader = opt.data.loader();
    const auto rows = run_ablation(loader, opt.train, seeds);

    std::printf("%-20s %10s %10s\n", "config", "mean", "std");
    for (const auto& row : rows)
        std::printf("%-20s %10.4f %10.4f\n", row.name.c_str(), row.result.mean,
                    row.result.std_dev);

    if (!opt.out_path.empty() || opt.stable_json) {
        ordered_json j;
        j["config"] = config_json(opt, seeds);
        j["rows"] = ordered_json::array();
        for (const auto& row : rows) {
            ordered_json r;
            r["name"] = row.name;
            r["node_pe"] = row.node_pe;
            r["edge_pe"] = row.edge_pe;
            r["lambda"] = row.lambda;
            r["per_seed_test_acc"] = row.result.per_seed_test_acc;
            r["mean"] = row.result.mean;
            r["std"] = row.result.std_dev;
            r["wall_time"] = opt.stable_json ? 0.0 : row.result.wall_time;
            j["rows"].push_back(r);
        }
        if (!opt.out_path.empty()) {
            std::ofstream f(opt.out_path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + opt.out_path);
            f << j.dump(2) << "\n";
        }
    }
    return 0;
}

int cmd_gradcheck(double eps, double lambda) {
    const GradcheckSetup setup = make_gradcheck_toy();
    const GradcheckReport rep = run_model_gradcheck(setup, eps, lambda);
    std::printf("max relative error: %.3e (eps=%.1e, lambda=%g)\n", rep.max_rel_err, eps, lambda);
    std::printf("worst parameter:    %s[%d] analytic=%.9e numeric=%.9e\n",
                rep.worst_param.c_str(), rep.worst_index, rep.analytic, rep.numeric);
    const bool ok = rep.max_rel_err < 1e-4;
    std::printf("%s (threshold 1e-4)\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("HYPERGT_THREADS")) {
        const int t = std::atoi(env);
        if (t > 0) set_max_threads(t);
    }

    CLI::App app{"HyperGT: hypergraph transformer training and experiments"};
    app.require_subcommand(1);

    // generate
    DataSource gen_src;
    gen_src.synthetic = true;
    uint64_t gen_seed = 0;
    std::string gen_out;
    auto* generate = app.add_subcommand("generate", "write a synthetic dataset to disk");
    generate->add_option("--out", gen_out, "output directory")->required();
    generate->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
    generate->add_option("--n", gen_src.planted.n, "node count")->capture_default_str();
    generate->add_option("--m", gen_src.planted.m, "hyperedge count")->capture_default_str();
    generate->add_option("--c", gen_src.planted.classes, "class count")
        ->check(CLI::Range(2, 4096))
        ->capture_default_str();
    generate->add_option("--d-in", gen_src.planted.d_in, "feature width")->capture_default_str();
    generate->add_option("--mean-scale", gen_src.planted.mean_scale, "class-mean scale")
        ->capture_default_str();
    generate->add_option("--feature-std", gen_src.planted.feature_std, "feature noise std")
        ->capture_default_str();
    generate->add_option("--p-inter", gen_src.planted.p_inter, "membership rerouting probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();

    // train
    CliOptions train_opt;
    auto* train_cmd = app.add_subcommand("train", "train HyperGT and emit metrics JSON");
    train_cmd->add_option("--config", train_opt.config_path, "flat key=value config file");
    add_data_flags(train_cmd, train_opt.data);
    add_model_flags(train_cmd, train_opt.train);
    train_cmd->add_option("--seeds", train_opt.seeds_spec, "seed list: 7 | 0,3,9 | 0..9")
        ->capture_default_str();
    train_cmd->add_option("--out", train_opt.out_path, "also write the JSON here");
    train_cmd->add_flag("--stable-json", train_opt.stable_json,
                        "zero out wall_time so identical runs are byte-identical");

    // ablate
    CliOptions ablate_opt;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "run the four PE/regularization configurations");
    ablate_cmd->add_option("--config", ablate_opt.config_path, "flat key=value config file");
    add_data_flags(ablate_cmd, ablate_opt.data);
    add_model_flags(ablate_cmd, ablate_opt.train);
    ablate_cmd->add_option("--seeds", ablate_opt.seeds_spec, "seed list: 7 | 0,3,9 | 0..9")
        ->capture_default_str();
    ablate_cmd->add_option("--json-out", ablate_opt.out_path, "write rows as JSON");
    ablate_cmd->add_flag("--stable-json", ablate_opt.stable_json,
                         "zero out wall_time in the JSON output");

    // gradcheck
    double gc_eps = 1e-5;
    double gc_lambda = 1.0;
    auto* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
    gradcheck_cmd->add_option("--eps", gc_eps, "central-difference step")->capture_default_str();
    gradcheck_cmd->add_option("--lambda", gc_lambda, "structure-loss weight in the checked loss")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen_src, gen_seed, gen_out);
        if (train_cmd->parsed()) {
            apply_flat_config(train_cmd, train_opt);
            if (train_cmd->count("--c") > 0 && !train_opt.data.synthetic)
                train_opt.data.classes_override = train_opt.data.planted.classes;
            return cmd_train(train_opt);
        }
        if (ablate_cmd->parsed()) {
            apply_flat_config(ablate_cmd, ablate_opt);
            if (ablate_cmd->count("--c") > 0 && !ablate_opt.data.synthetic)
                ablate_opt.data.classes_override = ablate_opt.data.planted.classes;
            return cmd_ablate(ablate_opt);
        }
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gc_eps, gc_lambda);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
