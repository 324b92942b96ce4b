#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hypergt/data.hpp"
#include "hypergt/losses.hpp"
#include "hypergt/model.hpp"
#include "hypergt/tape.hpp"

namespace hypergt {

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int epochs = 300;
    int patience = 50;     // early stop after this many epochs without a new best val accuracy
    double lambda = 1.0;   // weight of the structure loss
    uint64_t seed = 0;
    HyperGTConfig model;

    void check() const;
};

struct AdamState {
    std::vector<Matrix> m, v;
    int64_t t = 0;

    void init(const std::vector<Parameter*>& params);
};

// Adam with decoupled weight decay; decay shrinks the parameter after the
// gradient step by lr * weight_decay * theta.
void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr,
               double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EpochStats {
    int epoch = 0;
    double l_c = 0.0;
    double l_s = 0.0;
    double total = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainOutcome {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_acc = 0.0;
    double final_l_c = 0.0;  // from the last executed epoch
    double final_l_s = 0.0;
};

// Trains HyperGT on the split's training nodes, restoring the parameters of
// the best validation epoch (ties go to the earliest). Deterministic given
// config.seed. `params` is initialized inside from the seed.
TrainOutcome train(const Dataset& data, const SplitSpec& split, const TrainConfig& config,
                   ModelParams& params);

// Fraction of nodes in index_set whose prediction matches the label.
double evaluate(ModelParams& params, const HyperGTConfig& cfg, const Dataset& data,
                const std::vector<int>& index_set);
double accuracy_from_logits(const Matrix& logits, const std::vector<int>& labels,
                            const std::vector<int>& index_set);

// The parameter state train() starts from for a given config.seed.
ModelParams initial_params_for(const Dataset& data, const TrainConfig& config);

// Eval-mode objective l_c + lambda * l_s at the current parameters.
LossBreakdown model_loss(const Dataset& data, const std::vector<int>& labeled,
                         const TrainConfig& config, ModelParams& params);

struct RunResult {
    std::vector<double> per_seed_test_acc;
    double mean = 0.0;
    double std_dev = 0.0;  // population standard deviation
    double l_c_final = 0.0;
    double l_s_final = 0.0;
    double wall_time = 0.0;  // seconds
};

enum class ModelKind { kHyperGT, kMlp, kMessagePassing };

// For each seed: regenerate the dataset (synthetic sources vary with the
// seed) and splits, train, evaluate on test. Aggregates mean +- population
// std; l_c/l_s are means over seeds of the last-epoch values.
RunResult multi_seed_run(const std::function<Dataset(uint64_t)>& dataset_for_seed,
                         const TrainConfig& config, const std::vector<uint64_t>& seeds,
                         ModelKind kind = ModelKind::kHyperGT);

// Two-layer MLP on node features only (no structure); returns test accuracy.
double mlp_baseline(const Dataset& data, const SplitSpec& split, const TrainConfig& config);

// config.model.layers rounds of mean aggregation node->hyperedge->node, each
// followed by a learned linear map + gelu, then a classifier. 0 rounds would
// be the MLP; layers >= 1 here. Returns test accuracy.
double mp_baseline(const Dataset& data, const SplitSpec& split, const TrainConfig& config);

struct AblationRow {
    std::string name;
    bool node_pe = false;
    bool edge_pe = false;
    double lambda = 0.0;
    RunResult result;
};

// The four-configuration ablation: no PE, node PE, node+edge PE,
// node+edge PE + structure regularization, all over the same seeds.
std::vector<AblationRow> run_ablation(const std::function<Dataset(uint64_t)>& dataset_for_seed,
                                      const TrainConfig& base, const std::vector<uint64_t>& seeds);

struct GradcheckSetup {
    Dataset data;
    TrainConfig config;
    std::vector<int> labeled;
};

// Canonical 6-node / 3-hyperedge instance with d=4, layers=2, heads=2,
// dropout 0, used by gradient checks.
GradcheckSetup make_gradcheck_toy();

// Finite-difference check of d(l_c + lambda*l_s)/dtheta over every model
// parameter of the toy (or any other setup).
GradcheckReport run_model_gradcheck(const GradcheckSetup& setup, double eps, double lambda);

}  // namespace hypergt
