#include "hypergt/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace hypergt {

namespace {
constexpr uint64_t kParamSalt = 0x706172616dULL;
constexpr uint64_t kDropoutSalt = 0x64726f70ULL;

struct StepOut {
    Tape::Id loss = -1;
    double l_c = 0.0;
    double l_s = 0.0;
};

struct TrainerHooks {
    std::vector<Parameter*> params;
    std::function<StepOut(Tape&, Rng*)> build_train_loss;
    std::function<Matrix()> eval_logits;
};

TrainOutcome run_loop(TrainerHooks& hooks, const Dataset& data, const SplitSpec& split,
                      const TrainConfig& config) {
    if (split.train.empty()) throw std::invalid_argument("train: empty training set");
    if (split.val.empty()) throw std::invalid_argument("train: empty validation set");

    AdamState adam;
    adam.init(hooks.params);
    Rng dropout_rng(config.seed ^ kDropoutSalt);

    TrainOutcome out;
    std::vector<Matrix> best_values;
    const auto snapshot = [&] {
        best_values.clear();
        for (Parameter* p : hooks.params) best_values.push_back(p->value);
    };
    snapshot();
    double best_val = -1.0;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Tape tape;
        const StepOut step = hooks.build_train_loss(tape, &dropout_rng);
        const double loss_val = tape.scalar(step.loss);
        if (!std::isfinite(loss_val))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(step.loss);
        adam_step(hooks.params, adam, config.lr, config.weight_decay);

        const Matrix logits = hooks.eval_logits();
        const double val_acc = accuracy_from_logits(logits, data.labels, split.val);
        const double train_acc = accuracy_from_logits(logits, data.labels, split.train);
        out.history.push_back(EpochStats{epoch, step.l_c, step.l_s, loss_val, train_acc, val_acc});

        if (val_acc > best_val) {  // ties keep the earliest epoch
            best_val = val_acc;
            best_epoch = epoch;
            snapshot();
        } else if (epoch - best_epoch > config.patience) {
            break;
        }
    }

    for (size_t i = 0; i < hooks.params.size(); ++i) hooks.params[i]->value = best_values[i];
    out.best_epoch = best_epoch;
    out.best_val_acc = best_val;
    out.final_l_c = out.history.back().l_c;
    out.final_l_s = out.history.back().l_s;
    return out;
}
}  // namespace

void TrainConfig::check() const {
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
    if (!std::isfinite(lambda)) throw std::invalid_argument("config: lambda must be finite");
    model.check();
}

void AdamState::init(const std::vector<Parameter*>& params) {
    m.clear();
    v.clear();
    t = 0;
    for (const Parameter* p : params) {
        m.emplace_back(p->value.rows(), p->value.cols());
        v.emplace_back(p->value.rows(), p->value.cols());
    }
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr,
               double weight_decay, double beta1, double beta2, double eps) {
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state not initialized for these parameters");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Parameter* p = params[i];
        double* val = p->value.data();
        const double* grad = p->grad.data();
        double* mm = state.m[i].data();
        double* vv = state.v[i].data();
        const int64_t n = p->value.size();
        for (int64_t k = 0; k < n; ++k) {
            const double g = grad[k];
            mm[k] = beta1 * mm[k] + (1.0 - beta1) * g;
            vv[k] = beta2 * vv[k] + (1.0 - beta2) * g * g;
            const double mhat = mm[k] / bc1;
            const double vhat = vv[k] / bc2;
            val[k] -= lr * mhat / (std::sqrt(vhat) + eps);
            val[k] -= lr * weight_decay * val[k];
        }
    }
}

double accuracy_from_logits(const Matrix& logits, const std::vector<int>& labels,
                            const std::vector<int>& index_set) {
    if (index_set.empty()) throw std::invalid_argument("accuracy: empty index set");
    const auto pred = predict(logits);
    int hits = 0;
    for (int v : index_set) {
        if (v < 0 || v >= static_cast<int>(pred.size()))
            throw std::invalid_argument("accuracy: index " + std::to_string(v) + " out of range");
        if (pred[static_cast<size_t>(v)] == labels[static_cast<size_t>(v)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(index_set.size());
}

ModelParams initial_params_for(const Dataset& data, const TrainConfig& config) {
    Rng init_rng(config.seed ^ kParamSalt);
    return init_model_params(data.hg, data.x_v.cols(), config.model, init_rng);
}

LossBreakdown model_loss(const Dataset& data, const std::vector<int>& labeled,
                         const TrainConfig& config, ModelParams& params) {
    const StarExpansion se = star_expand(data.hg);
    const StructureLossTarget target = StructureLossTarget::from_star(se);
    const ForwardTrace trace = forward_eval(data.hg, data.x_v, data.x_e, params, config.model);
    const double l_c = classification_loss(trace.logits, data.labels, labeled);
    const double l_s = structure_loss(target, trace.attn);
    return total_loss(l_c, l_s, config.lambda);
}

TrainOutcome train(const Dataset& data, const SplitSpec& split, const TrainConfig& config,
                   ModelParams& params) {
    config.check();
    if (static_cast<int>(data.labels.size()) != data.hg.n)
        throw std::invalid_argument("train: label count does not match node count");
    if (config.model.classes != data.classes)
        throw std::invalid_argument("train: config classes " +
                                    std::to_string(config.model.classes) + " != dataset classes " +
                                    std::to_string(data.classes));

    const StarExpansion se = star_expand(data.hg);
    const StructureLossTarget target = StructureLossTarget::from_star(se);

    params = initial_params_for(data, config);

    TrainerHooks hooks;
    hooks.params = params.all();
    hooks.build_train_loss = [&](Tape& tape, Rng* rng) {
        ForwardTrace trace =
            forward(tape, data.hg, data.x_v, data.x_e, params, config.model, true, rng);
        const Tape::Id l_c = classification_loss_t(tape, trace.logits_id, data.labels, split.train);
        // l_s is tracked every epoch even when it does not enter the objective.
        const double l_s_val = structure_loss(target, trace.attn);
        Tape::Id loss = l_c;
        if (config.lambda != 0.0) {
            const Tape::Id l_s = structure_loss_t(tape, target, trace.attn_ids);
            loss = tape.add(l_c, tape.scale(l_s, config.lambda));
        }
        return StepOut{loss, tape.scalar(l_c), l_s_val};
    };
    hooks.eval_logits = [&] {
        return forward_eval(data.hg, data.x_v, data.x_e, params, config.model).logits;
    };
    return run_loop(hooks, data, split, config);
}

double evaluate(ModelParams& params, const HyperGTConfig& cfg, const Dataset& data,
                const std::vector<int>& index_set) {
    const ForwardTrace trace = forward_eval(data.hg, data.x_v, data.x_e, params, cfg);
    return accuracy_from_logits(trace.logits, data.labels, index_set);
}

namespace {
struct BaselineOutcome {
    double test_acc = 0.0;
    double final_l_c = 0.0;
};

BaselineOutcome mlp_run(const Dataset& data, const SplitSpec& split, const TrainConfig& config) {
    const int d_in = data.x_v.cols();
    const int d = config.model.d;
    const int c = data.classes;
    Rng init_rng(config.seed ^ kParamSalt);
    Parameter w1("mlp.w1", glorot_uniform(d_in, d, init_rng));
    Parameter b1("mlp.b1", Matrix(1, d));
    Parameter w2("mlp.w2", glorot_uniform(d, c, init_rng));
    Parameter b2("mlp.b2", Matrix(1, c));

    const auto logits_graph = [&](Tape& tape) {
        const Tape::Id x = tape.input(data.x_v);
        const Tape::Id h = tape.gelu(tape.add_bias(tape.matmul(x, tape.param(w1)), tape.param(b1)));
        return tape.add_bias(tape.matmul(h, tape.param(w2)), tape.param(b2));
    };

    TrainerHooks hooks;
    hooks.params = {&w1, &b1, &w2, &b2};
    hooks.build_train_loss = [&](Tape& tape, Rng*) {
        const Tape::Id logits = logits_graph(tape);
        const Tape::Id l_c = classification_loss_t(tape, logits, data.labels, split.train);
        return StepOut{l_c, tape.scalar(l_c), 0.0};
    };
    hooks.eval_logits = [&] {
        Tape tape;
        return tape.val(logits_graph(tape));
    };
    const TrainOutcome out = run_loop(hooks, data, split, config);

    Tape tape;
    const Matrix logits = tape.val(logits_graph(tape));
    return BaselineOutcome{accuracy_from_logits(logits, data.labels, split.test), out.final_l_c};
}

BaselineOutcome mp_run(const Dataset& data, const SplitSpec& split, const TrainConfig& config) {
    const int rounds = config.model.layers;
    if (rounds == 0) return mlp_run(data, split, config);

    const Hypergraph& hg = data.hg;
    const int d_in = data.x_v.cols();
    const int d = config.model.d;
    const int c = data.classes;

    // Fixed mean-aggregation operators of the two message-passing steps.
    Matrix agg_ve(hg.m, hg.n);  // hyperedge <- mean of member nodes
    for (int e = 0; e < hg.m; ++e) {
        const auto members = hg.hyperedge_members(e);
        if (members.empty())
            throw std::invalid_argument("mp_baseline: empty hyperedge " + std::to_string(e));
        const double w = 1.0 / static_cast<double>(members.size());
        for (int v : members) agg_ve(e, v) = w;
    }
    Matrix agg_ev(hg.n, hg.m);  // node <- mean of incident hyperedges (zero row if isolated)
    for (int v = 0; v < hg.n; ++v) {
        const auto incident = hg.incident_hyperedges(v);
        if (incident.empty()) continue;
        const double w = 1.0 / static_cast<double>(incident.size());
        for (int e : incident) agg_ev(v, e) = w;
    }

    Rng init_rng(config.seed ^ kParamSalt);
    std::vector<Parameter> weights, biases;
    weights.reserve(static_cast<size_t>(rounds));
    biases.reserve(static_cast<size_t>(rounds));
    for (int r = 0; r < rounds; ++r) {
        const int in_w = r == 0 ? d_in : d;
        weights.emplace_back("mp.w" + std::to_string(r), glorot_uniform(in_w, d, init_rng));
        biases.emplace_back("mp.b" + std::to_string(r), Matrix(1, d));
    }
    Parameter head_w("mp.head_w", glorot_uniform(d, c, init_rng));
    Parameter head_b("mp.head_b", Matrix(1, c));

    const auto logits_graph = [&](Tape& tape) {
        Tape::Id z = tape.input(data.x_v);
        for (int r = 0; r < rounds; ++r) {
            // Hyperedge embedding: transformed mean of member features.
            const Tape::Id edge_emb = tape.gelu(
                tape.add_bias(tape.matmul(tape.matmul(tape.input(agg_ve), z),
                                          tape.param(weights[static_cast<size_t>(r)])),
                              tape.param(biases[static_cast<size_t>(r)])));
            z = tape.matmul(tape.input(agg_ev), edge_emb);
        }
        return tape.add_bias(tape.matmul(z, tape.param(head_w)), tape.param(head_b));
    };

    TrainerHooks hooks;
    for (int r = 0; r < rounds; ++r) {
        hooks.params.push_back(&weights[static_cast<size_t>(r)]);
        hooks.params.push_back(&biases[static_cast<size_t>(r)]);
    }
    hooks.params.push_back(&head_w);
    hooks.params.push_back(&head_b);
    hooks.build_train_loss = [&](Tape& tape, Rng*) {
        const Tape::Id logits = logits_graph(tape);
        const Tape::Id l_c = classification_loss_t(tape, logits, data.labels, split.train);
        return StepOut{l_c, tape.scalar(l_c), 0.0};
    };
    hooks.eval_logits = [&] {
        Tape tape;
        return tape.val(logits_graph(tape));
    };
    const TrainOutcome out = run_loop(hooks, data, split, config);

    Tape tape;
    const Matrix logits = tape.val(logits_graph(tape));
    return BaselineOutcome{accuracy_from_logits(logits, data.labels, split.test), out.final_l_c};
}
}  // namespace

double mlp_baseline(const Dataset& data, const SplitSpec& split, const TrainConfig& config) {
    return mlp_run(data, split, config).test_acc;
}

double mp_baseline(const Dataset& data, const SplitSpec& split, const TrainConfig& config) {
    return mp_run(data, split, config).test_acc;
}

namespace {
struct SeedOutcome {
    double acc = 0.0;
    double l_c = 0.0;
    double l_s = 0.0;
};

SeedOutcome run_one_seed(const std::function<Dataset(uint64_t)>& dataset_for_seed,
                         const TrainConfig& config, uint64_t seed, ModelKind kind) {
    Dataset data = dataset_for_seed(seed);
    const SplitSpec split = make_splits(data.hg.n, seed);
    TrainConfig per_seed = config;
    per_seed.seed = seed;
    per_seed.model.classes = data.classes;

    SeedOutcome out;
    switch (kind) {
        case ModelKind::kHyperGT: {
            ModelParams params;
            const TrainOutcome t = train(data, split, per_seed, params);
            out.acc = evaluate(params, per_seed.model, data, split.test);
            out.l_c = t.final_l_c;
            out.l_s = t.final_l_s;
            break;
        }
        case ModelKind::kMlp: {
            const BaselineOutcome b = mlp_run(data, split, per_seed);
            out.acc = b.test_acc;
            out.l_c = b.final_l_c;
            break;
        }
        case ModelKind::kMessagePassing: {
            const BaselineOutcome b = mp_run(data, split, per_seed);
            out.acc = b.test_acc;
            out.l_c = b.final_l_c;
            break;
        }
    }
    return out;
}
}  // namespace

RunResult multi_seed_run(const std::function<Dataset(uint64_t)>& dataset_for_seed,
                         const TrainConfig& config, const std::vector<uint64_t>& seeds,
                         ModelKind kind) {
    if (seeds.empty()) throw std::invalid_argument("multi_seed_run: need at least one seed");
    const auto t0 = std::chrono::steady_clock::now();

    // Seeds are independent; fan them out when allowed. Each worker pins its
    // kernels to its own thread, and results are reduced in seed order, so
    // the output is bitwise identical to the serial path.
    std::vector<SeedOutcome> outcomes(seeds.size());
    const int workers = std::min<int>(max_threads(), static_cast<int>(seeds.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < seeds.size(); ++i)
            outcomes[i] = run_one_seed(dataset_for_seed, config, seeds[i], kind);
    } else {
        std::atomic<size_t> next{0};
        std::mutex error_mu;
        std::exception_ptr error;
        const auto worker = [&] {
            const SerialKernelScope serial;
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= seeds.size()) return;
                try {
                    outcomes[i] = run_one_seed(dataset_for_seed, config, seeds[i], kind);
                } catch (...) {
                    const std::lock_guard<std::mutex> lk(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers) - 1);
        for (int t = 1; t < workers; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
        if (error) std::rethrow_exception(error);
    }

    RunResult r;
    double sum_lc = 0.0;
    double sum_ls = 0.0;
    for (const SeedOutcome& o : outcomes) {
        r.per_seed_test_acc.push_back(o.acc);
        sum_lc += o.l_c;
        sum_ls += o.l_s;
    }

    const double n = static_cast<double>(seeds.size());
    for (double a : r.per_seed_test_acc) r.mean += a;
    r.mean /= n;
    double var = 0.0;
    for (double a : r.per_seed_test_acc) var += (a - r.mean) * (a - r.mean);
    r.std_dev = std::sqrt(var / n);  // population std
    r.l_c_final = sum_lc / n;
    r.l_s_final = sum_ls / n;
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<AblationRow> run_ablation(const std::function<Dataset(uint64_t)>& dataset_for_seed,
                                      const TrainConfig& base, const std::vector<uint64_t>& seeds) {
    std::vector<AblationRow> rows{
        {"none", false, false, 0.0, {}},
        {"node-pe", true, false, 0.0, {}},
        {"node+edge-pe", true, true, 0.0, {}},
        {"node+edge-pe+reg", true, true, base.lambda, {}},
    };
    for (auto& row : rows) {
        TrainConfig cfg = base;
        cfg.model.use_node_pe = row.node_pe;
        cfg.model.use_edge_pe = row.edge_pe;
        cfg.lambda = row.lambda;
        row.result = multi_seed_run(dataset_for_seed, cfg, seeds, ModelKind::kHyperGT);
    }
    return rows;
}

GradcheckSetup make_gradcheck_toy() {
    GradcheckSetup s;
    // 6 nodes, 3 hyperedges: {v1,v2,v3}, {v3,v4,v5}, {v5,v6,v1}.
    s.data.hg = Hypergraph(Matrix::from_rows({{1, 0, 1},
                                              {1, 0, 0},
                                              {1, 1, 0},
                                              {0, 1, 0},
                                              {0, 1, 1},
                                              {0, 0, 1}}));
    s.data.labels = {0, 1, 0, 1, 0, 1};
    s.data.classes = 2;
    Rng rng(42);
    s.data.x_v = Matrix(6, 5);
    for (int64_t i = 0; i < s.data.x_v.size(); ++i) s.data.x_v.data()[i] = rng.normal();

    s.config.model.d = 4;
    s.config.model.layers = 2;
    s.config.model.heads = 2;
    s.config.model.d_k = 2;
    s.config.model.ffn_hidden = 8;
    s.config.model.classes = 2;
    s.config.model.dropout_rate = 0.0;
    s.config.lambda = 1.0;
    s.config.seed = 7;

    s.labeled = {0, 1, 2, 3, 4, 5};
    return s;
}

GradcheckReport run_model_gradcheck(const GradcheckSetup& setup, double eps, double lambda) {
    const StarExpansion se = star_expand(setup.data.hg);
    const StructureLossTarget target = StructureLossTarget::from_star(se);

    Rng init_rng(setup.config.seed ^ kParamSalt);
    ModelParams params =
        init_model_params(setup.data.hg, setup.data.x_v.cols(), setup.config.model, init_rng);

    const auto loss_with_grad = [&]() -> double {
        Tape tape;
        ForwardTrace trace = forward(tape, setup.data.hg, setup.data.x_v, setup.data.x_e, params,
                                     setup.config.model, false, nullptr);
        const Tape::Id l_c =
            classification_loss_t(tape, trace.logits_id, setup.data.labels, setup.labeled);
        Tape::Id loss = l_c;
        if (lambda != 0.0) {
            const Tape::Id l_s = structure_loss_t(tape, target, trace.attn_ids);
            loss = tape.add(l_c, tape.scale(l_s, lambda));
        }
        tape.backward(loss);
        return tape.scalar(loss);
    };
    return finite_diff_gradcheck(loss_with_grad, params.all(), eps);
}

}  // namespace hypergt
