#include "hypergt/model.hpp"

#include <cmath>
#include <stdexcept>

namespace hypergt {

void HyperGTConfig::check() const {
    if (d < 1 || layers < 1 || heads < 1 || d_k < 1 || ffn_hidden < 1)
        throw std::invalid_argument("config: dimensions must be positive");
    if (d != heads * d_k)
        throw std::invalid_argument("config: d (" + std::to_string(d) + ") must equal heads*d_k (" +
                                    std::to_string(heads) + "*" + std::to_string(d_k) + ")");
    if (classes < 2) throw std::invalid_argument("config: need at least 2 classes");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("config: dropout_rate must be in [0, 1)");
}

std::vector<Parameter*> ModelParams::all() {
    std::vector<Parameter*> out{&input_w, &input_b, &w_pv, &w_pe};
    for (auto& l : layers) {
        out.push_back(&l.ln1_gain);
        out.push_back(&l.ln1_bias);
        out.push_back(&l.w_q);
        out.push_back(&l.w_k);
        out.push_back(&l.w_v);
        out.push_back(&l.w_o);
        out.push_back(&l.ln2_gain);
        out.push_back(&l.ln2_bias);
        out.push_back(&l.ffn_w1);
        out.push_back(&l.ffn_b1);
        out.push_back(&l.ffn_w2);
        out.push_back(&l.ffn_b2);
    }
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

namespace {
// Glorot bound with an explicit fan pair. For the PE projections the
// effective fan-in is the mean number of incidence-row entries a PE row
// sums over (node degree / hyperedge size), not the full row count of the
// projection matrix.
Matrix fan_aware_uniform(int rows, int cols, double fan_in, Rng& rng) {
    const double a = std::sqrt(6.0 / (fan_in + cols));
    Matrix m(rows, cols);
    for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
    return m;
}
}  // namespace

ModelParams init_model_params(const Hypergraph& hg, int d_in, const HyperGTConfig& cfg, Rng& rng) {
    cfg.check();
    const int n = hg.n;
    const int m = hg.m;
    if (n < 1 || m < 0 || d_in < 1) throw std::invalid_argument("init_model_params: bad sizes");

    double incidences = 0.0;
    for (int v = 0; v < n; ++v) incidences += hg.node_degree(v);
    const double mean_degree = std::max(1.0, incidences / n);
    const double mean_size = std::max(1.0, m > 0 ? incidences / m : 1.0);

    ModelParams p;
    p.input_w = Parameter("input_w", glorot_uniform(d_in, cfg.d, rng));
    p.input_b = Parameter("input_b", Matrix(1, cfg.d));
    // PE projections are drawn whether or not the switches are on, so ablation
    // variants of one seed share every other weight.
    p.w_pv = Parameter("w_pv", fan_aware_uniform(m, cfg.d, mean_degree, rng));
    p.w_pe = Parameter("w_pe", fan_aware_uniform(n, cfg.d, mean_size, rng));

    const int proj = cfg.heads * cfg.d_k;
    p.layers.resize(static_cast<size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        auto& lp = p.layers[static_cast<size_t>(l)];
        const std::string tag = "layer" + std::to_string(l) + ".";
        lp.ln1_gain = Parameter(tag + "ln1_gain", Matrix(1, cfg.d, 1.0));
        lp.ln1_bias = Parameter(tag + "ln1_bias", Matrix(1, cfg.d));
        lp.w_q = Parameter(tag + "w_q", glorot_uniform(cfg.d, proj, rng));
        lp.w_k = Parameter(tag + "w_k", glorot_uniform(cfg.d, proj, rng));
        lp.w_v = Parameter(tag + "w_v", glorot_uniform(cfg.d, proj, rng));
        lp.w_o = Parameter(tag + "w_o", glorot_uniform(proj, cfg.d, rng));
        lp.ln2_gain = Parameter(tag + "ln2_gain", Matrix(1, cfg.d, 1.0));
        lp.ln2_bias = Parameter(tag + "ln2_bias", Matrix(1, cfg.d));
        lp.ffn_w1 = Parameter(tag + "ffn_w1", glorot_uniform(cfg.d, cfg.ffn_hidden, rng));
        lp.ffn_b1 = Parameter(tag + "ffn_b1", Matrix(1, cfg.ffn_hidden));
        lp.ffn_w2 = Parameter(tag + "ffn_w2", glorot_uniform(cfg.ffn_hidden, cfg.d, rng));
        lp.ffn_b2 = Parameter(tag + "ffn_b2", Matrix(1, cfg.d));
    }
    p.head_w = Parameter("head_w", glorot_uniform(cfg.d, cfg.classes, rng));
    p.head_b = Parameter("head_b", Matrix(1, cfg.classes));
    return p;
}

Matrix init_hyperedge_features(const Hypergraph& hg, const Matrix& x_v) {
    if (x_v.rows() != hg.n)
        throw std::invalid_argument("init_hyperedge_features: feature rows " +
                                    std::to_string(x_v.rows()) + " != n=" + std::to_string(hg.n));
    Matrix x_e(hg.m, x_v.cols());
    for (int e = 0; e < hg.m; ++e) {
        const auto members = hg.hyperedge_members(e);
        if (members.empty())
            throw std::invalid_argument("init_hyperedge_features: empty hyperedge " +
                                        std::to_string(e));
        const double inv = 1.0 / static_cast<double>(members.size());
        for (int v : members)
            for (int j = 0; j < x_v.cols(); ++j) x_e(e, j) += x_v(v, j);
        for (int j = 0; j < x_v.cols(); ++j) x_e(e, j) *= inv;
    }
    return x_e;
}

Matrix assemble_input(const Matrix& x_v, const Matrix& x_e) {
    if (x_e.rows() > 0 && x_v.cols() != x_e.cols())
        throw std::invalid_argument("assemble_input: width mismatch " + x_v.shape_str() + " vs " +
                                    x_e.shape_str());
    return concat_rows(x_v, x_e);
}

Matrix positional_encoding(const Hypergraph& hg, const ModelParams& params,
                           const HyperGTConfig& cfg) {
    const int d = cfg.d;
    Matrix top = cfg.use_node_pe ? matmul(hg.incidence, params.w_pv.value) : Matrix(hg.n, d);
    Matrix bottom =
        cfg.use_edge_pe ? matmul(transpose(hg.incidence), params.w_pe.value) : Matrix(hg.m, d);
    return concat_rows(top, bottom);
}

AttentionOut attention_layer(Tape& tape, Tape::Id z, LayerParams& lp, const HyperGTConfig& cfg,
                             bool train_mode, Rng* dropout_rng) {
    const Tape::Id h = tape.layer_norm(z, tape.param(lp.ln1_gain), tape.param(lp.ln1_bias));
    const Tape::Id q_full = tape.matmul(h, tape.param(lp.w_q));
    const Tape::Id k_full = tape.matmul(h, tape.param(lp.w_k));
    const Tape::Id v_full = tape.matmul(h, tape.param(lp.w_v));

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg.d_k));
    const bool drop = train_mode && cfg.dropout_rate > 0.0;

    std::vector<Tape::Id> contexts;
    std::vector<Tape::Id> head_attn;
    for (int hd = 0; hd < cfg.heads; ++hd) {
        const int off = hd * cfg.d_k;
        // The 1/sqrt(d_k) scale folds into Q, avoiding a full (n+m)^2 pass.
        const Tape::Id q = tape.scale(tape.slice_cols(q_full, off, cfg.d_k), inv_sqrt_dk);
        const Tape::Id k = tape.slice_cols(k_full, off, cfg.d_k);
        const Tape::Id v = tape.slice_cols(v_full, off, cfg.d_k);
        const Tape::Id attn = tape.row_softmax(tape.matmul(q, tape.transpose(k)));
        const Tape::Id used = drop ? tape.dropout(attn, cfg.dropout_rate, *dropout_rng) : attn;
        contexts.push_back(tape.matmul(used, v));
        head_attn.push_back(attn);
    }
    const Tape::Id mixed = tape.matmul(tape.concat_cols(contexts), tape.param(lp.w_o));
    return AttentionOut{tape.add(z, mixed), tape.mean_of(head_attn)};
}

Tape::Id ffn_block(Tape& tape, Tape::Id z, LayerParams& lp, const HyperGTConfig& cfg,
                   bool train_mode, Rng* dropout_rng) {
    const Tape::Id h = tape.layer_norm(z, tape.param(lp.ln2_gain), tape.param(lp.ln2_bias));
    Tape::Id hidden =
        tape.gelu(tape.add_bias(tape.matmul(h, tape.param(lp.ffn_w1)), tape.param(lp.ffn_b1)));
    if (train_mode && cfg.dropout_rate > 0.0)
        hidden = tape.dropout(hidden, cfg.dropout_rate, *dropout_rng);
    const Tape::Id out =
        tape.add_bias(tape.matmul(hidden, tape.param(lp.ffn_w2)), tape.param(lp.ffn_b2));
    return tape.add(z, out);
}

ForwardTrace forward(Tape& tape, const Hypergraph& hg, const Matrix& x_v,
                     const std::optional<Matrix>& x_e, ModelParams& params,
                     const HyperGTConfig& cfg, bool train_mode, Rng* dropout_rng) {
    cfg.check();
    if (x_v.rows() != hg.n)
        throw std::invalid_argument("forward: node feature rows != n");
    if (x_e && x_e->rows() != hg.m)
        throw std::invalid_argument("forward: hyperedge feature rows != m");
    if (train_mode && cfg.dropout_rate > 0.0 && dropout_rng == nullptr)
        throw std::invalid_argument("forward: train mode with dropout needs an rng");

    const Matrix x_edges = x_e ? *x_e : init_hyperedge_features(hg, x_v);
    const Tape::Id x = tape.input(assemble_input(x_v, x_edges));
    Tape::Id z = tape.add_bias(tape.matmul(x, tape.param(params.input_w)),
                               tape.param(params.input_b));

    // PE blocks that are switched off become constant zeros, which keeps the
    // forward values identical to a model whose projection weights are zero.
    const Tape::Id pe_top = cfg.use_node_pe
                                ? tape.matmul(tape.input(hg.incidence), tape.param(params.w_pv))
                                : tape.input(Matrix(hg.n, cfg.d));
    const Tape::Id pe_bottom =
        cfg.use_edge_pe
            ? tape.matmul(tape.input(transpose(hg.incidence)), tape.param(params.w_pe))
            : tape.input(Matrix(hg.m, cfg.d));
    z = tape.add(z, tape.concat_rows(pe_top, pe_bottom));

    ForwardTrace trace;
    for (auto& lp : params.layers) {
        const AttentionOut att = attention_layer(tape, z, lp, cfg, train_mode, dropout_rng);
        trace.attn_ids.push_back(att.attn);
        trace.attn.push_back(tape.val(att.attn));
        z = ffn_block(tape, att.z, lp, cfg, train_mode, dropout_rng);
    }

    const Tape::Id node_rows = tape.slice_rows(z, 0, hg.n);
    trace.logits_id = tape.add_bias(tape.matmul(node_rows, tape.param(params.head_w)),
                                    tape.param(params.head_b));
    trace.logits = tape.val(trace.logits_id);
    return trace;
}

ForwardTrace forward_eval(const Hypergraph& hg, const Matrix& x_v,
                          const std::optional<Matrix>& x_e, ModelParams& params,
                          const HyperGTConfig& cfg) {
    Tape tape;
    ForwardTrace trace = forward(tape, hg, x_v, x_e, params, cfg, false, nullptr);
    trace.logits_id = -1;  // tape dies with this scope
    trace.attn_ids.clear();
    return trace;
}

std::vector<int> predict(const Matrix& logits) {
    std::vector<int> labels(static_cast<size_t>(logits.rows()));
    for (int i = 0; i < logits.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        labels[static_cast<size_t>(i)] = best;
    }
    return labels;
}

}  // namespace hypergt
