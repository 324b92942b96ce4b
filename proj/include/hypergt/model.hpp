#pragma once

#include <optional>
#include <vector>

#include "hypergt/hypergraph.hpp"
#include "hypergt/matrix.hpp"
#include "hypergt/rng.hpp"
#include "hypergt/tape.hpp"

namespace hypergt {

struct HyperGTConfig {
    int d = 64;          // embedding width, must equal heads * d_k
    int layers = 2;      // attention + FFN blocks
    int heads = 4;
    int d_k = 16;        // per-head key width
    int ffn_hidden = 128;
    int classes = 2;
    bool use_node_pe = true;
    bool use_edge_pe = true;
    double dropout_rate = 0.1;

    // Throws std::invalid_argument on violated invariants.
    void check() const;
};

struct LayerParams {
    Parameter ln1_gain, ln1_bias;
    Parameter w_q, w_k, w_v, w_o;
    Parameter ln2_gain, ln2_bias;
    Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// Every learnable tensor of the model. Weight matrices are Glorot-uniform,
// biases zero, layer-norm gains one; the draw order is fixed so a seed pins
// the full initialization.
struct ModelParams {
    Parameter input_w, input_b;  // d_in -> d projection applied before PE
    Parameter w_pv;              // m x d, node PE projection (P_V = H * w_pv)
    Parameter w_pe;              // n x d, hyperedge PE projection (P_E = H^T * w_pe)
    std::vector<LayerParams> layers;
    Parameter head_w, head_b;    // d -> c classifier over node rows

    std::vector<Parameter*> all();
};

ModelParams init_model_params(const Hypergraph& hg, int d_in, const HyperGTConfig& cfg,
                              Rng& rng);

struct ForwardTrace {
    Matrix logits;              // n x c, node rows only
    std::vector<Matrix> attn;   // per layer, head-averaged post-softmax (n+m)^2
    Tape::Id logits_id = -1;
    std::vector<Tape::Id> attn_ids;
};

// Row e = mean of X_V rows of the nodes in hyperedge e.
Matrix init_hyperedge_features(const Hypergraph& hg, const Matrix& x_v);

// Vertical stack, node rows first; throws on column-width mismatch.
Matrix assemble_input(const Matrix& x_v, const Matrix& x_e);

// (n+m) x d positional encodings: top block H*w_pv (or zero when
// use_node_pe is off), bottom block H^T*w_pe (or zero when use_edge_pe is off).
Matrix positional_encoding(const Hypergraph& hg, const ModelParams& params,
                           const HyperGTConfig& cfg);

struct AttentionOut {
    Tape::Id z;     // residual output, same shape as the input
    Tape::Id attn;  // head-averaged attention, rows sum to 1
};

// Pre-layer-norm multi-head self-attention with residual. Dropout (train
// mode only) hits the attention weights used for aggregation; the returned
// attention matrix is the pre-dropout softmax output.
AttentionOut attention_layer(Tape& tape, Tape::Id z, LayerParams& lp, const HyperGTConfig& cfg,
                             bool train_mode, Rng* dropout_rng);

// Pre-layer-norm FFN (linear -> gelu -> linear) with residual; dropout on
// the hidden activations in train mode.
Tape::Id ffn_block(Tape& tape, Tape::Id z, LayerParams& lp, const HyperGTConfig& cfg,
                   bool train_mode, Rng* dropout_rng);

// Full forward pass on the caller's tape: input assembly, projection, PE,
// `layers` rounds of attention + FFN, classifier over node rows.
ForwardTrace forward(Tape& tape, const Hypergraph& hg, const Matrix& x_v,
                     const std::optional<Matrix>& x_e, ModelParams& params,
                     const HyperGTConfig& cfg, bool train_mode, Rng* dropout_rng);

// Convenience eval-mode forward on an internal tape (values only).
ForwardTrace forward_eval(const Hypergraph& hg, const Matrix& x_v,
                          const std::optional<Matrix>& x_e, ModelParams& params,
                          const HyperGTConfig& cfg);

// Argmax per logits row; ties break toward the lowest class index.
std::vector<int> predict(const Matrix& logits);

}  // namespace hypergt
