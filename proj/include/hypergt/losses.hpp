#pragma once

#include <vector>

#include "hypergt/hypergraph.hpp"
#include "hypergt/matrix.hpp"
#include "hypergt/tape.hpp"

namespace hypergt {

struct LossBreakdown {
    double l_c = 0.0;
    double l_s = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

// Mean negative log-likelihood over the labeled nodes: softmax each labeled
// node's logits row, then -log of the probability at its true class.
double classification_loss(const Matrix& logits, const std::vector<int>& labels,
                           const std::vector<int>& labeled_set);

// Same loss as a tape node, differentiable w.r.t. the logits.
Tape::Id classification_loss_t(Tape& tape, Tape::Id logits, const std::vector<int>& labels,
                               const std::vector<int>& labeled_set);

// Precomputed sparse target for the structure loss: one entry per ordered
// incidence pair (i, j) of the star expansion, weighted 1/d_i. Owns the
// entries for the lifetime of any tape referencing them.
struct StructureLossTarget {
    int total_instances = 0;  // n + m
    std::vector<SparseEntry> entries;

    static StructureLossTarget from_star(const StarExpansion& se);
};

// -1/((n+m)L) * sum over layers and incidence pairs of (1/d_i) log A~_ij,
// log arguments clamped at kLogClamp. This is the sparse E_s form; the dense
// P_s form is algebraically identical and kept as a test oracle.
double structure_loss(const StructureLossTarget& target, const std::vector<Matrix>& attn);

Tape::Id structure_loss_t(Tape& tape, const StructureLossTarget& target,
                          const std::vector<Tape::Id>& attn_ids);

// total = l_c + lambda * l_s; throws on non-finite inputs.
LossBreakdown total_loss(double l_c, double l_s, double lambda);

}  // namespace hypergt
