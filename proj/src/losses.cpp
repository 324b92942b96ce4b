#include "hypergt/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace hypergt {

namespace {
std::vector<int> gather_targets(const std::vector<int>& labels,
                                const std::vector<int>& labeled_set, int n) {
    if (labeled_set.empty())
        throw std::invalid_argument("classification_loss: empty labeled set");
    std::vector<int> targets;
    targets.reserve(labeled_set.size());
    for (int v : labeled_set) {
        if (v < 0 || v >= n)
            throw std::invalid_argument("classification_loss: labeled node " + std::to_string(v) +
                                        " out of range");
        targets.push_back(labels[static_cast<size_t>(v)]);
    }
    return targets;
}
}  // namespace

double classification_loss(const Matrix& logits, const std::vector<int>& labels,
                           const std::vector<int>& labeled_set) {
    const auto targets = gather_targets(labels, labeled_set, logits.rows());
    Matrix rows(static_cast<int>(labeled_set.size()), logits.cols());
    for (size_t i = 0; i < labeled_set.size(); ++i)
        for (int j = 0; j < logits.cols(); ++j)
            rows(static_cast<int>(i), j) = logits(labeled_set[i], j);
    return cross_entropy_rows(row_softmax(rows), targets);
}

Tape::Id classification_loss_t(Tape& tape, Tape::Id logits, const std::vector<int>& labels,
                               const std::vector<int>& labeled_set) {
    const auto targets = gather_targets(labels, labeled_set, tape.val(logits).rows());
    const Tape::Id rows = tape.gather_rows(logits, labeled_set);
    return tape.cross_entropy_rows(tape.row_softmax(rows), targets);
}

StructureLossTarget StructureLossTarget::from_star(const StarExpansion& se) {
    StructureLossTarget t;
    t.total_instances = se.n + se.m;
    for (int i = 0; i < t.total_instances; ++i) {
        const double d = se.degrees[static_cast<size_t>(i)];
        if (d <= 0.0) continue;
        const double w = 1.0 / d;
        for (int j = 0; j < t.total_instances; ++j)
            if (se.adjacency(i, j) != 0.0) t.entries.push_back(SparseEntry{i, j, w});
    }
    return t;
}

double structure_loss(const StructureLossTarget& target, const std::vector<Matrix>& attn) {
    if (attn.empty()) throw std::invalid_argument("structure_loss: no attention matrices");
    double total = 0.0;
    for (const Matrix& a : attn) {
        if (a.rows() != target.total_instances || a.cols() != target.total_instances)
            throw std::invalid_argument("structure_loss: attention " + a.shape_str() +
                                        " does not match " +
                                        std::to_string(target.total_instances) + " instances");
        double layer_sum = 0.0;
        for (const auto& e : target.entries)
            layer_sum -= e.weight * std::log(std::max(a(e.row, e.col), kLogClamp));
        total += layer_sum;
    }
    return total / (static_cast<double>(target.total_instances) *
                    static_cast<double>(attn.size()));
}

Tape::Id structure_loss_t(Tape& tape, const StructureLossTarget& target,
                          const std::vector<Tape::Id>& attn_ids) {
    if (attn_ids.empty()) throw std::invalid_argument("structure_loss: no attention matrices");
    Tape::Id sum = -1;
    for (size_t l = 0; l < attn_ids.size(); ++l) {
        const Matrix& a = tape.val(attn_ids[l]);
        if (a.rows() != target.total_instances || a.cols() != target.total_instances)
            throw std::invalid_argument("structure_loss: attention " + a.shape_str() +
                                        " does not match " +
                                        std::to_string(target.total_instances) + " instances");
        const Tape::Id term = tape.weighted_neglog(attn_ids[l], &target.entries);
        sum = l == 0 ? term : tape.add(sum, term);
    }
    return tape.scale(sum, 1.0 / (static_cast<double>(target.total_instances) *
                                  static_cast<double>(attn_ids.size())));
}

LossBreakdown total_loss(double l_c, double l_s, double lambda) {
    if (!std::isfinite(l_c) || !std::isfinite(l_s) || !std::isfinite(lambda))
        throw std::invalid_argument("total_loss: non-finite input");
    return LossBreakdown{l_c, l_s, l_c + lambda * l_s, lambda};
}

}  // namespace hypergt
