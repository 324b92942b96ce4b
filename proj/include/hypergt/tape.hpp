#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hypergt/matrix.hpp"
#include "hypergt/rng.hpp"

namespace hypergt {

// A learnable tensor plus its gradient buffer. Gradients are zeroed at the
// start of every backward pass and written by Tape::backward.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
};

struct SparseEntry {
    int row;
    int col;
    double weight;
};

// Minimal reverse-mode tape over Matrix values. Every op records a closure
// that routes the output gradient to its inputs; backward() runs them in
// reverse creation order and accumulates leaf gradients into Parameter::grad.
// A tape is single-use: build one graph, call backward once.
class Tape {
public:
    using Id = int;

    Id input(Matrix v);
    Id param(Parameter& p);

    // References stay valid only until the next op is recorded (node storage
    // may reallocate); copy the Matrix to keep a value across ops.
    const Matrix& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Gradient of the last backward() root w.r.t. this node (for tests).
    const Matrix& grad_of(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }

    Id add(Id a, Id b);
    // Adds a 1-row bias to every row of a.
    Id add_bias(Id a, Id bias);
    Id scale(Id a, double s);
    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id row_softmax(Id a);
    Id gelu(Id a);
    // Per-row normalization with learnable 1-row gain and bias.
    Id layer_norm(Id x, Id gain, Id bias);
    Id concat_rows(Id top, Id bottom);
    Id slice_rows(Id a, int begin, int count);
    Id gather_rows(Id a, std::vector<int> index);
    Id slice_cols(Id a, int begin, int count);
    Id concat_cols(const std::vector<Id>& parts);
    // Elementwise mean of same-shaped nodes in a single pass.
    Id mean_of(const std::vector<Id>& parts);
    // Inverted dropout; draws one mask from rng at build time.
    Id dropout(Id a, double rate, Rng& rng);
    // Scalar: mean over rows of -log(pred[row][target]), clamped at kLogClamp.
    Id cross_entropy_rows(Id pred, std::vector<int> targets);
    // Scalar: sum of w * -log(max(m[r][c], kLogClamp)) over entries.
    Id weighted_neglog(Id m, const std::vector<SparseEntry>* entries);

    // root must be 1x1. Zeroes all registered parameter gradients first.
    void backward(Id root);

    double scalar(Id id) const { return val(id)(0, 0); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> back;
    };

    Id push(Matrix value, std::function<void()> back = nullptr);
    Matrix& grad_buf(Id id);

    std::vector<Node> nodes_;
    std::vector<std::pair<Id, Parameter*>> params_;
};

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of analytic gradients. `loss_with_grad` must
// recompute the loss from the parameters' current values and leave analytic
// gradients in each Parameter::grad. Relative error per entry is
// |a - f| / max(1e-8, |a| + |f|).
GradcheckReport finite_diff_gradcheck(const std::function<double()>& loss_with_grad,
                                      const std::vector<Parameter*>& params,
                                      double eps = 1e-5);

// Glorot-uniform init: entries ~ U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int rows, int cols, Rng& rng);

}  // namespace hypergt
