#include "hypergt/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace hypergt {

Tape::Id Tape::push(Matrix value, std::function<void()> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
    return static_cast<Id>(nodes_.size()) - 1;
}

Matrix& Tape::grad_buf(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty() && n.value.size() > 0) n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

Tape::Id Tape::input(Matrix v) { return push(std::move(v)); }

Tape::Id Tape::param(Parameter& p) {
    const Id id = push(p.value);
    params_.emplace_back(id, &p);
    return id;
}

Tape::Id Tape::add(Id a, Id b) {
    Id out = push(hypergt::add(val(a), val(b)));
    nodes_[static_cast<size_t>(out)].back = [this, a, b, out] {
        add_in_place(grad_buf(a), grad_of(out));
        add_in_place(grad_buf(b), grad_of(out));
    };
    return out;
}

Tape::Id Tape::add_bias(Id a, Id bias) {
    const Matrix& x = val(a);
    const Matrix& bv = val(bias);
    if (bv.rows() != 1 || bv.cols() != x.cols())
        throw std::invalid_argument("add_bias: bias " + bv.shape_str() + " for " + x.shape_str());
    Matrix y = x;
    for (int i = 0; i < y.rows(); ++i)
        for (int j = 0; j < y.cols(); ++j) y(i, j) += bv(0, j);
    Id out = push(std::move(y));
    nodes_[static_cast<size_t>(out)].back = [this, a, bias, out] {
        const Matrix& g = grad_of(out);
        add_in_place(grad_buf(a), g);
        Matrix& gb = grad_buf(bias);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
    };
    return out;
}

Tape::Id Tape::scale(Id a, double s) {
    Id out = push(hypergt::scale(val(a), s));
    nodes_[static_cast<size_t>(out)].back = [this, a, s, out] {
        add_in_place(grad_buf(a), hypergt::scale(grad_of(out), s));
    };
    return out;
}

Tape::Id Tape::matmul(Id a, Id b) {
    Id out = push(hypergt::matmul(val(a), val(b)));
    nodes_[static_cast<size_t>(out)].back = [this, a, b, out] {
        const Matrix& g = grad_of(out);
        add_in_place(grad_buf(a), matmul_nt(g, val(b)));
        add_in_place(grad_buf(b), matmul_tn(val(a), g));
    };
    return out;
}

Tape::Id Tape::transpose(Id a) {
    Id out = push(hypergt::transpose(val(a)));
    nodes_[static_cast<size_t>(out)].back = [this, a, out] {
        add_in_place(grad_buf(a), hypergt::transpose(grad_of(out)));
    };
    return out;
}

Tape::Id Tape::row_softmax(Id a) {
    Id out = push(hypergt::row_softmax(val(a)));
    nodes_[static_cast<size_t>(out)].back = [this, a, out] {
        const Matrix& y = val(out);
        const Matrix& g = grad_of(out);
        Matrix& gx = grad_buf(a);
        for (int i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
            for (int j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
        }
    };
    return out;
}

Tape::Id Tape::gelu(Id a) {
    Id out = push(hypergt::gelu(val(a)));
    nodes_[static_cast<size_t>(out)].back = [this, a, out] {
        const Matrix& g = grad_of(out);
        const Matrix dg = gelu_grad(val(a));
        Matrix& gx = grad_buf(a);
        const int64_t n = g.size();
        for (int64_t i = 0; i < n; ++i) gx.data()[i] += g.data()[i] * dg.data()[i];
    };
    return out;
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id bias) {
    constexpr double kEps = 1e-5;
    const Matrix& xv = val(x);
    const Matrix& gv = val(gain);
    const Matrix& bv = val(bias);
    const int d = xv.cols();
    if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d)
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(d));

    // Cache the normalized activations and inverse std for the backward rule.
    auto xhat = std::make_shared<Matrix>(Matrix::uninit(xv.rows(), d));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(xv.rows()));
    Matrix y = Matrix::uninit(xv.rows(), d);
    for (int i = 0; i < xv.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xv(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xv(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + kEps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        for (int j = 0; j < d; ++j) {
            const double h = (xv(i, j) - mean) * is;
            (*xhat)(i, j) = h;
            y(i, j) = h * gv(0, j) + bv(0, j);
        }
    }
    Id out = push(std::move(y));
    nodes_[static_cast<size_t>(out)].back = [this, x, gain, bias, out, xhat, inv_std, d] {
        const Matrix& g = grad_of(out);
        const Matrix& gv = val(gain);
        Matrix& gx = grad_buf(x);
        Matrix& ggain = grad_buf(gain);
        Matrix& gbias = grad_buf(bias);
        for (int i = 0; i < g.rows(); ++i) {
            double sum_dh = 0.0;
            double sum_dh_h = 0.0;
            for (int j = 0; j < d; ++j) {
                const double dh = g(i, j) * gv(0, j);
                sum_dh += dh;
                sum_dh_h += dh * (*xhat)(i, j);
                ggain(0, j) += g(i, j) * (*xhat)(i, j);
                gbias(0, j) += g(i, j);
            }
            const double is = (*inv_std)[static_cast<size_t>(i)];
            for (int j = 0; j < d; ++j) {
                const double dh = g(i, j) * gv(0, j);
                gx(i, j) += is * (dh - sum_dh / d - (*xhat)(i, j) * sum_dh_h / d);
            }
        }
    };
    return out;
}

Tape::Id Tape::concat_rows(Id top, Id bottom) {
    const int rt = val(top).rows();
    Id out = push(hypergt::concat_rows(val(top), val(bottom)));
    nodes_[static_cast<size_t>(out)].back = [this, top, bottom, out, rt] {
        const Matrix& g = grad_of(out);
        Matrix& gt = grad_buf(top);
        Matrix& gb = grad_buf(bottom);
        for (int i = 0; i < gt.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) gt(i, j) += g(i, j);
        for (int i = 0; i < gb.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) gb(i, j) += g(rt + i, j);
    };
    return out;
}

Tape::Id Tape::slice_rows(Id a, int begin, int count) {
    Id out = push(hypergt::slice_rows(val(a), begin, count));
    nodes_[static_cast<size_t>(out)].back = [this, a, begin, out] {
        const Matrix& g = grad_of(out);
        Matrix& ga = grad_buf(a);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga(begin + i, j) += g(i, j);
    };
    return out;
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> index) {
    const Matrix& x = val(a);
    Matrix y = Matrix::uninit(static_cast<int>(index.size()), x.cols());
    for (size_t i = 0; i < index.size(); ++i) {
        const int r = index[i];
        if (r < 0 || r >= x.rows())
            throw std::invalid_argument("gather_rows: index " + std::to_string(r) + " out of " +
                                        std::to_string(x.rows()) + " rows");
        for (int j = 0; j < x.cols(); ++j) y(static_cast<int>(i), j) = x(r, j);
    }
    Id out = push(std::move(y));
    auto idx = std::make_shared<std::vector<int>>(std::move(index));
    nodes_[static_cast<size_t>(out)].back = [this, a, out, idx] {
        const Matrix& g = grad_of(out);
        Matrix& ga = grad_buf(a);
        for (size_t i = 0; i < idx->size(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga((*idx)[i], j) += g(static_cast<int>(i), j);
    };
    return out;
}

Tape::Id Tape::slice_cols(Id a, int begin, int count) {
    const Matrix& x = val(a);
    if (begin < 0 || count < 0 || begin + count > x.cols())
        throw std::invalid_argument("slice_cols: range out of " + std::to_string(x.cols()) +
                                    " cols");
    Matrix y = Matrix::uninit(x.rows(), count);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < count; ++j) y(i, j) = x(i, begin + j);
    Id out = push(std::move(y));
    nodes_[static_cast<size_t>(out)].back = [this, a, begin, out] {
        const Matrix& g = grad_of(out);
        Matrix& ga = grad_buf(a);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) ga(i, begin + j) += g(i, j);
    };
    return out;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    int cols = 0;
    const int rows = val(parts[0]).rows();
    for (Id p : parts) {
        if (val(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += val(p).cols();
    }
    Matrix y = Matrix::uninit(rows, cols);
    int off = 0;
    for (Id p : parts) {
        const Matrix& x = val(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < x.cols(); ++j) y(i, off + j) = x(i, j);
        off += x.cols();
    }
    Id out = push(std::move(y));
    auto ps = std::make_shared<std::vector<Id>>(parts);
    nodes_[static_cast<size_t>(out)].back = [this, ps, out] {
        const Matrix& g = grad_of(out);
        int off = 0;
        for (Id p : *ps) {
            Matrix& gp = grad_buf(p);
            for (int i = 0; i < gp.rows(); ++i)
                for (int j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, off + j);
            off += gp.cols();
        }
    };
    return out;
}

Tape::Id Tape::mean_of(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("mean_of: no parts");
    const Matrix& first = val(parts[0]);
    Matrix y = Matrix::uninit(first.rows(), first.cols());
    const double inv = 1.0 / static_cast<double>(parts.size());
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const Matrix& x = val(parts[pi]);
        if (!x.same_shape(first)) throw std::invalid_argument("mean_of: shape mismatch");
        double* py = y.data();
        const double* px = x.data();
        const int64_t n = y.size();
        if (pi == 0)
            for (int64_t i = 0; i < n; ++i) py[i] = px[i] * inv;
        else
            for (int64_t i = 0; i < n; ++i) py[i] += px[i] * inv;
    }
    Id out = push(std::move(y));
    auto ps = std::make_shared<std::vector<Id>>(parts);
    nodes_[static_cast<size_t>(out)].back = [this, ps, out, inv] {
        const Matrix& g = grad_of(out);
        for (Id p : *ps) {
            Matrix& gp = grad_buf(p);
            double* pg = gp.data();
            const double* src = g.data();
            const int64_t n = gp.size();
            for (int64_t i = 0; i < n; ++i) pg[i] += src[i] * inv;
        }
    };
    return out;
}

Tape::Id Tape::dropout(Id a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
    const Matrix& x = val(a);
    auto kept = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x.size()));
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix y = Matrix::uninit(x.rows(), x.cols());
    for (int64_t i = 0; i < x.size(); ++i) {
        const bool keep = !rng.bernoulli(rate);
        (*kept)[static_cast<size_t>(i)] = keep;
        y.data()[i] = keep ? x.data()[i] * keep_scale : 0.0;
    }
    Id out = push(std::move(y));
    nodes_[static_cast<size_t>(out)].back = [this, a, out, kept, keep_scale] {
        const Matrix& g = grad_of(out);
        Matrix& ga = grad_buf(a);
        for (int64_t i = 0; i < g.size(); ++i)
            if ((*kept)[static_cast<size_t>(i)]) ga.data()[i] += g.data()[i] * keep_scale;
    };
    return out;
}

Tape::Id Tape::cross_entropy_rows(Id pred, std::vector<int> targets) {
    const double loss = hypergt::cross_entropy_rows(val(pred), targets);
    Id out = push(Matrix(1, 1, loss));
    auto tg = std::make_shared<std::vector<int>>(std::move(targets));
    nodes_[static_cast<size_t>(out)].back = [this, pred, out, tg] {
        const double g = grad_of(out)(0, 0);
        const Matrix& p = val(pred);
        Matrix& gp = grad_buf(pred);
        const double inv_n = 1.0 / p.rows();
        for (int i = 0; i < p.rows(); ++i) {
            const int t = (*tg)[static_cast<size_t>(i)];
            // Clamped entries sit on the flat part of -log(max(p, clamp)).
            if (p(i, t) > kLogClamp) gp(i, t) -= g * inv_n / p(i, t);
        }
    };
    return out;
}

Tape::Id Tape::weighted_neglog(Id m, const std::vector<SparseEntry>* entries) {
    const Matrix& x = val(m);
    double total = 0.0;
    for (const auto& e : *entries) total -= e.weight * std::log(std::max(x(e.row, e.col), kLogClamp));
    Id out = push(Matrix(1, 1, total));
    nodes_[static_cast<size_t>(out)].back = [this, m, out, entries] {
        const double g = grad_of(out)(0, 0);
        const Matrix& x = val(m);
        Matrix& gx = grad_buf(m);
        for (const auto& e : *entries)
            if (x(e.row, e.col) > kLogClamp) gx(e.row, e.col) -= g * e.weight / x(e.row, e.col);
    };
    return out;
}

void Tape::backward(Id root) {
    const Matrix& rv = val(root);
    if (rv.rows() != 1 || rv.cols() != 1)
        throw std::invalid_argument("backward: root must be a 1x1 scalar, got " + rv.shape_str());
    for (auto& [id, p] : params_) p->grad.fill(0.0);
    grad_buf(root)(0, 0) = 1.0;
    for (Id i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad.empty() || !n.back) continue;
        n.back();
    }
    for (auto& [id, p] : params_) {
        const Matrix& g = nodes_[static_cast<size_t>(id)].grad;
        if (!g.empty()) add_in_place(p->grad, g);
    }
}

GradcheckReport finite_diff_gradcheck(const std::function<double()>& loss_with_grad,
                                      const std::vector<Parameter*>& params, double eps) {
    const double base = loss_with_grad();
    if (!std::isfinite(base)) throw std::runtime_error("gradcheck: non-finite loss at base point");

    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const Parameter* p : params) analytic.push_back(p->grad);

    GradcheckReport rep;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (int64_t k = 0; k < p->value.size(); ++k) {
            const double orig = p->value.data()[k];
            p->value.data()[k] = orig + eps;
            const double lp = loss_with_grad();
            p->value.data()[k] = orig - eps;
            const double lm = loss_with_grad();
            p->value.data()[k] = orig;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw std::runtime_error("gradcheck: non-finite loss perturbing " + p->name);
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[pi].data()[k];
            const double rel =
                std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p->name;
                rep.worst_index = static_cast<int>(k);
                rep.analytic = an;
                rep.numeric = fd;
            }
        }
    }
    // The perturbation loop clobbered the gradients; put the analytic ones back.
    for (size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
    return rep;
}

Matrix glorot_uniform(int rows, int cols, Rng& rng) {
    const double a = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-a, a);
    return m;
}

}  // namespace hypergt
