#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hypergt/matrix.hpp"
#include "hypergt/rng.hpp"
#include "hypergt/tape.hpp"

using namespace hypergt;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
    return m;
}

// Probe reduction: u^T * M * v collapses any matrix node to a scalar with
// dense, generic gradients.
Tape::Id probe(Tape& tape, Tape::Id m, const Matrix& u, const Matrix& v) {
    return tape.matmul(tape.matmul(tape.input(u), m), tape.input(v));
}

double kernel_gradcheck(const std::function<Tape::Id(Tape&, Parameter&)>& graph, Parameter& p,
                        double eps = 1e-5) {
    const auto loss_with_grad = [&]() {
        Tape tape;
        const Tape::Id loss = graph(tape, p);
        tape.backward(loss);
        return tape.scalar(loss);
    };
    return finite_diff_gradcheck(loss_with_grad, {&p}, eps).max_rel_err;
}

}  // namespace

TEST_CASE("backward of matmul against finite differences") {
    Rng rng(21);
    Parameter w("w", random_matrix(5, 4, rng));
    const Matrix b = random_matrix(4, 6, rng);
    const Matrix u = random_matrix(1, 5, rng);
    const Matrix v = random_matrix(6, 1, rng);
    const double err = kernel_gradcheck(
        [&](Tape& t, Parameter& p) { return probe(t, t.matmul(t.param(p), t.input(b)), u, v); },
        w);
    CHECK(err < 1e-6);

    // Same check with the parameter on the right of the product.
    Parameter w2("w2", random_matrix(4, 6, rng));
    const Matrix a = random_matrix(5, 4, rng);
    const double err2 = kernel_gradcheck(
        [&](Tape& t, Parameter& p) { return probe(t, t.matmul(t.input(a), t.param(p)), u, v); },
        w2);
    CHECK(err2 < 1e-6);
}

TEST_CASE("backward of elementwise and shape kernels") {
    Rng rng(22);
    const Matrix u3 = random_matrix(1, 3, rng);
    const Matrix u5 = random_matrix(1, 5, rng);
    const Matrix v4 = random_matrix(4, 1, rng);
    const Matrix other = random_matrix(3, 4, rng);

    Parameter p("p", random_matrix(3, 4, rng));
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.add(t.param(q), t.input(other)), u3, v4);
          }, p) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.scale(t.param(q), -1.7), u3, v4);
          }, p) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.transpose(t.param(q)), transpose(v4), transpose(u3));
          }, p) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.gelu(t.param(q)), u3, v4);
          }, p) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.row_softmax(t.param(q)), u3, v4);
          }, p) < 1e-6);

    Parameter bias("bias", random_matrix(1, 4, rng));
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.add_bias(t.input(other), t.param(q)), u3, v4);
          }, bias) < 1e-6);

    Parameter top("top", random_matrix(2, 4, rng));
    const Matrix u1 = random_matrix(1, 1, rng);
    const Matrix u2 = random_matrix(1, 2, rng);
    const Matrix v2 = random_matrix(2, 1, rng);
    const Matrix side = random_matrix(2, 3, rng);
    const Matrix v7 = random_matrix(7, 1, rng);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.concat_rows(t.param(q), t.input(other)), u5, v4);
          }, top) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.slice_rows(t.param(q), 1, 1), u1, v4);
          }, top) < 1e-6);
    // Duplicate gather indices must accumulate.
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.gather_rows(t.param(q), {1, 0, 1}), u3, v4);
          }, top) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return probe(t, t.slice_cols(t.param(q), 1, 2), u2, v2);
          }, top) < 1e-6);
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              const Tape::Id a = t.param(q);
              return probe(t, t.concat_cols({a, t.input(side)}), u2, v7);
          }, top) < 1e-6);
}

TEST_CASE("backward of layer_norm") {
    Rng rng(23);
    Parameter x("x", random_matrix(4, 6, rng));
    Parameter gain("gain", random_matrix(1, 6, rng, 0.5, 1.5));
    Parameter bias("bias", random_matrix(1, 6, rng));
    const Matrix u = random_matrix(1, 4, rng);
    const Matrix v = random_matrix(6, 1, rng);

    const auto loss_with_grad = [&]() {
        Tape tape;
        const Tape::Id y = tape.layer_norm(tape.param(x), tape.param(gain), tape.param(bias));
        const Tape::Id loss = probe(tape, y, u, v);
        tape.backward(loss);
        return tape.scalar(loss);
    };
    const auto rep = finite_diff_gradcheck(loss_with_grad, {&x, &gain, &bias});
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("backward of the scalar losses") {
    Rng rng(24);
    Parameter logits("logits", random_matrix(5, 3, rng));
    const std::vector<int> targets{0, 2, 1, 1, 0};
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return t.cross_entropy_rows(t.row_softmax(t.param(q)), targets);
          }, logits) < 1e-6);

    const std::vector<SparseEntry> entries{{0, 1, 0.5}, {1, 2, 1.0}, {3, 0, 0.25}, {4, 4, 2.0}};
    Parameter scores("scores", random_matrix(5, 5, rng));
    CHECK(kernel_gradcheck([&](Tape& t, Parameter& q) {
              return t.weighted_neglog(t.row_softmax(t.param(q)), &entries);
          }, scores) < 1e-6);
}

TEST_CASE("quadratic loss gradcheck is near machine precision") {
    Rng rng(25);
    Parameter w("w", random_matrix(4, 3, rng));
    const Matrix x = random_matrix(3, 1, rng);
    const auto loss_with_grad = [&]() {
        Tape tape;
        const Tape::Id wx = tape.matmul(tape.param(w), tape.input(x));
        const Tape::Id loss = tape.scale(tape.matmul(tape.transpose(wx), wx), 0.5);
        tape.backward(loss);
        return tape.scalar(loss);
    };
    CHECK(finite_diff_gradcheck(loss_with_grad, {&w}).max_rel_err < 1e-8);
}

TEST_CASE("gradcheck with no parameters is vacuously zero") {
    const auto loss = [] { return 1.25; };
    CHECK(finite_diff_gradcheck(loss, {}).max_rel_err == 0.0);
}

TEST_CASE("gradcheck reports non-finite losses") {
    Parameter w("w", Matrix(1, 1, 2.0));
    const auto loss = [&]() {
        Tape tape;
        // log(max(x, clamp)) of a softmax row is fine; force a NaN instead.
        const double v = w.value(0, 0);
        w.grad(0, 0) = 1.0;
        return v > 1.0 ? std::numeric_limits<double>::quiet_NaN() : v;
    };
    CHECK_THROWS_AS(finite_diff_gradcheck(loss, {&w}), std::runtime_error);
}

TEST_CASE("parameter gradients are zeroed at the start of backward") {
    Rng rng(26);
    Parameter w("w", random_matrix(2, 2, rng));
    w.grad.fill(123.0);
    Tape tape;
    const Tape::Id loss =
        probe(tape, tape.param(w), Matrix::from_rows({{1, 1}}), Matrix::from_rows({{1}, {1}}));
    tape.backward(loss);
    // Every entry's gradient is exactly 1 here: stale 123s must be gone.
    for (int64_t i = 0; i < w.grad.size(); ++i) CHECK(w.grad.data()[i] == doctest::Approx(1.0));
}

TEST_CASE("dropout scales kept entries and blocks gradient on dropped ones") {
    Rng rng(27);
    const Matrix x = random_matrix(8, 8, rng, 0.5, 1.5);  // strictly nonzero
    Parameter p("p", x);
    Tape tape;
    Rng drop_rng(99);
    const Tape::Id xd = tape.dropout(tape.param(p), 0.4, drop_rng);
    const Matrix y = tape.val(xd);  // copy: later ops may reallocate node storage

    int kept = 0;
    for (int64_t i = 0; i < y.size(); ++i) {
        if (y.data()[i] == 0.0) continue;
        ++kept;
        CHECK(y.data()[i] == doctest::Approx(x.data()[i] / 0.6));
    }
    CHECK(kept > 0);
    CHECK(kept < y.size());

    const Tape::Id loss = probe(tape, xd, Matrix(1, 8, 1.0), Matrix(8, 1, 1.0));
    tape.backward(loss);
    for (int64_t i = 0; i < y.size(); ++i) {
        if (y.data()[i] == 0.0)
            CHECK(p.grad.data()[i] == 0.0);
        else
            CHECK(p.grad.data()[i] == doctest::Approx(1.0 / 0.6));
    }
}

TEST_CASE("dropout with rate zero is the identity node") {
    Rng rng(28);
    Parameter p("p", random_matrix(3, 3, rng));
    Tape tape;
    Rng drop_rng(1);
    const Tape::Id a = tape.param(p);
    CHECK(tape.dropout(a, 0.0, drop_rng) == a);
}

TEST_CASE("glorot bounds follow fan-in and fan-out") {
    Rng rng(29);
    const Matrix w = glorot_uniform(30, 50, rng);
    const double bound = std::sqrt(6.0 / 80.0);
    double mx = 0.0;
    for (int64_t i = 0; i < w.size(); ++i) mx = std::max(mx, std::abs(w.data()[i]));
    CHECK(mx <= bound);
    CHECK(mx > 0.5 * bound);  // something actually got drawn near the edge
}
