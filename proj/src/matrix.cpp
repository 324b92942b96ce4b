#include "hypergt/matrix.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hypergt {

namespace {
std::atomic<int> g_max_threads{1};

// Attention-sized buffers (a few MB) churn every training step; keeping them
// on the main heap instead of per-allocation mmaps avoids repeated page
// faults.
#if defined(__GLIBC__)
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 64 << 20);
    return true;
}();
#endif

void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

// Persistent workers parked on a condition variable; spawning a thread per
// kernel call costs more than the kernels themselves at these sizes.
class RowPool {
public:
    static RowPool& instance() {
        static RowPool pool;
        return pool;
    }

    void run(int threads, int rows, const std::function<void(int, int)>& fn) {
        ensure_workers(threads - 1);
        {
            std::unique_lock<std::mutex> lk(mu_);
            fn_ = &fn;
            rows_ = rows;
            nthreads_ = threads;
            pending_ = threads - 1;
            ++generation_;
        }
        cv_.notify_all();
        const int chunk = (rows + threads - 1) / threads;
        fn(0, std::min(rows, chunk));
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        fn_ = nullptr;
    }

    ~RowPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

private:
    void ensure_workers(int n) {
        std::unique_lock<std::mutex> lk(mu_);
        while (static_cast<int>(workers_.size()) < n) {
            const int idx = static_cast<int>(workers_.size());
            workers_.emplace_back([this, idx] { worker_loop(idx); });
        }
    }

    void worker_loop(int idx) {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(mu_);
            cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            if (idx >= nthreads_ - 1) continue;  // not a participant this round
            const auto* fn = fn_;
            const int rows = rows_;
            const int threads = nthreads_;
            lk.unlock();
            const int chunk = (rows + threads - 1) / threads;
            const int lo = (idx + 1) * chunk;
            const int hi = std::min(rows, lo + chunk);
            if (lo < hi) (*fn)(lo, hi);
            lk.lock();
            if (--pending_ == 0) done_cv_.notify_one();
        }
    }

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::vector<std::thread> workers_;
    const std::function<void(int, int)>* fn_ = nullptr;
    int rows_ = 0;
    int nthreads_ = 1;
    int pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

thread_local int g_serial_depth = 0;

// Splits [0, rows) across worker threads when enabled. Each output row is
// written by exactly one thread, so results do not depend on the thread count.
void parallel_rows(int rows, const std::function<void(int, int)>& fn) {
    const int threads = std::min(max_threads(), rows);
    if (threads <= 1 || rows < 64 || g_serial_depth > 0) {
        fn(0, rows);
        return;
    }
    RowPool::instance().run(threads, rows, fn);
}
}  // namespace

SerialKernelScope::SerialKernelScope() { ++g_serial_depth; }
SerialKernelScope::~SerialKernelScope() { --g_serial_depth; }

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
}

Matrix::Matrix(int rows, int cols, Uninit) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
    data_.resize(static_cast<size_t>(rows) * cols);
}

Matrix Matrix::uninit(int rows, int cols) { return Matrix(rows, cols, Uninit{}); }

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c)
            throw std::invalid_argument("Matrix::from_rows: ragged rows");
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }
int max_threads() { return g_max_threads.load(); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    Matrix c = Matrix::uninit(a.rows(), b.cols());
    const int K = a.cols();
    const int N = b.cols();
    parallel_rows(a.rows(), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            double* ci = c.row(i);
            const double* ai = a.row(i);
            int k;
            if (K >= 4) {
                const double a0 = ai[0];
                const double a1 = ai[1];
                const double a2 = ai[2];
                const double a3 = ai[3];
                const double* b0 = b.row(0);
                const double* b1 = b.row(1);
                const double* b2 = b.row(2);
                const double* b3 = b.row(3);
                for (int j = 0; j < N; ++j)
                    ci[j] = a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
                k = 4;
            } else {
                for (int j = 0; j < N; ++j) ci[j] = 0.0;
                k = 0;
            }
            for (; k + 4 <= K; k += 4) {
                const double a0 = ai[k];
                const double a1 = ai[k + 1];
                const double a2 = ai[k + 2];
                const double a3 = ai[k + 3];
                const double* b0 = b.row(k);
                const double* b1 = b.row(k + 1);
                const double* b2 = b.row(k + 2);
                const double* b3 = b.row(k + 3);
                for (int j = 0; j < N; ++j)
                    ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            for (; k < K; ++k) {
                const double aik = ai[k];
                const double* bk = b.row(k);
                for (int j = 0; j < N; ++j) ci[j] += aik * bk[j];
            }
        }
    });
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t = Matrix::uninit(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
    return matmul(a, transpose(b));
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    const int N = b.cols();
    const int K = a.cols();
    const int rows = a.rows();
    int i = 0;
    for (; i + 4 <= rows; i += 4) {
        const double* a0 = a.row(i);
        const double* a1 = a.row(i + 1);
        const double* a2 = a.row(i + 2);
        const double* a3 = a.row(i + 3);
        const double* b0 = b.row(i);
        const double* b1 = b.row(i + 1);
        const double* b2 = b.row(i + 2);
        const double* b3 = b.row(i + 3);
        for (int k = 0; k < K; ++k) {
            const double w0 = a0[k];
            const double w1 = a1[k];
            const double w2 = a2[k];
            const double w3 = a3[k];
            double* ck = c.row(k);
            for (int j = 0; j < N; ++j)
                ck[j] += w0 * b0[j] + w1 * b1[j] + w2 * b2[j] + w3 * b3[j];
        }
    }
    for (; i < rows; ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (int k = 0; k < K; ++k) {
            const double aik = ai[k];
            double* ck = c.row(k);
            for (int j = 0; j < N; ++j) ck[j] += aik * bi[j];
        }
    }
    return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Matrix c = a;
    add_in_place(c, b);
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    scale_in_place(c, s);
    return c;
}

void add_in_place(Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("add_in_place", a, b);
    double* pa = a.data();
    const double* pb = b.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) pa[i] += pb[i];
}

void scale_in_place(Matrix& a, double s) {
    double* pa = a.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) pa[i] *= s;
}

Matrix row_softmax(const Matrix& a) {
    Matrix out = Matrix::uninit(a.rows(), a.cols());
    const int cols = a.cols();
    parallel_rows(a.rows(), [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            const double* x = a.row(i);
            double* y = out.row(i);
            double mx = x[0];
            for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
            double sum = 0.0;
            for (int j = 0; j < cols; ++j) {
                y[j] = std::exp(x[j] - mx);
                sum += y[j];
            }
            const double inv = 1.0 / sum;
            for (int j = 0; j < cols; ++j) y[j] *= inv;
        }
    });
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Matrix gelu(const Matrix& a) {
    Matrix out = Matrix::uninit(a.rows(), a.cols());
    const int cols = a.cols();
    parallel_rows(a.rows(), [&](int lo, int hi) {
        const double* x = a.row(lo);
        double* y = out.row(lo);
        const int64_t n = static_cast<int64_t>(hi - lo) * cols;
        for (int64_t i = 0; i < n; ++i) y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    });
    return out;
}

Matrix gelu_grad(const Matrix& a) {
    Matrix out = Matrix::uninit(a.rows(), a.cols());
    const int cols = a.cols();
    parallel_rows(a.rows(), [&](int lo, int hi) {
        const double* x = a.row(lo);
        double* y = out.row(lo);
        const int64_t n = static_cast<int64_t>(hi - lo) * cols;
        for (int64_t i = 0; i < n; ++i) {
            const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
            y[i] = cdf + x[i] * pdf;
        }
    });
    return out;
}

double cross_entropy_rows(const Matrix& pred, const std::vector<int>& targets) {
    if (pred.rows() != static_cast<int>(targets.size()))
        throw std::invalid_argument("cross_entropy_rows: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(pred.rows()) + " rows");
    if (pred.rows() == 0) throw std::invalid_argument("cross_entropy_rows: no rows");
    double total = 0.0;
    for (int i = 0; i < pred.rows(); ++i) {
        const int t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= pred.cols())
            throw std::invalid_argument("cross_entropy_rows: target out of range at row " +
                                        std::to_string(i));
        total -= std::log(std::max(pred(i, t), kLogClamp));
    }
    return total / pred.rows();
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
    if (top.cols() != bottom.cols() && top.rows() > 0 && bottom.rows() > 0)
        shape_error("concat_rows", top, bottom);
    const int cols = top.rows() > 0 ? top.cols() : bottom.cols();
    Matrix out = Matrix::uninit(top.rows() + bottom.rows(), cols);
    for (int i = 0; i < top.rows(); ++i)
        std::copy(top.row(i), top.row(i) + cols, out.row(i));
    for (int i = 0; i < bottom.rows(); ++i)
        std::copy(bottom.row(i), bottom.row(i) + cols, out.row(top.rows() + i));
    return out;
}

Matrix slice_rows(const Matrix& a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > a.rows())
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                    std::to_string(begin + count) + ") out of " +
                                    std::to_string(a.rows()) + " rows");
    Matrix out = Matrix::uninit(count, a.cols());
    for (int i = 0; i < count; ++i)
        std::copy(a.row(begin + i), a.row(begin + i) + a.cols(), out.row(i));
    return out;
}

double spectral_norm(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) return 0.0;
    // Work on the smaller Gram matrix; cyclic Jacobi drives it to diagonal.
    Matrix g = a.rows() <= a.cols() ? matmul_nt(a, a) : matmul_tn(a, a);
    const int n = g.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += g(p, q) * g(p, q);
        if (off < 1e-28 * (n * n)) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (g(p, q) == 0.0) continue;
                const double theta = 0.5 * std::atan2(2.0 * g(p, q), g(q, q) - g(p, p));
                const double c = std::cos(theta);
                const double s = std::sin(theta);
                for (int k = 0; k < n; ++k) {
                    const double gkp = g(k, p);
                    const double gkq = g(k, q);
                    g(k, p) = c * gkp - s * gkq;
                    g(k, q) = s * gkp + c * gkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double gpk = g(p, k);
                    const double gqk = g(q, k);
                    g(p, k) = c * gpk - s * gqk;
                    g(q, k) = s * gpk + c * gqk;
                }
            }
        }
    }
    double lmax = 0.0;
    for (int i = 0; i < n; ++i) lmax = std::max(lmax, g(i, i));
    return std::sqrt(std::max(lmax, 0.0));
}

bool has_nonfinite(const Matrix& a) {
    const double* p = a.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return true;
    return false;
}

void check_finite(const Matrix& a, const char* what) {
    if (has_nonfinite(a))
        throw std::runtime_error(std::string("non-finite values in ") + what);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) shape_error("max_abs_diff", a, b);
    double m = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
    return m;
}

}  // namespace hypergt
