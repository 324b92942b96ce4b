#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace hypergt {

namespace detail {
// std::allocator whose no-argument construct leaves doubles uninitialized,
// so Matrix::uninit can skip the zero-fill that dominates hot-loop cost.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = DefaultInitAllocator<U>;
    };
    template <typename U>
    void construct(U* p) noexcept(noexcept(::new (static_cast<void*>(p)) U)) {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};
}  // namespace detail

// Dense row-major matrix of 64-bit floats. The workhorse type for every
// matrix in the library; sizes here stay in the low thousands, so dense
// storage wins on simplicity.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0);
    // Allocates without initializing; caller must write every entry.
    static Matrix uninit(int rows, int cols);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int64_t size() const { return static_cast<int64_t>(rows_) * cols_; }
    bool empty() const { return size() == 0; }
    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    const double* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }
    double* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    void fill(double v);
    std::string shape_str() const;

private:
    struct Uninit {};
    Matrix(int rows, int cols, Uninit);

    int rows_ = 0;
    int cols_ = 0;
    std::vector<double, detail::DefaultInitAllocator<double>> data_;
};

// Caps internal parallelism (kernel row-splitting and multi-seed fan-out).
// 1 (the default) keeps everything on the calling thread; results are
// bitwise identical for any setting.
void set_max_threads(int n);
int max_threads();

// While alive on a thread, kernels on that thread stay serial. Higher-level
// fan-out (one training run per seed) uses this so nested parallelism never
// hits the shared row pool.
class SerialKernelScope {
public:
    SerialKernelScope();
    ~SerialKernelScope();
    SerialKernelScope(const SerialKernelScope&) = delete;
    SerialKernelScope& operator=(const SerialKernelScope&) = delete;
};

// a.cols() must equal b.rows(); throws std::invalid_argument otherwise.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
// C = A * B^T and C = A^T * B without materializing the transpose at call sites.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_in_place(Matrix& a, const Matrix& b);
void scale_in_place(Matrix& a, double s);

// Numerically stable softmax per row (max-shifted before exponentiation).
Matrix row_softmax(const Matrix& a);

Matrix gelu(const Matrix& a);
// Derivative of gelu evaluated elementwise, used by backward rules.
Matrix gelu_grad(const Matrix& a);

// Mean over rows of -log(pred[row][target]); probabilities are clamped below
// at kLogClamp before the log so confident wrong predictions stay finite.
inline constexpr double kLogClamp = 1e-12;
double cross_entropy_rows(const Matrix& pred, const std::vector<int>& targets);

Matrix concat_rows(const Matrix& top, const Matrix& bottom);
Matrix slice_rows(const Matrix& a, int begin, int count);

// Largest singular value, computed by cyclic Jacobi on the Gram matrix.
double spectral_norm(const Matrix& a);

bool has_nonfinite(const Matrix& a);
// Throws std::runtime_error naming `what` if a contains NaN/Inf. Debug aid.
void check_finite(const Matrix& a, const char* what);

double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace hypergt
