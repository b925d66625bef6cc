#pragma once

#include <cstddef>
#include <span>
#include <vector>

#ifdef CSD_HAVE_OPENMP
#include <omp.h>
#endif

// Dense inner loops. Two implementations share one contract:
//   serial::*   reference loops, kept for testing and benchmarking
//   parallel::* OpenMP over output rows (serial without OpenMP)
// Each output element is accumulated by exactly one thread in ascending
// reduction order, so both paths produce bit-identical results, and a row's
// result does not depend on how many other rows are in the batch.
namespace csd::num::kernels {

struct MatDims {
    std::size_t m;  // rows of A and C
    std::size_t k;  // inner dimension
    std::size_t n;  // cols of B and C
};

// Work below this many multiply-adds is not worth a parallel region.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

namespace detail {

template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, const MatDims& d, std::size_t i, bool accumulate)
{
    T* crow = c + i * d.n;
    if (!accumulate)
        for (std::size_t j = 0; j < d.n; ++j) crow[j] = T(0);
    const T* arow = a + i * d.k;
    for (std::size_t p = 0; p < d.k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * d.n;
        for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
    }
}

template <typename T>
inline void at_b_row(const T* a, const T* g, T* gb, const MatDims& d, std::size_t p)
{
    T* out = gb + p * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
        const T av = a[i * d.k + p];
        const T* grow = g + i * d.n;
        for (std::size_t j = 0; j < d.n; ++j) out[j] += av * grow[j];
    }
}

// `bt` is B transposed ([n, k]) so the inner loop runs over contiguous memory.
template <typename T>
inline void a_bt_row(const T* g, const T* bt, T* ga, const MatDims& d, std::size_t i)
{
    const T* grow = g + i * d.n;
    T* out = ga + i * d.k;
    for (std::size_t j = 0; j < d.n; ++j) {
        const T gv = grow[j];
        const T* brow = bt + j * d.k;
        for (std::size_t p = 0; p < d.k; ++p) out[p] += gv * brow[p];
    }
}

template <typename T>
inline std::vector<T> transpose(const T* b, std::size_t rows, std::size_t cols)
{
    std::vector<T> t(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
    return t;
}

}  // namespace detail

namespace serial {

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, MatDims d, bool accumulate = false)
{
    for (std::size_t i = 0; i < d.m; ++i) detail::matmul_row(a.data(), b.data(), c.data(), d, i, accumulate);
}

// GB[k,n] += A[m,k]^T * G[m,n]
template <typename T>
void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> gb, MatDims d)
{
    for (std::size_t p = 0; p < d.k; ++p) detail::at_b_row(a.data(), g.data(), gb.data(), d, p);
}

// GA[m,k] += G[m,n] * B[k,n]^T
template <typename T>
void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> ga, MatDims d)
{
    const auto bt = detail::transpose(b.data(), d.k, d.n);
    for (std::size_t i = 0; i < d.m; ++i) detail::a_bt_row(g.data(), bt.data(), ga.data(), d, i);
}

}  // namespace serial

namespace parallel {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, MatDims d, bool accumulate = false)
{
#ifdef CSD_HAVE_OPENMP
    const long rows = static_cast<long>(d.m);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n > kParallelThreshold)
    for (long i = 0; i < rows; ++i)
        detail::matmul_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i), accumulate);
#else
    serial::matmul(a, b, c, d, accumulate);
#endif
}

template <typename T>
void matmul_at_b(std::span<const T> a, std::span<const T> g, std::span<T> gb, MatDims d)
{
#ifdef CSD_HAVE_OPENMP
    const long rows = static_cast<long>(d.k);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n > kParallelThreshold)
    for (long p = 0; p < rows; ++p)
        detail::at_b_row(a.data(), g.data(), gb.data(), d, static_cast<std::size_t>(p));
#else
    serial::matmul_at_b(a, g, gb, d);
#endif
}

template <typename T>
void matmul_a_bt(std::span<const T> g, std::span<const T> b, std::span<T> ga, MatDims d)
{
#ifdef CSD_HAVE_OPENMP
    const long rows = static_cast<long>(d.m);
    const auto bt = detail::transpose(b.data(), d.k, d.n);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n > kParallelThreshold)
    for (long i = 0; i < rows; ++i)
        detail::a_bt_row(g.data(), bt.data(), ga.data(), d, static_cast<std::size_t>(i));
#else
    serial::matmul_a_bt(g, b, ga, d);
#endif
}

}  // namespace parallel

inline int max_threads()
{
#ifdef CSD_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n)
{
#ifdef CSD_HAVE_OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline constexpr bool openmp_enabled()
{
#ifdef CSD_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

}  // namespace csd::num::kernels
