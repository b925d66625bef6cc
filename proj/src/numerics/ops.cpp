#include "csd/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csd/numerics/kernels.hpp"

namespace csd::num {

namespace {

template <typename T>
BasicTape<T>& tape_of(const BasicVar<T>& a)
{
    if (!a.valid()) throw ContractViolation("op applied to an unbound variable");
    return *a.tape();
}

void require(bool ok, const char* op, const std::string& detail)
{
    if (!ok) throw ContractViolation(std::string(op) + ": " + detail);
}

template <typename T>
void require_same_shape(const BasicVar<T>& a, const BasicVar<T>& b, const char* op)
{
    require(a.shape() == b.shape(), op,
            "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

// Handle of the node the next record() call will create, so backward
// closures can read their own output.
template <typename T>
BasicVar<T> next_node(BasicTape<T>& tape)
{
    return BasicVar<T>(&tape, static_cast<int>(tape.size()));
}

// Elementwise op whose derivative is expressed through (x, y).
template <typename T, typename F, typename D>
BasicVar<T> unary(const char* op, const BasicVar<T>& a, F fwd, D deriv)
{
    auto& tape = tape_of(a);
    BasicTensor<T> out(a.shape());
    const auto& x = a.value();
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    auto self = next_node(tape);
    return tape.record(op, std::move(out), {a}, [a, self, deriv](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a)) {
            const auto& xv = a.value();
            const auto& yv = self.value();
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * deriv(xv[i], yv[i]);
        }
    });
}

template <typename T>
T stable_sigmoid(T x)
{
    if (x >= T(0)) {
        const T z = std::exp(-x);
        return T(1) / (T(1) + z);
    }
    const T z = std::exp(x);
    return z / (T(1) + z);
}

}  // namespace

template <typename T>
BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b)
{
    require_same_shape(a, b, "add");
    BasicTensor<T> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return tape_of(a).record("add", std::move(out), {a, b}, [a, b](const BasicTensor<T>& g, GradSink<T>& sink) {
        for (const auto& in : {a, b})
            if (auto* ga = sink(in))
                for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

template <typename T>
BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b)
{
    require_same_shape(a, b, "sub");
    BasicTensor<T> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return tape_of(a).record("sub", std::move(out), {a, b}, [a, b](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (auto* gb = sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

template <typename T>
BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b)
{
    require_same_shape(a, b, "mul");
    BasicTensor<T> out(a.value());
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return tape_of(a).record("mul", std::move(out), {a, b}, [a, b](const BasicTensor<T>& g, GradSink<T>& sink) {
        const auto& av = a.value();
        const auto& bv = b.value();
        if (auto* ga = sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        if (auto* gb = sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    });
}

template <typename T>
BasicVar<T> scale(const BasicVar<T>& a, double s)
{
    const T k = static_cast<T>(s);
    BasicTensor<T> out(a.value());
    for (auto& v : out.vec()) v *= k;
    return tape_of(a).record("scale", std::move(out), {a}, [a, k](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += k * g[i];
    });
}

template <typename T>
BasicVar<T> add_scalar(const BasicVar<T>& a, double s)
{
    const T k = static_cast<T>(s);
    BasicTensor<T> out(a.value());
    for (auto& v : out.vec()) v += k;
    return tape_of(a).record("add_scalar", std::move(out), {a}, [a](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    });
}

template <typename T>
BasicVar<T> add_bias(const BasicVar<T>& a, const BasicVar<T>& bias)
{
    const auto& av = a.value();
    const auto& bv = bias.value();
    require(bv.rank() == 1 && av.rank() >= 1 && av.shape().back() == bv.size(), "add_bias",
            "bias " + shape_string(bv.shape()) + " does not match " + shape_string(av.shape()));
    const std::size_t n = bv.size();
    BasicTensor<T> out(av);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
    return tape_of(a).record("add_bias", std::move(out), {a, bias},
                             [a, bias, n](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* ga = sink(a))
                                     for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                                 if (auto* gb = sink(bias))
                                     for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
                             });
}

template <typename T>
BasicVar<T> mul_const(const BasicVar<T>& a, const BasicTensor<T>& c)
{
    require(a.shape() == c.shape(), "mul_const", "shape mismatch");
    BasicTensor<T> out(a.value());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
    return tape_of(a).record("mul_const", std::move(out), {a}, [a, c](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * c[i];
    });
}

template <typename T>
BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b)
{
    const auto& av = a.value();
    const auto& bv = b.value();
    require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0), "matmul",
            shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    const kernels::MatDims d{av.dim(0), av.dim(1), bv.dim(1)};
    BasicTensor<T> out(Shape{d.m, d.n});
    kernels::parallel::matmul<T>(av.data(), bv.data(), out.data(), d);
    return tape_of(a).record("matmul", std::move(out), {a, b}, [a, b, d](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a)) kernels::parallel::matmul_a_bt<T>(g.data(), b.value().data(), ga->data(), d);
        if (auto* gb = sink(b)) kernels::parallel::matmul_at_b<T>(a.value().data(), g.data(), gb->data(), d);
    });
}

template <typename T>
BasicVar<T> sigmoid(const BasicVar<T>& a)
{
    return unary(
        "sigmoid", a, [](T x) { return stable_sigmoid(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicVar<T> tanh(const BasicVar<T>& a)
{
    return unary(
        "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
BasicVar<T> relu(const BasicVar<T>& a)
{
    return unary(
        "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicVar<T> square(const BasicVar<T>& a)
{
    return unary(
        "square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
BasicVar<T> softmax(const BasicVar<T>& logits)
{
    const auto& z = logits.value();
    require(z.rank() == 2, "softmax", "expects [rows, cols], got " + shape_string(z.shape()));
    const std::size_t m = z.dim(0), n = z.dim(1);
    BasicTensor<T> out(z.shape());
    for (std::size_t r = 0; r < m; ++r) {
        T mx = z.at(r, 0);
        for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, z.at(r, c));
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += std::exp(static_cast<double>(z.at(r, c) - mx));
        for (std::size_t c = 0; c < n; ++c)
            out.at(r, c) = static_cast<T>(std::exp(static_cast<double>(z.at(r, c) - mx)) / total);
    }
    auto& tape = tape_of(logits);
    auto self = next_node(tape);
    return tape.record("softmax", std::move(out), {logits},
                       [logits, self, m, n](const BasicTensor<T>& g, GradSink<T>& sink) {
                           auto* gz = sink(logits);
                           if (!gz) return;
                           const auto& p = self.value();
                           for (std::size_t r = 0; r < m; ++r) {
                               T dot = T(0);
                               for (std::size_t c = 0; c < n; ++c) dot += g.at(r, c) * p.at(r, c);
                               for (std::size_t c = 0; c < n; ++c) gz->at(r, c) += p.at(r, c) * (g.at(r, c) - dot);
                           }
                       });
}

template <typename T>
BasicTensor<T> dropout_mask(const Shape& shape, double rate, SeededRng& rng)
{
    if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout rate must be in [0, 1)");
    BasicTensor<T> mask(shape);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (auto& v : mask.vec()) v = rng.uniform() < rate ? T(0) : keep_scale;
    return mask;
}

template <typename T>
BasicVar<T> dropout(const BasicVar<T>& a, double rate, SeededRng& rng, bool training)
{
    if (!training || rate == 0.0) return a;
    return mul_const(a, dropout_mask<T>(a.shape(), rate, rng));
}

template <typename T>
BasicVar<T> reshape(const BasicVar<T>& a, Shape shape)
{
    require(shape_size(shape) == a.value().size(), "reshape",
            shape_string(a.shape()) + " -> " + shape_string(shape));
    return tape_of(a).record("reshape", a.value().reshaped(std::move(shape)), {a},
                             [a](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* ga = sink(a))
                                     for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                             });
}

template <typename T>
BasicVar<T> slice_cols(const BasicVar<T>& a, std::size_t start, std::size_t len)
{
    const auto& av = a.value();
    require(av.rank() == 2 && start + len <= av.dim(1), "slice_cols", "range out of bounds");
    const std::size_t m = av.dim(0), n = av.dim(1);
    BasicTensor<T> out(Shape{m, len});
    for (std::size_t r = 0; r < m; ++r)
        std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(r * n + start), len,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * len));
    return tape_of(a).record("slice_cols", std::move(out), {a},
                             [a, start, len, m, n](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* ga = sink(a))
                                     for (std::size_t r = 0; r < m; ++r)
                                         for (std::size_t c = 0; c < len; ++c)
                                             (*ga)[r * n + start + c] += g[r * len + c];
                             });
}

template <typename T>
BasicVar<T> concat_cols(const std::vector<BasicVar<T>>& parts)
{
    require(!parts.empty(), "concat_cols", "no inputs");
    const std::size_t m = parts[0].value().dim(0);
    std::size_t total = 0;
    for (const auto& p : parts) {
        require(p.value().rank() == 2 && p.value().dim(0) == m, "concat_cols", "row mismatch");
        total += p.value().dim(1);
    }
    BasicTensor<T> out(Shape{m, total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto& pv = p.value();
        const std::size_t w = pv.dim(1);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < w; ++c) out.at(r, off + c) = pv.at(r, c);
        off += w;
    }
    return tape_of(parts[0]).record("concat_cols", std::move(out), parts,
                                    [parts, m, total](const BasicTensor<T>& g, GradSink<T>& sink) {
                                        std::size_t off = 0;
                                        for (const auto& p : parts) {
                                            const std::size_t w = p.value().dim(1);
                                            if (auto* gp = sink(p))
                                                for (std::size_t r = 0; r < m; ++r)
                                                    for (std::size_t c = 0; c < w; ++c)
                                                        gp->at(r, c) += g[r * total + off + c];
                                            off += w;
                                        }
                                    });
}

template <typename T>
BasicVar<T> time_step(const BasicVar<T>& x, std::size_t t)
{
    const auto& xv = x.value();
    require(xv.rank() == 3 && t < xv.dim(1), "time_step", "index out of range for " + shape_string(xv.shape()));
    const std::size_t b = xv.dim(0), steps = xv.dim(1), f = xv.dim(2);
    BasicTensor<T> out(Shape{b, f});
    for (std::size_t i = 0; i < b; ++i)
        std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>((i * steps + t) * f), f,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * f));
    return tape_of(x).record("time_step", std::move(out), {x},
                             [x, t, b, steps, f](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* gx = sink(x))
                                     for (std::size_t i = 0; i < b; ++i)
                                         for (std::size_t j = 0; j < f; ++j) (*gx)[(i * steps + t) * f + j] += g[i * f + j];
                             });
}

template <typename T>
BasicVar<T> stack_time(const std::vector<BasicVar<T>>& steps)
{
    require(!steps.empty(), "stack_time", "no inputs");
    const auto& first = steps[0].value();
    require(first.rank() == 2, "stack_time", "steps must be [B, F]");
    const std::size_t b = first.dim(0), f = first.dim(1), n = steps.size();
    BasicTensor<T> out(Shape{b, n, f});
    for (std::size_t t = 0; t < n; ++t) {
        const auto& sv = steps[t].value();
        require(sv.shape() == first.shape(), "stack_time", "step shape mismatch");
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) out.at(i, t, j) = sv.at(i, j);
    }
    return tape_of(steps[0]).record("stack_time", std::move(out), steps,
                                    [steps, b, n, f](const BasicTensor<T>& g, GradSink<T>& sink) {
                                        for (std::size_t t = 0; t < n; ++t)
                                            if (auto* gs = sink(steps[t]))
                                                for (std::size_t i = 0; i < b; ++i)
                                                    for (std::size_t j = 0; j < f; ++j)
                                                        gs->at(i, j) += g[(i * n + t) * f + j];
                                    });
}

template <typename T>
BasicVar<T> mean_time(const BasicVar<T>& x)
{
    const auto& xv = x.value();
    require(xv.rank() == 3 && xv.dim(1) > 0, "mean_time", "expects [B, T, F]");
    const std::size_t b = xv.dim(0), steps = xv.dim(1), f = xv.dim(2);
    BasicTensor<T> out(Shape{b, f});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < steps; ++t) acc += xv.at(i, t, j);
            out.at(i, j) = static_cast<T>(acc / static_cast<double>(steps));
        }
    return tape_of(x).record("mean_time", std::move(out), {x},
                             [x, b, steps, f](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* gx = sink(x)) {
                                     const T inv = T(1) / static_cast<T>(steps);
                                     for (std::size_t i = 0; i < b; ++i)
                                         for (std::size_t t = 0; t < steps; ++t)
                                             for (std::size_t j = 0; j < f; ++j)
                                                 (*gx)[(i * steps + t) * f + j] += g[i * f + j] * inv;
                                 }
                             });
}

template <typename T>
BasicVar<T> conv1d(const BasicVar<T>& x, const BasicVar<T>& w, const BasicVar<T>& b)
{
    const auto& xv = x.value();
    const auto& wv = w.value();
    require(xv.rank() == 3 && wv.rank() == 3 && wv.dim(1) == xv.dim(2), "conv1d",
            "x " + shape_string(xv.shape()) + " w " + shape_string(wv.shape()));
    const std::size_t batch = xv.dim(0), steps = xv.dim(1), ch = xv.dim(2);
    const std::size_t k = wv.dim(0), filters = wv.dim(2);
    require(k >= 1 && k <= steps, "conv1d", "kernel longer than sequence");
    require(b.value().rank() == 1 && b.value().size() == filters, "conv1d", "bias size mismatch");
    const std::size_t out_steps = steps - k + 1;
    // Each output position reads a contiguous [k, ch] block of x, so im2col is
    // a strided copy and the convolution is one matmul.
    const kernels::MatDims d{batch * out_steps, k * ch, filters};
    BasicTensor<T> patches(Shape{d.m, d.k});
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t t = 0; t < out_steps; ++t)
            std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>((i * steps + t) * ch), d.k,
                        patches.data().begin() + static_cast<std::ptrdiff_t>((i * out_steps + t) * d.k));
    BasicTensor<T> out(Shape{batch, out_steps, filters});
    kernels::parallel::matmul<T>(patches.data(), wv.data(), out.data(), d);
    const auto& bv = b.value();
    for (std::size_t r = 0; r < d.m; ++r)
        for (std::size_t f = 0; f < filters; ++f) out[r * filters + f] += bv[f];
    return tape_of(x).record(
        "conv1d", std::move(out), {x, w, b},
        [x, w, b, patches = std::move(patches), d, batch, steps, ch, out_steps](const BasicTensor<T>& g,
                                                                                GradSink<T>& sink) {
            if (auto* gw = sink(w)) kernels::parallel::matmul_at_b<T>(patches.data(), g.data(), gw->data(), d);
            if (auto* gb = sink(b))
                for (std::size_t r = 0; r < d.m; ++r)
                    for (std::size_t f = 0; f < d.n; ++f) (*gb)[f] += g[r * d.n + f];
            if (auto* gx = sink(x)) {
                BasicTensor<T> gp(Shape{d.m, d.k});
                kernels::parallel::matmul_a_bt<T>(g.data(), w.value().data(), gp.data(), d);
                for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t t = 0; t < out_steps; ++t) {
                        T* dst = gx->data().data() + (i * steps + t) * ch;
                        const T* src = gp.data().data() + (i * out_steps + t) * d.k;
                        for (std::size_t j = 0; j < d.k; ++j) dst[j] += src[j];
                    }
            }
        });
}

template <typename T>
BasicVar<T> maxpool1d(const BasicVar<T>& x, std::size_t size)
{
    const auto& xv = x.value();
    require(xv.rank() == 3 && size >= 1 && xv.dim(1) >= size, "maxpool1d", "bad pool size for " + shape_string(xv.shape()));
    const std::size_t batch = xv.dim(0), steps = xv.dim(1), ch = xv.dim(2), out_steps = steps / size;
    BasicTensor<T> out(Shape{batch, out_steps, ch});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t t = 0; t < out_steps; ++t)
            for (std::size_t c = 0; c < ch; ++c) {
                std::size_t best = (i * steps + t * size) * ch + c;
                for (std::size_t s = 1; s < size; ++s) {
                    const std::size_t idx = (i * steps + t * size + s) * ch + c;
                    if (xv[idx] > xv[best]) best = idx;
                }
                const std::size_t o = (i * out_steps + t) * ch + c;
                out[o] = xv[best];
                argmax[o] = best;
            }
    return tape_of(x).record("maxpool1d", std::move(out), {x},
                             [x, argmax = std::move(argmax)](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* gx = sink(x))
                                     for (std::size_t o = 0; o < g.size(); ++o) (*gx)[argmax[o]] += g[o];
                             });
}

template <typename T>
BasicVar<T> sum(const BasicVar<T>& a)
{
    double acc = 0.0;
    for (T v : a.value().data()) acc += v;
    return tape_of(a).record("sum", BasicTensor<T>::scalar(static_cast<T>(acc)), {a},
                             [a](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* ga = sink(a))
                                     for (auto& v : ga->vec()) v += g[0];
                             });
}

template <typename T>
BasicVar<T> mean(const BasicVar<T>& a)
{
    const std::size_t n = a.value().size();
    require(n > 0, "mean", "empty tensor");
    double acc = 0.0;
    for (T v : a.value().data()) acc += v;
    return tape_of(a).record("mean", BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {a},
                             [a, n](const BasicTensor<T>& g, GradSink<T>& sink) {
                                 if (auto* ga = sink(a)) {
                                     const T k = g[0] / static_cast<T>(n);
                                     for (auto& v : ga->vec()) v += k;
                                 }
                             });
}

template <typename T>
BasicVar<T> row_sum(const BasicVar<T>& a)
{
    const auto& av = a.value();
    require(av.rank() == 2, "row_sum", "expects [rows, cols]");
    const std::size_t m = av.dim(0), n = av.dim(1);
    BasicTensor<T> out(Shape{m});
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < n; ++c) acc += av.at(r, c);
        out[r] = static_cast<T>(acc);
    }
    return tape_of(a).record("row_sum", std::move(out), {a}, [a, m, n](const BasicTensor<T>& g, GradSink<T>& sink) {
        if (auto* ga = sink(a))
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) ga->at(r, c) += g[r];
    });
}

template <typename T>
BasicVar<T> cross_entropy(const BasicVar<T>& logits, const std::vector<int>& labels)
{
    const auto& z = logits.value();
    require(z.rank() == 2 && z.dim(0) == labels.size() && z.dim(0) > 0, "cross_entropy",
            "logits " + shape_string(z.shape()) + " vs " + std::to_string(labels.size()) + " labels");
    const std::size_t m = z.dim(0), n = z.dim(1);
    BasicTensor<T> probs(z.shape());
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        const int y = labels[r];
        require(y >= 0 && static_cast<std::size_t>(y) < n, "cross_entropy", "label out of range");
        double mx = z.at(r, 0);
        for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, static_cast<double>(z.at(r, c)));
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += std::exp(static_cast<double>(z.at(r, c)) - mx);
        const double log_total = std::log(total) + mx;
        for (std::size_t c = 0; c < n; ++c) probs.at(r, c) = static_cast<T>(std::exp(z.at(r, c) - log_total));
        loss += log_total - static_cast<double>(z.at(r, static_cast<std::size_t>(y)));
    }
    loss /= static_cast<double>(m);
    return tape_of(logits).record(
        "cross_entropy", BasicTensor<T>::scalar(static_cast<T>(loss)), {logits},
        [logits, probs = std::move(probs), labels, m, n](const BasicTensor<T>& g, GradSink<T>& sink) {
            if (auto* gz = sink(logits)) {
                const T k = g[0] / static_cast<T>(m);
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < n; ++c) {
                        const T y = static_cast<std::size_t>(labels[r]) == c ? T(1) : T(0);
                        gz->at(r, c) += k * (probs.at(r, c) - y);
                    }
            }
        });
}

template <typename T>
BasicVar<T> bce_with_logits(const BasicVar<T>& logits, const std::vector<float>& targets)
{
    const auto& z = logits.value();
    require(z.size() == targets.size() && !targets.empty(), "bce_with_logits", "size mismatch");
    const std::size_t m = z.size();
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double x = z[i];
        // softplus(x) - y*x, stable form
        loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<double>(m);
    return tape_of(logits).record("bce_with_logits", BasicTensor<T>::scalar(static_cast<T>(loss)), {logits},
                                  [logits, targets, m](const BasicTensor<T>& g, GradSink<T>& sink) {
                                      if (auto* gz = sink(logits)) {
                                          const auto& zv = logits.value();
                                          const T k = g[0] / static_cast<T>(m);
                                          for (std::size_t i = 0; i < m; ++i)
                                              (*gz)[i] += k * (stable_sigmoid(zv[i]) - static_cast<T>(targets[i]));
                                      }
                                  });
}

template <typename T>
BasicVar<T> margin_loss(const BasicVar<T>& logits, const std::vector<int>& classes, const std::vector<bool>& targeted,
                        double kappa)
{
    const auto& z = logits.value();
    require(z.rank() == 2 && z.dim(0) == classes.size() && targeted.size() == classes.size() && z.dim(1) >= 2,
            "margin_loss", "shape mismatch");
    const std::size_t m = z.dim(0), n = z.dim(1);
    BasicTensor<T> out(Shape{m});
    // Per row: index with +1 coefficient, index with -1 coefficient, or -1 when clamped.
    std::vector<std::pair<int, int>> active(m, {-1, -1});
    for (std::size_t r = 0; r < m; ++r) {
        const auto y = static_cast<std::size_t>(classes[r]);
        require(y < n, "margin_loss", "class out of range");
        std::size_t other = y == 0 ? 1 : 0;
        for (std::size_t c = 0; c < n; ++c)
            if (c != y && z.at(r, c) > z.at(r, other)) other = c;
        const double gap = targeted[r] ? static_cast<double>(z.at(r, other)) - z.at(r, y)
                                       : static_cast<double>(z.at(r, y)) - z.at(r, other);
        if (gap > -kappa) {
            out[r] = static_cast<T>(gap);
            active[r] = targeted[r] ? std::pair<int, int>{static_cast<int>(other), static_cast<int>(y)}
                                    : std::pair<int, int>{static_cast<int>(y), static_cast<int>(other)};
        } else {
            out[r] = static_cast<T>(-kappa);
        }
    }
    return tape_of(logits).record("margin_loss", std::move(out), {logits},
                                  [logits, active = std::move(active), n](const BasicTensor<T>& g, GradSink<T>& sink) {
                                      if (auto* gz = sink(logits))
                                          for (std::size_t r = 0; r < active.size(); ++r) {
                                              if (active[r].first < 0) continue;
                                              (*gz)[r * n + static_cast<std::size_t>(active[r].first)] += g[r];
                                              (*gz)[r * n + static_cast<std::size_t>(active[r].second)] -= g[r];
                                          }
                                  });
}

#define CSD_INSTANTIATE_OPS(T)                                                                               \
    template BasicVar<T> add(const BasicVar<T>&, const BasicVar<T>&);                                        \
    template BasicVar<T> sub(const BasicVar<T>&, const BasicVar<T>&);                                        \
    template BasicVar<T> mul(const BasicVar<T>&, const BasicVar<T>&);                                        \
    template BasicVar<T> scale(const BasicVar<T>&, double);                                                  \
    template BasicVar<T> add_scalar(const BasicVar<T>&, double);                                             \
    template BasicVar<T> add_bias(const BasicVar<T>&, const BasicVar<T>&);                                   \
    template BasicVar<T> mul_const(const BasicVar<T>&, const BasicTensor<T>&);                               \
    template BasicVar<T> matmul(const BasicVar<T>&, const BasicVar<T>&);                                     \
    template BasicVar<T> sigmoid(const BasicVar<T>&);                                                        \
    template BasicVar<T> tanh(const BasicVar<T>&);                                                           \
    template BasicVar<T> relu(const BasicVar<T>&);                                                           \
    template BasicVar<T> square(const BasicVar<T>&);                                                         \
    template BasicVar<T> softmax(const BasicVar<T>&);                                                        \
    template BasicVar<T> dropout(const BasicVar<T>&, double, SeededRng&, bool);                              \
    template BasicTensor<T> dropout_mask<T>(const Shape&, double, SeededRng&);                               \
    template BasicVar<T> reshape(const BasicVar<T>&, Shape);                                                 \
    template BasicVar<T> slice_cols(const BasicVar<T>&, std::size_t, std::size_t);                           \
    template BasicVar<T> concat_cols(const std::vector<BasicVar<T>>&);                                       \
    template BasicVar<T> time_step(const BasicVar<T>&, std::size_t);                                         \
    template BasicVar<T> stack_time(const std::vector<BasicVar<T>>&);                                        \
    template BasicVar<T> mean_time(const BasicVar<T>&);                                                      \
    template BasicVar<T> conv1d(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&);                 \
    template BasicVar<T> maxpool1d(const BasicVar<T>&, std::size_t);                                         \
    template BasicVar<T> sum(const BasicVar<T>&);                                                            \
    template BasicVar<T> mean(const BasicVar<T>&);                                                           \
    template BasicVar<T> row_sum(const BasicVar<T>&);                                                        \
    template BasicVar<T> cross_entropy(const BasicVar<T>&, const std::vector<int>&);                         \
    template BasicVar<T> bce_with_logits(const BasicVar<T>&, const std::vector<float>&);                     \
    template BasicVar<T> margin_loss(const BasicVar<T>&, const std::vector<int>&, const std::vector<bool>&, \
                                     double);

CSD_INSTANTIATE_OPS(float)
CSD_INSTANTIATE_OPS(double)

#undef CSD_INSTANTIATE_OPS

}  // namespace csd::num
