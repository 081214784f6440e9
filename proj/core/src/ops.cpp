#include "gssl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gssl/rng.hpp"

namespace gssl::ops {

using detail::accumulate_grad;
using detail::grad_buffer;
using detail::make_result;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_to_string(a.shape()) + " vs " +
                                    shape_to_string(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    ", got shape " + shape_to_string(a.shape()));
    }
}

// outer × n × inner view of a tensor around `axis`.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " out of range for shape " + shape_to_string(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != axis) out.push_back(shape[i]);
    }
    return out;
}

// C[M×N] += A[M×K] · B[K×N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M×N] += A[K×M]ᵀ · B[K×N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = a[p * m + i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M×N] += A[M×K] · B[N×K]ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

template <typename F, typename G>
Tensor unary(const char* name, const Tensor& a, F forward, G derivative) {
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
    return make_result(name, a.shape(), std::move(out), {a},
                       [a, derivative](const TensorImpl& o) {
                           auto g = grad_buffer(a);
                           if (g.empty()) return;
                           const auto x = a.data();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               g[i] += o.grad[i] * derivative(x[i], o.data[i]);
                           }
                       });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        accumulate_grad(a, o.grad);
        accumulate_grad(b, o.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        accumulate_grad(a, o.grad);
        auto g = grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    const auto x = a.data();
    const auto y = b.data();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
        if (auto g = grad_buffer(a); !g.empty()) {
            const auto y = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * y[i];
        }
        if (auto g = grad_buffer(b); !g.empty()) {
            const auto x = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * x[i];
        }
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    return unary(
        "scale", a, [factor](double x) { return factor * x; },
        [factor](double, double) { return factor; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a, double floor) {
    return unary(
        "log", a, [floor](double x) { return std::log(std::max(x, floor)); },
        [floor](double x, double) { return x < floor ? 0.0 : 1.0 / x; });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(a.shape()) +
                                    " vs " + shape_to_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
    return make_result("matmul", {m, n}, std::move(out), {a, b},
                       [a, b, m, n, k](const TensorImpl& o) {
                           if (auto g = grad_buffer(a); !g.empty()) {
                               gemm_nt(m, k, n, o.grad.data(), b.data().data(), g.data());
                           }
                           if (auto g = grad_buffer(b); !g.empty()) {
                               gemm_tn(k, n, m, a.data().data(), o.grad.data(), g.data());
                           }
                       });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    return permute(a, {1, 0});
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: shape mismatch " + shape_to_string(a.shape()) +
                                    " vs " + shape_to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result("reshape", std::move(shape), std::move(out), {a},
                       [a](const TensorImpl& o) { accumulate_grad(a, o.grad); });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const Shape& in_shape = a.shape();
    const std::size_t rank = in_shape.size();
    if (axes.size() != rank) {
        throw std::invalid_argument("permute: " + std::to_string(axes.size()) +
                                    " axes for shape " + shape_to_string(in_shape));
    }
    std::vector<bool> seen(rank, false);
    for (auto ax : axes) {
        if (ax >= rank || seen[ax]) throw std::invalid_argument("permute: invalid axis order");
        seen[ax] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[axes[i]];

    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];

    // Source offset for every destination element, reused by backward.
    const std::size_t total = a.numel();
    auto source = std::make_shared<std::vector<std::size_t>>(total);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < rank; ++i) off += idx[i] * in_strides[axes[i]];
        (*source)[flat] = off;
        for (std::size_t i = rank; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    const auto in = a.data();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = in[(*source)[i]];
    return make_result("permute", std::move(out_shape), std::move(out), {a},
                       [a, source](const TensorImpl& o) {
                           auto g = grad_buffer(a);
                           if (g.empty()) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i) {
                               g[(*source)[i]] += o.grad[i];
                           }
                       });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range");
    Shape out_shape = first;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == first.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
        if (!ok) {
            throw std::invalid_argument("concat: shape mismatch " + shape_to_string(first) +
                                        " vs " + shape_to_string(s));
        }
        out_shape[axis] += s[axis];
    }
    const auto split = split_at(out_shape, axis, "concat");
    std::vector<double> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t n = p.dim(axis);
        const auto in = p.data();
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(in.begin() + o * n * split.inner, n * split.inner,
                        out.begin() + (o * split.n + offset) * split.inner);
        }
        offset += n;
    }
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_result("concat", out_shape, std::move(out), inputs,
                       [inputs, axis, split](const TensorImpl& o) {
                           std::size_t offset = 0;
                           for (const auto& p : inputs) {
                               const std::size_t n = p.dim(axis);
                               auto g = grad_buffer(p);
                               if (!g.empty()) {
                                   for (std::size_t q = 0; q < split.outer; ++q) {
                                       const double* src =
                                           o.grad.data() + (q * split.n + offset) * split.inner;
                                       double* dst = g.data() + q * n * split.inner;
                                       for (std::size_t i = 0; i < n * split.inner; ++i) {
                                           dst[i] += src[i];
                                       }
                                   }
                               }
                               offset += n;
                           }
                       });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result("sum", {}, {s}, {a}, [a](const TensorImpl& o) {
        auto g = grad_buffer(a);
        for (auto& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
    const auto s = split_at(a.shape(), axis, "sum_axis");
    const auto in = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < s.n; ++k) {
            const double* src = in.data() + (o * s.n + k) * s.inner;
            double* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    }
    return make_result("sum_axis", drop_axis(a.shape(), axis), std::move(out), {a},
                       [a, s](const TensorImpl& o) {
                           auto g = grad_buffer(a);
                           if (g.empty()) return;
                           for (std::size_t q = 0; q < s.outer; ++q) {
                               for (std::size_t k = 0; k < s.n; ++k) {
                                   double* dst = g.data() + (q * s.n + k) * s.inner;
                                   const double* src = o.grad.data() + q * s.inner;
                                   for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                               }
                           }
                       });
}

Tensor max_axis(const Tensor& a, std::size_t axis) {
    const auto s = split_at(a.shape(), axis, "max_axis");
    if (s.n == 0) throw std::invalid_argument("max_axis: empty axis");
    const auto in = a.data();
    std::vector<double> out(s.outer * s.inner);
    auto arg = std::make_shared<std::vector<std::size_t>>(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            std::size_t best = 0;
            double best_v = in[o * s.n * s.inner + i];
            for (std::size_t k = 1; k < s.n; ++k) {
                const double v = in[(o * s.n + k) * s.inner + i];
                if (v > best_v) {
                    best_v = v;
                    best = k;
                }
            }
            out[o * s.inner + i] = best_v;
            (*arg)[o * s.inner + i] = best;
        }
    }
    return make_result("max_axis", drop_axis(a.shape(), axis), std::move(out), {a},
                       [a, s, arg](const TensorImpl& o) {
                           auto g = grad_buffer(a);
                           if (g.empty()) return;
                           for (std::size_t q = 0; q < s.outer; ++q) {
                               for (std::size_t i = 0; i < s.inner; ++i) {
                                   const std::size_t k = (*arg)[q * s.inner + i];
                                   g[(q * s.n + k) * s.inner + i] += o.grad[q * s.inner + i];
                               }
                           }
                       });
}

namespace {

struct ConvGeometry {
    std::size_t n, c, h, w, o, kh, kw, stride, pad, oh, ow;
    std::size_t col_rows() const { return c * kh * kw; }
    std::size_t col_cols() const { return oh * ow; }
};

void im2col(const ConvGeometry& g, const double* img, double* col) {
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                double* row = col + ((ch * g.kh + ky) * g.kw + kx) * g.col_cols();
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const long ix =
                            static_cast<long>(x * g.stride + kx) - static_cast<long>(g.pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                            ix < static_cast<long>(g.w);
                        row[y * g.ow + x] =
                            inside ? img[(ch * g.h + static_cast<std::size_t>(iy)) * g.w +
                                         static_cast<std::size_t>(ix)]
                                   : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const double* col, double* img) {
    for (std::size_t ch = 0; ch < g.c; ++ch) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const double* row = col + ((ch * g.kh + ky) * g.kw + kx) * g.col_cols();
                for (std::size_t y = 0; y < g.oh; ++y) {
                    const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    for (std::size_t x = 0; x < g.ow; ++x) {
                        const long ix =
                            static_cast<long>(x * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                        img[(ch * g.h + static_cast<std::size_t>(iy)) * g.w +
                            static_cast<std::size_t>(ix)] += row[y * g.ow + x];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
    require_rank("conv2d(input)", x, 4);
    require_rank("conv2d(weight)", weight, 4);
    if (options.stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    ConvGeometry g{};
    g.n = x.dim(0);
    g.c = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.o = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    g.stride = options.stride;
    g.pad = options.padding;
    if (weight.dim(1) != g.c) {
        throw std::invalid_argument("conv2d: shape mismatch " + shape_to_string(x.shape()) +
                                    " vs " + shape_to_string(weight.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.o)) {
        throw std::invalid_argument("conv2d: shape mismatch " + shape_to_string(weight.shape()) +
                                    " vs " + shape_to_string(bias.shape()));
    }
    if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    }
    g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
    g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;

    const bool pointwise = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
    std::vector<double> out(g.n * g.o * g.oh * g.ow, 0.0);
    std::vector<double> col(pointwise ? 0 : g.col_rows() * g.col_cols());
    const double* wdata = weight.data().data();
    for (std::size_t b = 0; b < g.n; ++b) {
        const double* img = x.data().data() + b * g.c * g.h * g.w;
        double* dst = out.data() + b * g.o * g.col_cols();
        if (bias.defined()) {
            for (std::size_t oc = 0; oc < g.o; ++oc) {
                std::fill_n(dst + oc * g.col_cols(), g.col_cols(), bias.data()[oc]);
            }
        }
        const double* cols = img;
        if (!pointwise) {
            im2col(g, img, col.data());
            cols = col.data();
        }
        gemm_nn(g.o, g.col_cols(), g.col_rows(), wdata, cols, dst);
    }

    std::vector<Tensor> inputs{x, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(
        "conv2d", {g.n, g.o, g.oh, g.ow}, std::move(out), inputs,
        [x, weight, bias, g, pointwise](const TensorImpl& o) {
            auto gx = grad_buffer(x);
            auto gw = grad_buffer(weight);
            auto gb = bias.defined() ? grad_buffer(bias) : std::span<double>{};
            std::vector<double> col(pointwise ? 0 : g.col_rows() * g.col_cols());
            std::vector<double> dcol(gx.empty() || pointwise ? 0 : g.col_rows() * g.col_cols());
            for (std::size_t b = 0; b < g.n; ++b) {
                const double* gout = o.grad.data() + b * g.o * g.col_cols();
                if (!gb.empty()) {
                    for (std::size_t oc = 0; oc < g.o; ++oc) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < g.col_cols(); ++i) {
                            acc += gout[oc * g.col_cols() + i];
                        }
                        gb[oc] += acc;
                    }
                }
                const double* img = x.data().data() + b * g.c * g.h * g.w;
                if (!gw.empty()) {
                    const double* cols = img;
                    if (!pointwise) {
                        im2col(g, img, col.data());
                        cols = col.data();
                    }
                    gemm_nt(g.o, g.col_rows(), g.col_cols(), gout, cols, gw.data());
                }
                if (!gx.empty()) {
                    double* gimg = gx.data() + b * g.c * g.h * g.w;
                    if (pointwise) {
                        gemm_tn(g.col_rows(), g.col_cols(), g.o, weight.data().data(), gout, gimg);
                    } else {
                        std::fill(dcol.begin(), dcol.end(), 0.0);
                        gemm_tn(g.col_rows(), g.col_cols(), g.o, weight.data().data(), gout,
                                dcol.data());
                        col2im_add(g, dcol.data(), gimg);
                    }
                }
            }
        });
}

Tensor softmax(const Tensor& a, std::size_t axis, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("softmax: temperature must be > 0, got " +
                                    std::to_string(temperature));
    }
    const auto s = split_at(a.shape(), axis, "softmax");
    const auto in = a.data();
    std::vector<double> out(in.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.n * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, in[base + k * s.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) {
                const double e = std::exp((in[base + k * s.inner] - mx) / temperature);
                out[base + k * s.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] /= total;
        }
    }
    return make_result("softmax", a.shape(), std::move(out), {a},
                       [a, s, temperature](const TensorImpl& o) {
                           auto g = grad_buffer(a);
                           if (g.empty()) return;
                           for (std::size_t q = 0; q < s.outer; ++q) {
                               for (std::size_t i = 0; i < s.inner; ++i) {
                                   const std::size_t base = q * s.n * s.inner + i;
                                   double dot = 0.0;
                                   for (std::size_t k = 0; k < s.n; ++k) {
                                       const std::size_t j = base + k * s.inner;
                                       dot += o.grad[j] * o.data[j];
                                   }
                                   for (std::size_t k = 0; k < s.n; ++k) {
                                       const std::size_t j = base + k * s.inner;
                                       g[j] += o.data[j] * (o.grad[j] - dot) / temperature;
                                   }
                               }
                           }
                       });
}

Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps) {
    const auto s = split_at(a.shape(), axis, "l2_normalize");
    const auto in = a.data();
    std::vector<double> out(in.size());
    auto denom = std::make_shared<std::vector<double>>(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.n * s.inner + i;
            double sq = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) sq += in[base + k * s.inner] * in[base + k * s.inner];
            const double d = std::max(std::sqrt(sq), eps);
            (*denom)[o * s.inner + i] = d;
            for (std::size_t k = 0; k < s.n; ++k) out[base + k * s.inner] = in[base + k * s.inner] / d;
        }
    }
    return make_result(
        "l2_normalize", a.shape(), std::move(out), {a}, [a, s, eps, denom](const TensorImpl& o) {
            auto g = grad_buffer(a);
            if (g.empty()) return;
            for (std::size_t q = 0; q < s.outer; ++q) {
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = q * s.n * s.inner + i;
                    const double d = (*denom)[q * s.inner + i];
                    if (d <= eps) {
                        for (std::size_t k = 0; k < s.n; ++k) {
                            g[base + k * s.inner] += o.grad[base + k * s.inner] / eps;
                        }
                        continue;
                    }
                    double dot = 0.0;
                    for (std::size_t k = 0; k < s.n; ++k) {
                        dot += o.grad[base + k * s.inner] * o.data[base + k * s.inner];
                    }
                    for (std::size_t k = 0; k < s.n; ++k) {
                        const std::size_t j = base + k * s.inner;
                        g[j] += (o.grad[j] - o.data[j] * dot) / d;
                    }
                }
            }
        });
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
    require_rank("avg_pool2d", x, 4);
    if (k == 0) throw std::invalid_argument("avg_pool2d: window must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % k != 0 || w % k != 0) {
        throw std::invalid_argument("avg_pool2d: extent " + shape_to_string(x.shape()) +
                                    " not divisible by window " + std::to_string(k));
    }
    const std::size_t oh = h / k, ow = w / k;
    const double inv = 1.0 / static_cast<double>(k * k);
    const auto in = x.data();
    std::vector<double> out(n * c * oh * ow, 0.0);
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                out[(p * oh + y / k) * ow + xx / k] += in[(p * h + y) * w + xx] * inv;
            }
        }
    }
    return make_result("avg_pool2d", {n, c, oh, ow}, std::move(out), {x},
                       [x, n, c, h, w, k, oh, ow, inv](const TensorImpl& o) {
                           auto g = grad_buffer(x);
                           if (g.empty()) return;
                           for (std::size_t p = 0; p < n * c; ++p) {
                               for (std::size_t y = 0; y < h; ++y) {
                                   for (std::size_t xx = 0; xx < w; ++xx) {
                                       g[(p * h + y) * w + xx] +=
                                           o.grad[(p * oh + y / k) * ow + xx / k] * inv;
                                   }
                               }
                           }
                       });
}

namespace {

// Source coordinate and interpolation weight for one output index.
struct Tap {
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    double frac = 0.0;
};

std::vector<Tap> make_taps(double lo, double hi, std::size_t out_n, std::size_t in_n) {
    std::vector<Tap> taps(out_n);
    const double limit = static_cast<double>(in_n - 1);
    for (std::size_t i = 0; i < out_n; ++i) {
        double pos = out_n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) /
                                                 static_cast<double>(out_n - 1);
        pos = std::clamp(pos, 0.0, limit);
        auto i0 = static_cast<std::size_t>(std::floor(pos));
        if (in_n > 1 && i0 >= in_n - 1) i0 = in_n - 2;
        if (in_n == 1) i0 = 0;
        taps[i].i0 = i0;
        taps[i].i1 = std::min(i0 + 1, in_n - 1);
        taps[i].frac = pos - static_cast<double>(i0);
    }
    return taps;
}

}  // namespace

Tensor crop_resize_bilinear(const Tensor& x, std::span<const Rect> rects, std::size_t out_h,
                            std::size_t out_w) {
    require_rank("crop_resize_bilinear", x, 4);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (rects.size() != n) {
        throw std::invalid_argument("crop_resize_bilinear: " + std::to_string(rects.size()) +
                                    " rects for batch shape " + shape_to_string(x.shape()));
    }
    if (out_h == 0 || out_w == 0 || h == 0 || w == 0) {
        throw std::invalid_argument("crop_resize_bilinear: empty extent");
    }
    struct Plan {
        std::vector<Tap> ys, xs;
    };
    auto plans = std::make_shared<std::vector<Plan>>(n);
    for (std::size_t b = 0; b < n; ++b) {
        const Rect& r = rects[b];
        const double eps = 1e-9;
        if (r.top < -eps || r.left < -eps || r.bottom > static_cast<double>(h - 1) + eps ||
            r.right > static_cast<double>(w - 1) + eps || r.bottom < r.top || r.right < r.left) {
            throw std::invalid_argument("crop_resize_bilinear: rect outside map extent " +
                                        shape_to_string(x.shape()));
        }
        (*plans)[b].ys = make_taps(r.top, r.bottom, out_h, h);
        (*plans)[b].xs = make_taps(r.left, r.right, out_w, w);
    }
    const auto in = x.data();
    std::vector<double> out(n * c * out_h * out_w);
    for (std::size_t b = 0; b < n; ++b) {
        const auto& pl = (*plans)[b];
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* src = in.data() + (b * c + ch) * h * w;
            double* dst = out.data() + (b * c + ch) * out_h * out_w;
            for (std::size_t i = 0; i < out_h; ++i) {
                const Tap& ty = pl.ys[i];
                for (std::size_t j = 0; j < out_w; ++j) {
                    const Tap& tx = pl.xs[j];
                    const double top = src[ty.i0 * w + tx.i0] * (1.0 - tx.frac) +
                                       src[ty.i0 * w + tx.i1] * tx.frac;
                    const double bot = src[ty.i1 * w + tx.i0] * (1.0 - tx.frac) +
                                       src[ty.i1 * w + tx.i1] * tx.frac;
                    dst[i * out_w + j] = top * (1.0 - ty.frac) + bot * ty.frac;
                }
            }
        }
    }
    return make_result("crop_resize_bilinear", {n, c, out_h, out_w}, std::move(out), {x},
                       [x, plans, n, c, h, w, out_h, out_w](const TensorImpl& o) {
                           auto g = grad_buffer(x);
                           if (g.empty()) return;
                           for (std::size_t b = 0; b < n; ++b) {
                               const auto& pl = (*plans)[b];
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                   double* dst = g.data() + (b * c + ch) * h * w;
                                   const double* src =
                                       o.grad.data() + (b * c + ch) * out_h * out_w;
                                   for (std::size_t i = 0; i < out_h; ++i) {
                                       const Tap& ty = pl.ys[i];
                                       for (std::size_t j = 0; j < out_w; ++j) {
                                           const Tap& tx = pl.xs[j];
                                           const double v = src[i * out_w + j];
                                           dst[ty.i0 * w + tx.i0] += v * (1 - ty.frac) * (1 - tx.frac);
                                           dst[ty.i0 * w + tx.i1] += v * (1 - ty.frac) * tx.frac;
                                           dst[ty.i1 * w + tx.i0] += v * ty.frac * (1 - tx.frac);
                                           dst[ty.i1 * w + tx.i1] += v * ty.frac * tx.frac;
                                       }
                                   }
                               }
                           }
                       });
}

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank("upsample_bilinear", x, 4);
    std::vector<Rect> rects(x.dim(0), full_rect(x.dim(2), x.dim(3)));
    return crop_resize_bilinear(x, rects, out_h, out_w);
}

Tensor pairwise_sq_dist(const Tensor& x) {
    require_rank("pairwise_sq_dist", x, 2);
    const std::size_t m = x.dim(0), f = x.dim(1);
    const auto in = x.data();
    std::vector<double> out(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < f; ++k) {
                const double diff = in[i * f + k] - in[j * f + k];
                d += diff * diff;
            }
            out[i * m + j] = d;
            out[j * m + i] = d;
        }
    }
    return make_result("pairwise_sq_dist", {m, m}, std::move(out), {x},
                       [x, m, f](const TensorImpl& o) {
                           auto g = grad_buffer(x);
                           if (g.empty()) return;
                           const auto in = x.data();
                           for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < m; ++j) {
                                   if (i == j) continue;
                                   const double coef = 2.0 * (o.grad[i * m + j] + o.grad[j * m + i]);
                                   if (coef == 0.0) continue;
                                   for (std::size_t k = 0; k < f; ++k) {
                                       g[i * f + k] += coef * (in[i * f + k] - in[j * f + k]);
                                   }
                               }
                           }
                       });
}

Tensor masked_mean(const Tensor& x, const Tensor& mask) {
    require_same_shape("masked_mean", x, mask);
    const auto in = x.data();
    const auto m = mask.data();
    double total = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        total += m[i] * in[i];
        weight += m[i];
    }
    const double value = weight != 0.0 ? total / weight : 0.0;
    const Tensor mask_const = mask.detach();
    return make_result("masked_mean", {}, {value}, {x},
                       [x, mask_const, weight](const TensorImpl& o) {
                           auto g = grad_buffer(x);
                           if (g.empty() || weight == 0.0) return;
                           const auto m = mask_const.data();
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * m[i] / weight;
                       });
}

Tensor dropout(const Tensor& x, double p, std::uint64_t seed, std::uint64_t counter) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw std::invalid_argument("dropout: probability must be in [0,1), got " +
                                    std::to_string(p));
    }
    const auto in = x.data();
    auto factor = std::make_shared<std::vector<double>>(in.size());
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double f = hash_uniform(seed, counter + i) < p ? 0.0 : keep_scale;
        (*factor)[i] = f;
        out[i] = in[i] * f;
    }
    return make_result("dropout", x.shape(), std::move(out), {x}, [x, factor](const TensorImpl& o) {
        auto g = grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * (*factor)[i];
    });
}

}  // namespace gssl::ops
