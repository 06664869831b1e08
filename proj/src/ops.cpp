#include "covit/ops.hpp"

#include "covit/error.hpp"
#include "covit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace covit::ops {
namespace {

Graph& same_graph(const Var& a, const Var& b) {
    Graph& g = a.graph();
    if (&g != &b.graph()) throw Error("operands belong to different graphs");
    return g;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool ta, bool tb, bool acc) {
    kernels::active().gemm(kernels::GemmArgs{a, b, c, m, k, n, ta, tb, acc});
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k) shape_fail("matmul", av.shape(), bv.shape());
    Tensor out({m, n});
    gemm(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false, false, false);
    return g.record("matmul", std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
        const double* gy = ctx.output_grad().data();
        if (ctx.needs_grad(0))  // dA = dC * B^T
            gemm(gy, ctx.input(1).data().data(), ctx.input_grad(0).data(), m, n, k, false, true, true);
        if (ctx.needs_grad(1))  // dB = A^T * dC
            gemm(ctx.input(0).data().data(), gy, ctx.input_grad(1).data(), k, m, n, true, false, true);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
    if (bv.cols() != k) shape_fail("matmul_nt", av.shape(), bv.shape());
    Tensor out({m, n});
    gemm(av.data().data(), bv.data().data(), out.data().data(), m, k, n, false, true, false);
    return g.record("matmul_nt", std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
        const double* gy = ctx.output_grad().data();
        if (ctx.needs_grad(0))  // dA = dC * B
            gemm(gy, ctx.input(1).data().data(), ctx.input_grad(0).data(), m, n, k, false, false, true);
        if (ctx.needs_grad(1))  // dB = dC^T * A
            gemm(gy, ctx.input(0).data().data(), ctx.input_grad(1).data(), n, m, k, true, false, true);
    });
}

Var transpose(const Var& a) {
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return a.graph().record("transpose", std::move(out), {a}, [r, c](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        auto& ga = ctx.input_grad(0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[j * r + i];
    });
}

Var add(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
    Tensor out = a.value();
    kernels::active().add(b.value().data().data(), out.data().data(), out.numel());
    return g.record("add", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        for (std::size_t i = 0; i < 2; ++i)
            if (ctx.needs_grad(i)) kernels::active().add(gy.data(), ctx.input_grad(i).data(), gy.size());
    });
}

Var add_row(const Var& a, const Var& bias) {
    Graph& g = same_graph(a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    const std::size_t r = av.rows(), c = av.cols();
    if (bv.numel() != c) shape_fail("add_row", av.shape(), bv.shape());
    Tensor out = av;
    for (std::size_t i = 0; i < r; ++i) kernels::active().add(bv.data().data(), out.data().data() + i * c, c);
    return g.record("add_row", std::move(out), {a, bias}, [r, c](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        if (ctx.needs_grad(0)) kernels::active().add(gy.data(), ctx.input_grad(0).data(), gy.size());
        if (ctx.needs_grad(1)) {
            auto& gb = ctx.input_grad(1);
            for (std::size_t i = 0; i < r; ++i) kernels::active().add(gy.data() + i * c, gb.data(), c);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    Graph& g = same_graph(a, b);
    if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
    Tensor out = a.value();
    const auto bd = b.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bd[i];
    return g.record("mul", std::move(out), {a, b}, [](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        if (ctx.needs_grad(0)) {
            auto& ga = ctx.input_grad(0);
            const auto bd = ctx.input(1).data();
            for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bd[i];
        }
        if (ctx.needs_grad(1)) {
            auto& gb = ctx.input_grad(1);
            const auto ad = ctx.input(0).data();
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ad[i];
        }
    });
}

Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    kernels::active().scale(factor, out.data().data(), out.numel());
    return a.graph().record("scale", std::move(out), {a}, [factor](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        kernels::active().axpy(factor, gy.data(), ctx.input_grad(0).data(), gy.size());
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.graph().record("sum", Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
        const double gy = ctx.output_grad()[0];
        for (double& v : ctx.input_grad(0)) v += gy;
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    if (count == 0 || start + count > c)
        throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(av.shape()));
    Tensor out({r, count});
    for (std::size_t i = 0; i < r; ++i)
        std::copy_n(av.data().data() + i * c + start, count, out.data().data() + i * count);
    return a.graph().record("slice_cols", std::move(out), {a}, [r, c, start, count](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        auto& ga = ctx.input_grad(0);
        for (std::size_t i = 0; i < r; ++i) kernels::active().add(gy.data() + i * count, ga.data() + i * c + start, count);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no operands");
    Graph& g = parts.front().graph();
    const std::size_t r = parts.front().value().rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (&p.graph() != &g) throw Error("operands belong to different graphs");
        if (p.value().rows() != r) shape_fail("concat_cols", parts.front().shape(), p.shape());
        widths.push_back(p.value().cols());
        total += widths.back();
    }
    Tensor out({r, total});
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& pv = parts[k].value();
        for (std::size_t i = 0; i < r; ++i)
            std::copy_n(pv.data().data() + i * widths[k], widths[k], out.data().data() + i * total + offset);
        offset += widths[k];
    }
    return g.record("concat_cols", std::move(out), parts, [r, total, widths](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        std::size_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (ctx.needs_grad(k)) {
                auto& gk = ctx.input_grad(k);
                for (std::size_t i = 0; i < r; ++i)
                    kernels::active().add(gy.data() + i * total + off, gk.data() + i * widths[k], widths[k]);
            }
            off += widths[k];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no operands");
    Graph& g = parts.front().graph();
    const std::size_t c = parts.front().value().cols();
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (&p.graph() != &g) throw Error("operands belong to different graphs");
        if (p.value().cols() != c) shape_fail("concat_rows", parts.front().shape(), p.shape());
        sizes.push_back(p.value().numel());
        rows += p.value().rows();
    }
    Tensor out({rows, c});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
        offset += p.value().numel();
    }
    return g.record("concat_rows", std::move(out), parts, [sizes](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        std::size_t off = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            if (ctx.needs_grad(k)) kernels::active().add(gy.data() + off, ctx.input_grad(k).data(), sizes[k]);
            off += sizes[k];
        }
    });
}

Var row(const Var& a, std::size_t index) {
    const Tensor& av = a.value();
    const std::size_t c = av.cols();
    if (index >= av.rows()) throw ShapeError("row: index out of range for " + shape_string(av.shape()));
    Tensor out({1, c});
    std::copy_n(av.data().data() + index * c, c, out.data().data());
    return a.graph().record("row", std::move(out), {a}, [index, c](BackwardContext& ctx) {
        kernels::active().add(ctx.output_grad().data(), ctx.input_grad(0).data() + index * c, c);
    });
}

std::vector<double> softmax_values(std::span<const double> row) {
    std::vector<double> out(row.size());
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        out[j] = std::exp(row[j] - mx);
        z += out[j];
    }
    for (double& v : out) v /= z;
    return out;
}

Var softmax(const Var& x) {
    const Tensor& xv = x.value();
    const std::size_t r = xv.rows(), c = xv.cols();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = xv.data().data() + i * c;
        double* o = out.data().data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        const double inv = 1.0 / z;
        for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
    }
    return x.graph().record("softmax", std::move(out), {x}, [r, c](BackwardContext& ctx) {
        // dx = y * (dy - <dy, y>)
        const auto y = ctx.output().data();
        const auto& gy = ctx.output_grad();
        auto& gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < r; ++i) {
            const double d = kernels::active().dot(gy.data() + i * c, y.data() + i * c, c);
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (gy[i * c + j] - d);
        }
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    Graph& g = same_graph(x, gamma);
    const Tensor& xv = x.value();
    const std::size_t r = xv.rows(), d = xv.cols();
    if (gamma.value().numel() != d) shape_fail("layer_norm", xv.shape(), gamma.shape());
    if (beta.value().numel() != d) shape_fail("layer_norm", xv.shape(), beta.shape());
    const auto gm = gamma.value().data();
    const auto bt = beta.value().data();

    // Normalized values and inverse std are kept for the backward pass.
    std::vector<double> xhat(xv.numel());
    std::vector<double> rstd(r);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = xv.data().data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(d);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (in[j] - mu) * rstd[i];
            out[i * d + j] = xhat[i * d + j] * gm[j] + bt[j];
        }
    }
    return g.record("layer_norm", std::move(out), {x, gamma, beta},
                    [r, d, xhat = std::move(xhat), rstd = std::move(rstd)](BackwardContext& ctx) {
                        const auto& gy = ctx.output_grad();
                        const auto gm = ctx.input(1).data();
                        if (ctx.needs_grad(0)) {
                            auto& gx = ctx.input_grad(0);
                            std::vector<double> dxhat(d);
                            for (std::size_t i = 0; i < r; ++i) {
                                double m1 = 0.0, m2 = 0.0;
                                for (std::size_t j = 0; j < d; ++j) {
                                    dxhat[j] = gy[i * d + j] * gm[j];
                                    m1 += dxhat[j];
                                    m2 += dxhat[j] * xhat[i * d + j];
                                }
                                m1 /= static_cast<double>(d);
                                m2 /= static_cast<double>(d);
                                for (std::size_t j = 0; j < d; ++j)
                                    gx[i * d + j] += rstd[i] * (dxhat[j] - m1 - xhat[i * d + j] * m2);
                            }
                        }
                        if (ctx.needs_grad(1)) {
                            auto& gg = ctx.input_grad(1);
                            for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < d; ++j) gg[j] += gy[i * d + j] * xhat[i * d + j];
                        }
                        if (ctx.needs_grad(2)) {
                            auto& gb = ctx.input_grad(2);
                            for (std::size_t i = 0; i < r; ++i) kernels::active().add(gy.data() + i * d, gb.data(), d);
                        }
                    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_derivative(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Var gelu(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.data()) v = gelu_value(v);
    return x.graph().record("gelu", std::move(out), {x}, [](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        const auto xd = ctx.input(0).data();
        auto& gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * gelu_derivative(xd[i]);
    });
}

Var dropout(const Var& x, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw Error("dropout probability must be in [0, 1)");
    if (p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> mask(x.value().numel());
    for (double& m : mask) m = keep(rng) ? keep_scale : 0.0;
    Tensor out = x.value();
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] *= mask[i];
    return x.graph().record("dropout", std::move(out), {x}, [mask = std::move(mask)](BackwardContext& ctx) {
        const auto& gy = ctx.output_grad();
        auto& gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
    });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
    const Tensor& lv = logits.value();
    const std::size_t b = lv.rows(), c = lv.cols();
    if (labels.size() != b)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) + " rows");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw Error("cross_entropy: label " + std::to_string(y) + " out of range");
    std::vector<double> probs(lv.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* in = lv.data().data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - mx);
        const double lse = mx + std::log(z);
        loss += lse - in[labels[i]];
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(in[j] - lse);
    }
    loss /= static_cast<double>(b);
    std::vector<int> ys(labels.begin(), labels.end());
    return logits.graph().record("cross_entropy", Tensor::scalar(loss), {logits},
                                 [b, c, probs = std::move(probs), ys = std::move(ys)](BackwardContext& ctx) {
                                     const double gy = ctx.output_grad()[0] / static_cast<double>(b);
                                     auto& gx = ctx.input_grad(0);
                                     for (std::size_t i = 0; i < b; ++i)
                                         for (std::size_t j = 0; j < c; ++j) {
                                             const double onehot = static_cast<std::size_t>(ys[i]) == j ? 1.0 : 0.0;
                                             gx[i * c + j] += gy * (probs[i * c + j] - onehot);
                                         }
                                 });
}

}  // namespace covit::ops
