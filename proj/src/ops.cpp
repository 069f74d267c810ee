#include "sci/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "sci/kernels.hpp"

namespace sci {

namespace {

using detail::TensorNode;

bool wants_grad(const TensorNode& n) {
    return n.requires_grad || n.backward_fn != nullptr || !n.parents.empty();
}

void accum(const std::shared_ptr<TensorNode>& p, std::span<const float> g) {
    if (wants_grad(*p)) p->accumulate(g);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

void check_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}

struct AxisSplit {
    int64_t outer;
    int n;
    int64_t inner;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
    int nd = static_cast<int>(shape.size());
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd)
        throw ShapeError(std::string(op) + ": axis out of range for " + shape_str(shape));
    AxisSplit s{1, shape[static_cast<size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) s.inner *= shape[static_cast<size_t>(i)];
    return s;
}

double l2_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

} // namespace

// -- structural ----------------------------------------------------------

Tensor transpose(const Tensor& a) {
    check_2d(a, "transpose");
    const int m = a.dim(0), n = a.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n);
    auto ad = a.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(j) * m + i] = ad[static_cast<size_t>(i) * n + j];
    return Tensor::make_node({n, m}, std::move(out), {a}, [a, m, n](TensorNode& self) {
        std::vector<float> g(static_cast<size_t>(m) * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                g[static_cast<size_t>(i) * n + j] = self.grad[static_cast<size_t>(j) * m + i];
        accum(a.node(), g);
    });
}

Tensor row(const Tensor& a, int i) {
    check_2d(a, "row");
    const int m = a.dim(0), n = a.dim(1);
    if (i < 0 || i >= m)
        throw ContractError("row: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
    auto ad = a.data();
    std::vector<float> out(ad.begin() + static_cast<size_t>(i) * n,
                           ad.begin() + static_cast<size_t>(i + 1) * n);
    return Tensor::make_node({n}, std::move(out), {a}, [a, i, n](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        a.node()->ensure_grad();
        float* g = a.node()->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) g[j] += self.grad[static_cast<size_t>(j)];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ContractError("stack_rows: empty row list");
    const int n = rows[0].dim(0);
    for (const Tensor& r : rows)
        if (r.ndim() != 1 || r.dim(0) != n)
            throw ShapeError("stack_rows: rows must share shape [" + std::to_string(n) + "], got " +
                             shape_str(r.shape()));
    const int m = static_cast<int>(rows.size());
    std::vector<float> out;
    out.reserve(static_cast<size_t>(m) * n);
    for (const Tensor& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
    return Tensor::make_node({m, n}, std::move(out), rows, [rows, n](TensorNode& self) {
        for (size_t i = 0; i < rows.size(); ++i)
            accum(rows[i].node(), std::span<const float>(self.grad.data() + i * n, static_cast<size_t>(n)));
    });
}

Tensor slice_cols(const Tensor& a, int start, int len) {
    check_2d(a, "slice_cols");
    const int m = a.dim(0), n = a.dim(1);
    if (start < 0 || len <= 0 || start + len > n)
        throw ContractError("slice_cols: range [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") exceeds " + shape_str(a.shape()));
    std::vector<float> out(static_cast<size_t>(m) * len);
    auto ad = a.data();
    for (int i = 0; i < m; ++i)
        std::copy_n(ad.data() + static_cast<size_t>(i) * n + start, len,
                    out.data() + static_cast<size_t>(i) * len);
    return Tensor::make_node({m, len}, std::move(out), {a}, [a, start, len, m, n](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        a.node()->ensure_grad();
        for (int i = 0; i < m; ++i) {
            float* g = a.node()->grad.data() + static_cast<size_t>(i) * n + start;
            const float* s = self.grad.data() + static_cast<size_t>(i) * len;
            for (int j = 0; j < len; ++j) g[j] += s[j];
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty part list");
    const int m = parts[0].dim(0);
    int total = 0;
    for (const Tensor& p : parts) {
        check_2d(p, "concat_cols");
        if (p.dim(0) != m)
            throw ShapeError("concat_cols: row count mismatch " + shape_str(p.shape()));
        total += p.dim(1);
    }
    std::vector<float> out(static_cast<size_t>(m) * total);
    int offset = 0;
    for (const Tensor& p : parts) {
        const int w = p.dim(1);
        auto pd = p.data();
        for (int i = 0; i < m; ++i)
            std::copy_n(pd.data() + static_cast<size_t>(i) * w, w,
                        out.data() + static_cast<size_t>(i) * total + offset);
        offset += w;
    }
    return Tensor::make_node({m, total}, std::move(out), parts, [parts, m, total](TensorNode& self) {
        int off = 0;
        for (const Tensor& p : parts) {
            const int w = p.dim(1);
            if (wants_grad(*p.node())) {
                p.node()->ensure_grad();
                for (int i = 0; i < m; ++i) {
                    float* g = p.node()->grad.data() + static_cast<size_t>(i) * w;
                    const float* s = self.grad.data() + static_cast<size_t>(i) * total + off;
                    for (int j = 0; j < w; ++j) g[j] += s[j];
                }
            }
            off += w;
        }
    });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    check_2d(table, "embedding_rows");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ContractError("embedding_rows: id " + std::to_string(id) + " out of range [0, " +
                                std::to_string(v) + ")");
    const int L = static_cast<int>(ids.size());
    std::vector<float> out(static_cast<size_t>(L) * d);
    auto td = table.data();
    for (int i = 0; i < L; ++i)
        std::copy_n(td.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d, d,
                    out.data() + static_cast<size_t>(i) * d);
    return Tensor::make_node({L, d}, std::move(out), {table}, [table, ids, d](TensorNode& self) {
        if (!wants_grad(*table.node())) return;
        table.node()->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            float* g = table.node()->grad.data() + static_cast<size_t>(ids[i]) * d;
            const float* s = self.grad.data() + i * d;
            for (int j = 0; j < d; ++j) g[j] += s[j];
        }
    });
}

Tensor detach(const Tensor& a) {
    return Tensor::from_data(a.shape(), std::vector<float>(a.data().begin(), a.data().end()));
}

// -- elementwise / broadcast ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto ad = a.data(), bd = b.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return Tensor::make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        accum(a.node(), self.grad);
        accum(b.node(), self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto ad = a.data(), bd = b.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return Tensor::make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        accum(a.node(), self.grad);
        if (wants_grad(*b.node())) {
            std::vector<float> g(self.grad.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = -self.grad[i];
            accum(b.node(), g);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto ad = a.data(), bd = b.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    return Tensor::make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        if (wants_grad(*a.node())) {
            std::vector<float> g(self.grad.size());
            auto bd2 = b.data();
            for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * bd2[i];
            accum(a.node(), g);
        }
        if (wants_grad(*b.node())) {
            std::vector<float> g(self.grad.size());
            auto ad2 = a.data();
            for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * ad2[i];
            accum(b.node(), g);
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    auto ad = a.data(), bd = b.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] / bd[i];
    return Tensor::make_node(a.shape(), std::move(out), {a, b}, [a, b](TensorNode& self) {
        auto ad2 = a.data();
        auto bd2 = b.data();
        if (wants_grad(*a.node())) {
            std::vector<float> g(self.grad.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / bd2[i];
            accum(a.node(), g);
        }
        if (wants_grad(*b.node())) {
            std::vector<float> g(self.grad.size());
            for (size_t i = 0; i < g.size(); ++i)
                g[i] = -self.grad[i] * ad2[i] / (bd2[i] * bd2[i]);
            accum(b.node(), g);
        }
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

Tensor scale(const Tensor& a, float s) {
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * s;
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a, s](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * s;
        accum(a.node(), g);
    });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1)
        throw ShapeError("scale_by: scale must be scalar, got " + shape_str(s.shape()));
    const float sv = s.data()[0];
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * sv;
    return Tensor::make_node(a.shape(), std::move(out), {a, s}, [a, s, sv](TensorNode& self) {
        if (wants_grad(*a.node())) {
            std::vector<float> g(self.grad.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * sv;
            accum(a.node(), g);
        }
        if (wants_grad(*s.node())) {
            auto ad2 = a.data();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i)
                acc += static_cast<double>(self.grad[i]) * ad2[i];
            const float g[1] = {static_cast<float>(acc)};
            accum(s.node(), g);
        }
    });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    check_2d(a, "add_rowvec");
    if (v.ndim() != 1 || v.dim(0) != a.dim(1))
        throw ShapeError("add_rowvec: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data(), vd = v.data();
    std::vector<float> out(ad.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = ad[static_cast<size_t>(i) * n + j] + vd[static_cast<size_t>(j)];
    return Tensor::make_node(a.shape(), std::move(out), {a, v}, [a, v, m, n](TensorNode& self) {
        accum(a.node(), self.grad);
        if (wants_grad(*v.node())) {
            std::vector<float> g(static_cast<size_t>(n), 0.0f);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) g[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * n + j];
            accum(v.node(), g);
        }
    });
}

Tensor add_colvec(const Tensor& a, const Tensor& v) {
    check_2d(a, "add_colvec");
    if (v.ndim() != 1 || v.dim(0) != a.dim(0))
        throw ShapeError("add_colvec: " + shape_str(a.shape()) + " + " + shape_str(v.shape()));
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data(), vd = v.data();
    std::vector<float> out(ad.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = ad[static_cast<size_t>(i) * n + j] + vd[static_cast<size_t>(i)];
    return Tensor::make_node(a.shape(), std::move(out), {a, v}, [a, v, m, n](TensorNode& self) {
        accum(a.node(), self.grad);
        if (wants_grad(*v.node())) {
            std::vector<float> g(static_cast<size_t>(m), 0.0f);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) g[static_cast<size_t>(i)] += self.grad[static_cast<size_t>(i) * n + j];
            accum(v.node(), g);
        }
    });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
    check_2d(a, "mul_rowvec");
    if (v.ndim() != 1 || v.dim(0) != a.dim(1))
        throw ShapeError("mul_rowvec: " + shape_str(a.shape()) + " ⊙ " + shape_str(v.shape()));
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data(), vd = v.data();
    std::vector<float> out(ad.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = ad[static_cast<size_t>(i) * n + j] * vd[static_cast<size_t>(j)];
    return Tensor::make_node(a.shape(), std::move(out), {a, v}, [a, v, m, n](TensorNode& self) {
        if (wants_grad(*a.node())) {
            std::vector<float> g(self.grad.size());
            auto vd2 = v.data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    g[static_cast<size_t>(i) * n + j] = self.grad[static_cast<size_t>(i) * n + j] * vd2[static_cast<size_t>(j)];
            accum(a.node(), g);
        }
        if (wants_grad(*v.node())) {
            std::vector<float> g(static_cast<size_t>(n), 0.0f);
            auto ad2 = a.data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    g[static_cast<size_t>(j)] += self.grad[static_cast<size_t>(i) * n + j] * ad2[static_cast<size_t>(i) * n + j];
            accum(v.node(), g);
        }
    });
}

Tensor exp(const Tensor& a) {
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(ad[i]);
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * self.data[i];
        accum(a.node(), g);
    });
}

Tensor log(const Tensor& a) {
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(ad[i]);
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        auto ad2 = a.data();
        std::vector<float> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / ad2[i];
        accum(a.node(), g);
    });
}

Tensor gelu(const Tensor& a) {
    constexpr float kSqrt2OverPi = 0.7978845608028654f;
    constexpr float kCubic = 0.044715f;
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const float x = ad[i];
        const float u = kSqrt2OverPi * (x + kCubic * x * x * x);
        out[i] = 0.5f * x * (1.0f + std::tanh(u));
    }
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        auto ad2 = a.data();
        std::vector<float> g(self.grad.size());
        for (size_t i = 0; i < g.size(); ++i) {
            const float x = ad2[i];
            const float u = kSqrt2OverPi * (x + kCubic * x * x * x);
            const float t = std::tanh(u);
            const float du = kSqrt2OverPi * (1.0f + 3.0f * kCubic * x * x);
            const float dy = 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
            g[i] = self.grad[i] * dy;
        }
        accum(a.node(), g);
    });
}

// -- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    return Tensor::make_node({1}, {static_cast<float>(acc)}, {a}, [a](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(a.data().size(), self.grad[0]);
        accum(a.node(), g);
    });
}

Tensor mean_all(const Tensor& a) {
    const int64_t n = a.numel();
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    acc /= static_cast<double>(n);
    return Tensor::make_node({1}, {static_cast<float>(acc)}, {a}, [a, n](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(a.data().size(), self.grad[0] / static_cast<float>(n));
        accum(a.node(), g);
    });
}

Tensor mean_rows(const Tensor& a) {
    check_2d(a, "mean_rows");
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data();
    std::vector<float> out(static_cast<size_t>(n), 0.0f);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += ad[static_cast<size_t>(i) * n + j];
    const float inv = 1.0f / static_cast<float>(m);
    for (float& v : out) v *= inv;
    return Tensor::make_node({n}, std::move(out), {a}, [a, m, n, inv](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(static_cast<size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[static_cast<size_t>(i) * n + j] = self.grad[static_cast<size_t>(j)] * inv;
        accum(a.node(), g);
    });
}

Tensor row_sums(const Tensor& a) {
    check_2d(a, "row_sums");
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data();
    std::vector<float> out(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += ad[static_cast<size_t>(i) * n + j];
        out[static_cast<size_t>(i)] = static_cast<float>(acc);
    }
    return Tensor::make_node({m}, std::move(out), {a}, [a, m, n](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(static_cast<size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) g[static_cast<size_t>(i) * n + j] = self.grad[static_cast<size_t>(i)];
        accum(a.node(), g);
    });
}

// -- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<float> out(static_cast<size_t>(m) * n);
    kernels::matmul_nn(a.data(), b.data(), out, m, k, n);
    return Tensor::make_node({m, n}, std::move(out), {a, b}, [a, b, m, k, n](TensorNode& self) {
        if (wants_grad(*a.node())) {
            std::vector<float> g(static_cast<size_t>(m) * k);
            kernels::matmul_nt(self.grad, b.data(), g, m, n, k);
            accum(a.node(), g);
        }
        if (wants_grad(*b.node())) {
            std::vector<float> g(static_cast<size_t>(k) * n);
            kernels::matmul_tn(a.data(), self.grad, g, k, m, n);
            accum(b.node(), g);
        }
    });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1 || a.dim(0) != b.dim(0))
        throw ShapeError("dot: expected equal-length vectors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    double acc = 0.0;
    auto ad = a.data(), bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) acc += static_cast<double>(ad[i]) * bd[i];
    return Tensor::make_node({1}, {static_cast<float>(acc)}, {a, b}, [a, b](TensorNode& self) {
        const float g0 = self.grad[0];
        if (wants_grad(*a.node())) {
            auto bd2 = b.data();
            std::vector<float> g(bd2.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = g0 * bd2[i];
            accum(a.node(), g);
        }
        if (wants_grad(*b.node())) {
            auto ad2 = a.data();
            std::vector<float> g(ad2.size());
            for (size_t i = 0; i < g.size(); ++i) g[i] = g0 * ad2[i];
            accum(b.node(), g);
        }
    });
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1 || a.dim(0) != b.dim(0))
        throw ShapeError("cosine_sim: expected equal-length vectors, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const double na = l2_norm(a.data());
    const double nb = l2_norm(b.data());
    if (na < 1e-12 || nb < 1e-12)
        throw DegenerateVectorError("cosine_sim: zero-norm input vector");
    double s = 0.0;
    auto ad = a.data(), bd = b.data();
    for (size_t i = 0; i < ad.size(); ++i) s += static_cast<double>(ad[i]) * bd[i];
    const double cosv = s / (na * nb);
    return Tensor::make_node({1}, {static_cast<float>(cosv)}, {a, b},
                             [a, b, na, nb, cosv](TensorNode& self) {
        const float g0 = self.grad[0];
        auto ad2 = a.data();
        auto bd2 = b.data();
        if (wants_grad(*a.node())) {
            std::vector<float> g(ad2.size());
            for (size_t i = 0; i < g.size(); ++i)
                g[i] = g0 * static_cast<float>(bd2[i] / (na * nb) - cosv * ad2[i] / (na * na));
            accum(a.node(), g);
        }
        if (wants_grad(*b.node())) {
            std::vector<float> g(bd2.size());
            for (size_t i = 0; i < g.size(); ++i)
                g[i] = g0 * static_cast<float>(ad2[i] / (na * nb) - cosv * bd2[i] / (nb * nb));
            accum(b.node(), g);
        }
    });
}

Tensor l2_normalize_rows(const Tensor& a) {
    check_2d(a, "l2_normalize_rows");
    const int m = a.dim(0), n = a.dim(1);
    auto ad = a.data();
    std::vector<float> out(ad.size());
    std::vector<float> norms(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double r = l2_norm(ad.subspan(static_cast<size_t>(i) * n, static_cast<size_t>(n)));
        if (r < 1e-12)
            throw DegenerateVectorError("l2_normalize_rows: zero-norm row " + std::to_string(i));
        norms[static_cast<size_t>(i)] = static_cast<float>(r);
        const float inv = static_cast<float>(1.0 / r);
        for (int j = 0; j < n; ++j)
            out[static_cast<size_t>(i) * n + j] = ad[static_cast<size_t>(i) * n + j] * inv;
    }
    return Tensor::make_node(a.shape(), std::move(out), {a},
                             [a, m, n, norms = std::move(norms)](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(self.grad.size());
        for (int i = 0; i < m; ++i) {
            const float* y = self.data.data() + static_cast<size_t>(i) * n;
            const float* gy = self.grad.data() + static_cast<size_t>(i) * n;
            double proj = 0.0;
            for (int j = 0; j < n; ++j) proj += static_cast<double>(y[j]) * gy[j];
            const float inv = 1.0f / norms[static_cast<size_t>(i)];
            for (int j = 0; j < n; ++j)
                g[static_cast<size_t>(i) * n + j] = (gy[j] - y[j] * static_cast<float>(proj)) * inv;
        }
        accum(a.node(), g);
    });
}

Tensor l2_normalize(const Tensor& a) {
    if (a.ndim() != 1) throw ShapeError("l2_normalize: expected 1-D, got " + shape_str(a.shape()));
    Tensor r = l2_normalize_rows(stack_rows({a}));
    return row(r, 0);
}

// -- softmax family -----------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
    const AxisSplit ax = split_axis(a.shape(), axis, "softmax");
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (int64_t o = 0; o < ax.outer; ++o) {
        for (int64_t in = 0; in < ax.inner; ++in) {
            const int64_t base = o * ax.n * ax.inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (int j = 0; j < ax.n; ++j) mx = std::max(mx, ad[static_cast<size_t>(base + j * ax.inner)]);
            double denom = 0.0;
            for (int j = 0; j < ax.n; ++j) {
                const float e = std::exp(ad[static_cast<size_t>(base + j * ax.inner)] - mx);
                out[static_cast<size_t>(base + j * ax.inner)] = e;
                denom += e;
            }
            const float inv = static_cast<float>(1.0 / denom);
            for (int j = 0; j < ax.n; ++j) out[static_cast<size_t>(base + j * ax.inner)] *= inv;
        }
    }
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a, ax](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(self.grad.size());
        for (int64_t o = 0; o < ax.outer; ++o) {
            for (int64_t in = 0; in < ax.inner; ++in) {
                const int64_t base = o * ax.n * ax.inner + in;
                double dotv = 0.0;
                for (int j = 0; j < ax.n; ++j) {
                    const size_t idx = static_cast<size_t>(base + j * ax.inner);
                    dotv += static_cast<double>(self.grad[idx]) * self.data[idx];
                }
                for (int j = 0; j < ax.n; ++j) {
                    const size_t idx = static_cast<size_t>(base + j * ax.inner);
                    g[idx] = self.data[idx] * (self.grad[idx] - static_cast<float>(dotv));
                }
            }
        }
        accum(a.node(), g);
    });
}

Tensor log_softmax(const Tensor& a, int axis) {
    const AxisSplit ax = split_axis(a.shape(), axis, "log_softmax");
    auto ad = a.data();
    std::vector<float> out(ad.size());
    for (int64_t o = 0; o < ax.outer; ++o) {
        for (int64_t in = 0; in < ax.inner; ++in) {
            const int64_t base = o * ax.n * ax.inner + in;
            float mx = -std::numeric_limits<float>::infinity();
            for (int j = 0; j < ax.n; ++j) mx = std::max(mx, ad[static_cast<size_t>(base + j * ax.inner)]);
            double denom = 0.0;
            for (int j = 0; j < ax.n; ++j)
                denom += std::exp(static_cast<double>(ad[static_cast<size_t>(base + j * ax.inner)]) - mx);
            const float lse = mx + static_cast<float>(std::log(denom));
            for (int j = 0; j < ax.n; ++j) {
                const size_t idx = static_cast<size_t>(base + j * ax.inner);
                out[idx] = ad[idx] - lse;
            }
        }
    }
    return Tensor::make_node(a.shape(), std::move(out), {a}, [a, ax](TensorNode& self) {
        if (!wants_grad(*a.node())) return;
        std::vector<float> g(self.grad.size());
        for (int64_t o = 0; o < ax.outer; ++o) {
            for (int64_t in = 0; in < ax.inner; ++in) {
                const int64_t base = o * ax.n * ax.inner + in;
                double gsum = 0.0;
                for (int j = 0; j < ax.n; ++j) gsum += self.grad[static_cast<size_t>(base + j * ax.inner)];
                for (int j = 0; j < ax.n; ++j) {
                    const size_t idx = static_cast<size_t>(base + j * ax.inner);
                    g[idx] = self.grad[idx] - std::exp(self.data[idx]) * static_cast<float>(gsum);
                }
            }
        }
        accum(a.node(), g);
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const Shape& xs = x.shape();
    if (xs.empty()) throw ShapeError("layer_norm: scalar input");
    const int d = xs.back();
    if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 || beta.dim(0) != d)
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    const int64_t rows = x.numel() / d;
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    std::vector<float> out(xd.size());
    std::vector<float> xhat(xd.size());
    std::vector<float> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = xd.data() + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= d;
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_std[static_cast<size_t>(r)] = inv;
        for (int j = 0; j < d; ++j) {
            const float xh = (xr[j] - static_cast<float>(mean)) * inv;
            xhat[static_cast<size_t>(r * d + j)] = xh;
            out[static_cast<size_t>(r * d + j)] = gd[static_cast<size_t>(j)] * xh + bd[static_cast<size_t>(j)];
        }
    }
    return Tensor::make_node(xs, std::move(out), {x, gamma, beta},
                             [x, gamma, beta, rows, d, xhat = std::move(xhat),
                              inv_std = std::move(inv_std)](TensorNode& self) {
        auto gd2 = gamma.data();
        const bool want_x = wants_grad(*x.node());
        const bool want_g = wants_grad(*gamma.node());
        const bool want_b = wants_grad(*beta.node());
        std::vector<float> gx(want_x ? self.grad.size() : 0);
        std::vector<float> gg(want_g ? static_cast<size_t>(d) : 0, 0.0f);
        std::vector<float> gb(want_b ? static_cast<size_t>(d) : 0, 0.0f);
        for (int64_t r = 0; r < rows; ++r) {
            const float* gy = self.grad.data() + r * d;
            const float* xh = xhat.data() + r * d;
            if (want_g)
                for (int j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += gy[j] * xh[j];
            if (want_b)
                for (int j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += gy[j];
            if (want_x) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dxh = static_cast<double>(gy[j]) * gd2[static_cast<size_t>(j)];
                    m1 += dxh;
                    m2 += dxh * xh[j];
                }
                m1 /= d;
                m2 /= d;
                const float inv = inv_std[static_cast<size_t>(r)];
                for (int j = 0; j < d; ++j) {
                    const float dxh = gy[j] * gd2[static_cast<size_t>(j)];
                    gx[static_cast<size_t>(r * d + j)] =
                        inv * (dxh - static_cast<float>(m1) - xh[j] * static_cast<float>(m2));
                }
            }
        }
        if (want_x) accum(x.node(), gx);
        if (want_g) accum(gamma.node(), gg);
        if (want_b) accum(beta.node(), gb);
    });
}

Tensor cross_entropy(const Tensor& logits, const Tensor& targets) {
    check_2d(logits, "cross_entropy");
    check_same_shape(logits, targets, "cross_entropy");
    const int m = logits.dim(0), c = logits.dim(1);
    auto ld = logits.data();
    auto td = targets.data();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += td[static_cast<size_t>(i) * c + j];
        if (std::abs(s - 1.0) > 1e-3)
            throw ContractError("cross_entropy: target row " + std::to_string(i) +
                                " sums to " + std::to_string(s) + ", expected 1");
    }
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const float* lr = ld.data() + static_cast<size_t>(i) * c;
        const float* tr = td.data() + static_cast<size_t>(i) * c;
        float mx = lr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, lr[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(lr[j]) - mx);
        const double lse = mx + std::log(denom);
        double dotv = 0.0;
        for (int j = 0; j < c; ++j) dotv += static_cast<double>(tr[j]) * lr[j];
        total += lse - dotv;
    }
    total /= m;
    return Tensor::make_node({1}, {static_cast<float>(total)}, {logits, targets},
                             [logits, targets, m, c](TensorNode& self) {
        if (!wants_grad(*logits.node())) return;
        auto ld2 = logits.data();
        auto td2 = targets.data();
        const float scale = self.grad[0] / static_cast<float>(m);
        std::vector<float> g(ld2.size());
        for (int i = 0; i < m; ++i) {
            const float* lr = ld2.data() + static_cast<size_t>(i) * c;
            float mx = lr[0];
            for (int j = 1; j < c; ++j) mx = std::max(mx, lr[j]);
            double denom = 0.0;
            for (int j = 0; j < c; ++j) denom += std::exp(static_cast<double>(lr[j]) - mx);
            for (int j = 0; j < c; ++j) {
                const float p = static_cast<float>(std::exp(static_cast<double>(lr[j]) - mx) / denom);
                g[static_cast<size_t>(i) * c + j] = (p - td2[static_cast<size_t>(i) * c + j]) * scale;
            }
        }
        accum(logits.node(), g);
    });
}

} // namespace sci
