#include "slotpi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_nodes_created = 0;

std::shared_ptr<Node> make_node(std::size_t rows, std::size_t cols, std::vector<double> value) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(value);
    ++t_nodes_created;
    return n;
}

using VjpFn = std::function<std::vector<Tensor>(const Tensor&, const Tensor&)>;

// Record an op result. Inputs and the vjp are kept only when recording is on
// and some input participates in differentiation.
Tensor make_op(std::size_t rows, std::size_t cols, std::vector<double> value,
               std::vector<Tensor> inputs, VjpFn vjp) {
    auto n = make_node(rows, cols, std::move(value));
    bool track = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs) {
            if (in.requires_grad()) track = true;
        }
    }
    if (track) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (auto& in : inputs) n->inputs.push_back(in.node());
        n->vjp = std::move(vjp);
    }
    return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": operands " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

// Equal-shape or scalar-vs-tensor broadcasting only.
struct Broadcast {
    std::size_t rows, cols;
    bool a_scalar, b_scalar;
};

Broadcast broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.numel() == 1 && b.numel() > 1) return {b.rows(), b.cols(), true, false};
    if (b.numel() == 1 && a.numel() > 1) return {a.rows(), a.cols(), false, true};
    check_same_shape(a, b, op);
    return {a.rows(), a.cols(), false, false};
}

// Collapse a gradient back onto a scalar operand.
Tensor reduce_like(const Tensor& g, const Tensor& operand) {
    if (operand.numel() == 1 && g.numel() > 1) return sum_all(g);
    return g;
}

double softplus_val(double x) {
    if (x > 30.0) return x;  // saturation branch, error < 1e-13
    return std::log1p(std::exp(x));
}

double sigmoid_val(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

bool grad_mode_enabled() { return t_grad_enabled; }

GradModeGuard::GradModeGuard(bool enable) : prev_(t_grad_enabled) { t_grad_enabled = enable; }
GradModeGuard::~GradModeGuard() { t_grad_enabled = prev_; }

std::uint64_t nodes_created() { return t_nodes_created; }

Tensor Tensor::constant(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) throw ShapeError("constant: data length vs shape");
    return Tensor(make_node(rows, cols, std::move(data)));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor(make_node(rows, cols, std::vector<double>(rows * cols, 0.0)));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
    return Tensor(make_node(rows, cols, std::vector<double>(rows * cols, v)));
}

Tensor Tensor::leaf(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) throw ShapeError("leaf: data length vs shape");
    auto n = make_node(rows, cols, std::move(data));
    n->requires_grad = true;
    return Tensor(n);
}

Tensor add(const Tensor& a, const Tensor& b) {
    auto bc = broadcast_shape(a, b, "add");
    std::vector<double> out(bc.rows * bc.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[bc.a_scalar ? 0 : i] + b.data()[bc.b_scalar ? 0 : i];
    return make_op(bc.rows, bc.cols, std::move(out), {a, b},
                   [a, b](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {reduce_like(g, a), reduce_like(g, b)};
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    auto bc = broadcast_shape(a, b, "sub");
    std::vector<double> out(bc.rows * bc.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[bc.a_scalar ? 0 : i] - b.data()[bc.b_scalar ? 0 : i];
    return make_op(bc.rows, bc.cols, std::move(out), {a, b},
                   [a, b](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {reduce_like(g, a), reduce_like(neg(g), b)};
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    auto bc = broadcast_shape(a, b, "mul");
    std::vector<double> out(bc.rows * bc.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.data()[bc.a_scalar ? 0 : i] * b.data()[bc.b_scalar ? 0 : i];
    return make_op(bc.rows, bc.cols, std::move(out), {a, b},
                   [a, b](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {reduce_like(mul(g, b), a), reduce_like(mul(g, a), b)};
                   });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [c](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {scale(g, c)};
                   });
}

Tensor add_const(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [](const Tensor&, const Tensor& g) -> std::vector<Tensor> { return {g}; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor pow_const(const Tensor& a, double p) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(a.data()[i], p);
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [a, p](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, scale(pow_const(a, p - 1.0), p))};
                   });
}

Tensor exp_t(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [](const Tensor& self, const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, self)};
                   });
}

Tensor log_t(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [a](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, pow_const(a, -1.0))};
                   });
}

Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_val(a.data()[i]);
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [a](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {mul(g, sigmoid(a))};
                   });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_val(a.data()[i]);
    return make_op(a.rows(), a.cols(), std::move(out), {a},
                   [](const Tensor& self, const Tensor& g) -> std::vector<Tensor> {
                       // d sigma = sigma * (1 - sigma)
                       return {mul(g, mul(self, add_const(neg(self), 1.0)))};
                   });
}

Tensor silu(const Tensor& a) { return mul(a, sigmoid(a)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dims " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data()[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.data()[p * n + j];
        }
    return make_op(m, n, std::move(out), {a, b},
                   [a, b](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {matmul(g, transpose(b)), matmul(transpose(a), g)};
                   });
}

Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    return make_op(c, r, std::move(out), {a},
                   [](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {transpose(g)};
                   });
}

Tensor rowsum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += a.data()[i * c + j];
    return make_op(r, 1, std::move(out), {a},
                   [c](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {broadcast_col(g, c)};
                   });
}

Tensor colsum(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
    return make_op(1, c, std::move(out), {a},
                   [r](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {broadcast_row(g, r)};
                   });
}

Tensor broadcast_col(const Tensor& a, std::size_t cols) {
    if (a.cols() != 1) throw ShapeError("broadcast_col: expected Nx1");
    const std::size_t r = a.rows();
    std::vector<double> out(r * cols);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = a.data()[i];
    return make_op(r, cols, std::move(out), {a},
                   [](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {rowsum(g)};
                   });
}

Tensor broadcast_row(const Tensor& a, std::size_t rows) {
    if (a.rows() != 1) throw ShapeError("broadcast_row: expected 1xD");
    const std::size_t c = a.cols();
    std::vector<double> out(rows * c);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[j];
    return make_op(rows, c, std::move(out), {a},
                   [](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {colsum(g)};
                   });
}

Tensor broadcast_full(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (a.numel() != 1) throw ShapeError("broadcast_full: expected scalar");
    std::vector<double> out(rows * cols, a.data()[0]);
    return make_op(rows, cols, std::move(out), {a},
                   [](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {sum_all(g)};
                   });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const std::size_t r = a.rows(), c = a.cols();
    return make_op(1, 1, {s}, {a},
                   [r, c](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {broadcast_full(g, r, c)};
                   });
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / double(a.numel())); }

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t c = parts[0].cols();
    std::size_t r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw ShapeError("concat_rows: column mismatch");
        r += p.rows();
    }
    std::vector<double> out;
    out.reserve(r * c);
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        offsets.push_back(out.size() / c);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    std::vector<std::size_t> lens;
    for (const auto& p : parts) lens.push_back(p.rows());
    return make_op(r, c, std::move(out), parts,
                   [offsets, lens](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       std::vector<Tensor> gs;
                       for (std::size_t i = 0; i < offsets.size(); ++i)
                           gs.push_back(slice_rows(g, offsets[i], lens[i]));
                       return gs;
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row mismatch");
        c += p.cols();
    }
    std::vector<double> out(r * c);
    std::vector<std::size_t> offsets, lens;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        lens.push_back(p.cols());
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j)
                out[i * c + off + j] = p.data()[i * p.cols() + j];
        off += p.cols();
    }
    return make_op(r, c, std::move(out), parts,
                   [offsets, lens](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       std::vector<Tensor> gs;
                       for (std::size_t i = 0; i < offsets.size(); ++i)
                           gs.push_back(slice_cols(g, offsets[i], lens[i]));
                       return gs;
                   });
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len) {
    if (start + len > a.rows()) throw ShapeError("slice_rows: out of range");
    const std::size_t c = a.cols(), total = a.rows();
    std::vector<double> out(a.data().begin() + start * c, a.data().begin() + (start + len) * c);
    return make_op(len, c, std::move(out), {a},
                   [total, start](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {embed_rows(g, total, start)};
                   });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    if (start + len > a.cols()) throw ShapeError("slice_cols: out of range");
    const std::size_t r = a.rows(), c = a.cols(), total = c;
    std::vector<double> out(r * len);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j) out[i * len + j] = a.data()[i * c + start + j];
    return make_op(r, len, std::move(out), {a},
                   [total, start](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {embed_cols(g, total, start)};
                   });
}

Tensor embed_rows(const Tensor& a, std::size_t total_rows, std::size_t start) {
    if (start + a.rows() > total_rows) throw ShapeError("embed_rows: out of range");
    const std::size_t c = a.cols(), len = a.rows();
    std::vector<double> out(total_rows * c, 0.0);
    std::copy(a.data().begin(), a.data().end(), out.begin() + start * c);
    return make_op(total_rows, c, std::move(out), {a},
                   [start, len](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {slice_rows(g, start, len)};
                   });
}

Tensor embed_cols(const Tensor& a, std::size_t total_cols, std::size_t start) {
    if (start + a.cols() > total_cols) throw ShapeError("embed_cols: out of range");
    const std::size_t r = a.rows(), len = a.cols();
    std::vector<double> out(r * total_cols, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j) out[i * total_cols + start + j] = a.data()[i * len + j];
    return make_op(r, total_cols, std::move(out), {a},
                   [start, len](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {slice_cols(g, start, len)};
                   });
}

Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
    const std::size_t c = a.cols(), total = a.rows();
    for (std::size_t i : idx)
        if (i >= total) throw ShapeError("gather_rows: index out of range");
    std::vector<double> out(idx.size() * c);
    for (std::size_t k = 0; k < idx.size(); ++k)
        std::copy(a.data().begin() + idx[k] * c, a.data().begin() + (idx[k] + 1) * c,
                  out.begin() + k * c);
    return make_op(idx.size(), c, std::move(out), {a},
                   [idx, total](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {scatter_rows(g, idx, total)};
                   });
}

Tensor scatter_rows(const Tensor& a, std::vector<std::size_t> idx, std::size_t total_rows) {
    if (idx.size() != a.rows()) throw ShapeError("scatter_rows: index count vs rows");
    const std::size_t c = a.cols();
    std::vector<double> out(total_rows * c, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= total_rows) throw ShapeError("scatter_rows: index out of range");
        for (std::size_t j = 0; j < c; ++j) out[idx[k] * c + j] += a.data()[k * c + j];
    }
    return make_op(total_rows, c, std::move(out), {a},
                   [idx](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {gather_rows(g, idx)};
                   });
}

Tensor permute_flat(const Tensor& a, std::vector<std::size_t> perm, std::size_t out_rows,
                    std::size_t out_cols) {
    if (perm.size() != a.numel() || out_rows * out_cols != perm.size())
        throw ShapeError("permute_flat: size mismatch");
    std::vector<double> out(perm.size());
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out[i] = a.data()[perm[i]];
        inv[perm[i]] = i;
    }
    const std::size_t ar = a.rows(), ac = a.cols();
    return make_op(out_rows, out_cols, std::move(out), {a},
                   [inv, ar, ac](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {permute_flat(g, inv, ar, ac)};
                   });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.numel()) throw ShapeError("reshape: element count");
    const std::size_t ar = a.rows(), ac = a.cols();
    return make_op(rows, cols, a.data(), {a},
                   [ar, ac](const Tensor&, const Tensor& g) -> std::vector<Tensor> {
                       return {reshape(g, ar, ac)};
                   });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.rows(), a.cols(), a.data()); }

Tensor softmax_rows(const Tensor& a) {
    for (double v : a.data())
        if (std::isnan(v)) throw NaNError("softmax input");
    // Row max as a detached constant; subtracting it does not change gradients.
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> m(r, -1e300);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m[i] = std::max(m[i], a.at(i, j));
    Tensor mx = Tensor::constant(r, 1, std::move(m));
    Tensor e = exp_t(sub(a, broadcast_col(mx, c)));
    Tensor s = rowsum(e);
    return mul(e, broadcast_col(pow_const(s, -1.0), c));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t d = x.cols();
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
        throw ShapeError("layer_norm: gain/bias must be 1xD");
    Tensor mu = scale(rowsum(x), 1.0 / double(d));
    Tensor xc = sub(x, broadcast_col(mu, d));
    Tensor var = scale(rowsum(mul(xc, xc)), 1.0 / double(d));
    Tensor inv = pow_const(add_const(var, eps), -0.5);
    Tensor y = mul(xc, broadcast_col(inv, d));
    return add(mul(y, broadcast_row(gain, x.rows())), broadcast_row(bias, x.rows()));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), broadcast_row(b, x.rows()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    Tensor d = sub(a, b);
    return mean_all(mul(d, d));
}

std::vector<Tensor> backward(const Tensor& y, const std::vector<Tensor>& wrt, bool create_graph) {
    if (y.numel() != 1) throw ShapeError("backward: y must be scalar");

    // Post-order topo sort over the differentiable subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t child;
    };
    std::vector<Frame> stack;
    if (y.node()->requires_grad) {
        stack.push_back({y.node().get(), 0});
        visited.insert(y.node().get());
    }
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.child < f.n->inputs.size()) {
            Node* ch = f.n->inputs[f.child++].get();
            if (ch->requires_grad && !visited.count(ch)) {
                visited.insert(ch);
                stack.push_back({ch, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    std::unordered_map<Node*, Tensor> adj;
    adj.emplace(y.node().get(), Tensor::scalar(1.0));

    GradModeGuard guard(create_graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto ait = adj.find(n);
        if (ait == adj.end() || !n->vjp) continue;
        // n is owned transitively by y; hand the vjp an aliasing handle.
        Tensor self(std::shared_ptr<Node>(y.node(), n));
        std::vector<Tensor> gs = n->vjp(self, ait->second);
        if (gs.size() != n->inputs.size()) throw ShapeError("backward: vjp arity");
        for (std::size_t i = 0; i < n->inputs.size(); ++i) {
            Node* in = n->inputs[i].get();
            if (!in->requires_grad) continue;
            auto cur = adj.find(in);
            if (cur == adj.end())
                adj.emplace(in, gs[i]);
            else
                cur->second = add(cur->second, gs[i]);
        }
    }

    std::vector<Tensor> result;
    result.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = adj.find(w.node().get());
        if (it != adj.end())
            result.push_back(it->second);
        else
            result.push_back(Tensor::zeros(w.rows(), w.cols()));
    }
    return result;
}

}  // namespace slotpi
