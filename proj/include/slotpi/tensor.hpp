#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace slotpi {

class Tensor;

// One record in the computation graph. Nodes form a DAG through `inputs`;
// `vjp` maps the adjoint of this node to adjoints of its inputs, expressed
// in graph ops so that gradients are themselves differentiable.
struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<std::vector<Tensor>(const Tensor& self, const Tensor& grad)> vjp;
    bool requires_grad = false;
};

// Dense 2-D tensor of 64-bit reals; a thin handle onto a graph node.
// Scalars are 1x1. Copy is a cheap handle copy sharing the node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor full(std::size_t rows, std::size_t cols, double v);
    static Tensor scalar(double v) { return constant(1, 1, {v}); }
    // Trainable leaf: participates in backward.
    static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> data);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t numel() const { return node_->rows * node_->cols; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
    double item() const { return node_->value[0]; }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Thread-local toggle for graph recording. Disabled inside first-order
// backward so adjoint arithmetic is not itself recorded.
bool grad_mode_enabled();
struct GradModeGuard {
    explicit GradModeGuard(bool enable);
    ~GradModeGuard();
    GradModeGuard(const GradModeGuard&) = delete;

private:
    bool prev_;
};

// Count of nodes created on this thread (instrumentation for tests).
std::uint64_t nodes_created();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor pow_const(const Tensor& a, double p);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

// ---- linear algebra / structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor rowsum(const Tensor& a);                       // NxD -> Nx1
Tensor colsum(const Tensor& a);                       // NxD -> 1xD
Tensor broadcast_col(const Tensor& a, std::size_t cols);  // Nx1 -> Nxcols
Tensor broadcast_row(const Tensor& a, std::size_t rows);  // 1xD -> rowsxD
Tensor broadcast_full(const Tensor& a, std::size_t rows, std::size_t cols);  // 1x1 -> full
Tensor sum_all(const Tensor& a);                      // -> 1x1
Tensor mean_all(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t len);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);
// Inverse embeddings used by the slice vjps: place `a` into a zero matrix.
Tensor embed_rows(const Tensor& a, std::size_t total_rows, std::size_t start);
Tensor embed_cols(const Tensor& a, std::size_t total_cols, std::size_t start);
Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx);
Tensor scatter_rows(const Tensor& a, std::vector<std::size_t> idx, std::size_t total_rows);
// Bijective reindexing of the flat payload: out[i] = a[perm[i]].
Tensor permute_flat(const Tensor& a, std::vector<std::size_t> perm,
                    std::size_t out_rows, std::size_t out_cols);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor detach(const Tensor& a);

// ---- composites ----
Tensor softmax_rows(const Tensor& a);  // stable, rows sum to 1
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x@w + b (b is 1xK)
Tensor mse(const Tensor& a, const Tensor& b);

// Reverse-mode sweep from scalar y. Returns one gradient per wrt entry,
// zeros for unreachable nodes. With create_graph the returned gradients
// are graph nodes that can be differentiated again.
std::vector<Tensor> backward(const Tensor& y, const std::vector<Tensor>& wrt, bool create_graph);

}  // namespace slotpi
